#pragma once

#include "dilseg/networks.hpp"

namespace dilseg::nn {

SegNetPtr make_unet(const NetworkSpec& spec);
SegNetPtr make_resunet(const NetworkSpec& spec);
SegNetPtr make_unetpp(const NetworkSpec& spec);
SegNetPtr make_mrrn(const NetworkSpec& spec);
SegNetPtr make_fpsnet(const NetworkSpec& spec);

}  // namespace dilseg::nn
