#include "architectures.hpp"
#include "unet.hpp"

namespace dilseg::nn {

SegNetPtr make_resunet(const NetworkSpec& spec) { return std::make_shared<UNetLike>(spec, true); }

}  // namespace dilseg::nn
