#pragma once

#include <stdexcept>
#include <string>

namespace dilseg {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Training diverged (non-finite loss) or could not proceed.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace dilseg
