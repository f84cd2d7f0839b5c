#pragma once

#include <stdexcept>
#include <string>

namespace ivusseg {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatch. Message names the offending axis.
struct DimError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration (presets, sizes, flags, checkpoints
// loaded into the wrong architecture). Maps to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Dataset problems: unreadable files, missing mask counterparts, bad image
// headers. Maps to exit code 3.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or other numeric aborts during training. Exit code 4.
struct NumericError : Error {
    using Error::Error;
};

} // namespace ivusseg
