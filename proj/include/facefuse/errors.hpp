#pragma once

#include <stdexcept>
#include <string>

namespace facefuse {

// Error taxonomy. The CLI maps validation-type failures (config, data,
// format, dimension) to exit code 1 and everything else, including broken
// internal contracts, to 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace facefuse
