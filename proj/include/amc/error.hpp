#ifndef AMC_ERROR_HPP
#define AMC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace amc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
struct DimensionError : Error {
    using Error::Error;
};

// Spatial geometry impossible (e.g. convolution output would be empty).
struct GeometryError : Error {
    using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Dataset / file content problems.
struct DataError : Error {
    using Error::Error;
};

// Invalid run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// A zero-norm embedding reached the cosine classifier.
struct DegenerateEmbeddingError : Error {
    using Error::Error;
};

// A non-finite value surfaced where training cannot continue.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace amc

#endif
