#ifndef PEGE_ERROR_HPP
#define PEGE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pege {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand extents are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (bad magic, truncated records, ...).
class FormatError : public Error {
public:
    using Error::Error;
};

// Well-formed checkpoint that does not fit the model it is loaded into.
class CheckpointError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// NaN or Inf produced by a forward computation.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace pege

#endif // PEGE_ERROR_HPP
