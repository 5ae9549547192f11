#ifndef DIVREG_ERROR_HPP
#define DIVREG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace divreg {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- linear algebra ---

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NotSymmetric : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

// --- similarity / regularizers ---

class InvalidGamma : public Error {
public:
    using Error::Error;
};

class BatchTooSmall : public Error {
public:
    using Error::Error;
};

// --- network ---

class LabelOutOfRange : public Error {
public:
    using Error::Error;
};

/// Non-finite value (NaN/Inf) escaped a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

// --- data loading ---

class BadMagic : public Error {
public:
    using Error::Error;
};

class TruncatedFile : public Error {
public:
    using Error::Error;
};

class CountMismatch : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class NonIntegerLabel : public Error {
public:
    using Error::Error;
};

class SingleClass : public Error {
public:
    using Error::Error;
};

// --- config / harness ---

class SchemaError : public Error {
public:
    using Error::Error;
};

class UnknownVariant : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Generic precondition violation where no more specific error applies.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace divreg

#endif // DIVREG_ERROR_HPP
