#pragma once

#include <stdexcept>
#include <string>

namespace memebg {

// Root of every error thrown by the library. The CLI maps subclasses onto
// exit codes: DivergenceError -> 3, everything else -> 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class JoinError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class DegenerateVarianceError : public Error {
public:
    using Error::Error;
};

}  // namespace memebg
