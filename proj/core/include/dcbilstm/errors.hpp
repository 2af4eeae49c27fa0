#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcbilstm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid model / training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Width of a loaded record disagrees with the declared dimension.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A sequence of length zero was passed where at least one position is required.
class EmptySequenceError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Loss or gradient became NaN/Inf.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace dcbilstm
