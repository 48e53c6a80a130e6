#pragma once

#include <stdexcept>
#include <string>

namespace cartoondiff {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or sizes that do not agree with an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A scalar argument (step index, probability, cutoff, ...) outside its domain.
class RangeError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced or received at an operation boundary.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// A file whose magic, version or header is not what the reader expects.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A file that ends before its header says it should.
class TruncationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step)
      : Error(what), step_(step)
    { }

    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace cartoondiff
