#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epstory {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that is malformed or violates a documented invariant.
/// The CLI maps these to exit code 1.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& reason)
        : DataError("line " + std::to_string(line) + ": " + reason), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class ArgumentError : public DataError {
public:
    using DataError::DataError;
};

/// Gradient descent produced a non-finite loss.
class DivergenceError : public DataError {
public:
    DivergenceError(int epoch, const std::string& what)
        : DataError("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Filesystem or transport failure. Exit code 2.
class IoError : public Error {
public:
    using Error::Error;
};

/// Remote embedding transport failed; the request may be retried.
class TransportError : public IoError {
public:
    TransportError(std::size_t window_index, const std::string& what)
        : IoError("window " + std::to_string(window_index) + ": " + what), window_index_(window_index) {}

    std::size_t window_index() const noexcept { return window_index_; }

private:
    std::size_t window_index_;
};

/// Peer violated the wire protocol. Not retryable.
class ProtocolError : public IoError {
public:
    ProtocolError(std::size_t window_index, const std::string& what)
        : IoError("window " + std::to_string(window_index) + ": " + what), window_index_(window_index) {}

    std::size_t window_index() const noexcept { return window_index_; }

private:
    std::size_t window_index_;
};

/// A returned vector broke the embedding invariants (non-finite, not unit norm).
class InvalidVectorError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

}  // namespace epstory
