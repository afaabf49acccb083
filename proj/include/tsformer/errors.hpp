#pragma once

#include <stdexcept>
#include <string>

namespace tsformer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree, or a parameter fails the shape audit.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A softmax row has no unmasked entry.
class DegenerateMaskError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset content rejected during ingestion or windowing.
class DataError : public Error {
public:
    enum class Kind { MissingColumn, BadValue, DateGap, DuplicateDate, NonPositiveDemand, CodeRange, TooShort, Split };

    DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Training loss became non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t step, const std::string& what)
        : Error(what), epoch_(epoch), step_(step) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t epoch_;
    std::size_t step_;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Checkpoint file is truncated, malformed, or of another format version.
class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace tsformer
