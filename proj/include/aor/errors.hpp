#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aor {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Observation has (numerically) zero probability under the current belief.
class ZeroEvidence : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A class whose total likelihood mass collapsed below the normalization floor.
class DegenerateClass : public Error {
public:
    DegenerateClass(std::size_t label, const std::string& what)
        : Error(what), label_(label) {}
    std::size_t label() const noexcept { return label_; }

private:
    std::size_t label_;
};

class InvalidDesign : public Error {
public:
    using Error::Error;
};

class InvalidParams : public Error {
public:
    using Error::Error;
};

class InstanceTooLarge : public Error {
public:
    using Error::Error;
};

class ZeroBehaviorProb : public Error {
public:
    using Error::Error;
};

class MissingValue : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line where parsing stopped.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

/// Run configuration problem; `field()` names the offending key path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace aor
