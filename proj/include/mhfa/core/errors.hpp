#pragma once

#include <stdexcept>
#include <string>

namespace mhfa {

/// Base for every error thrown by the workbench.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input that cannot be parsed (files, JSON bodies, model output).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input that parsed but violates a domain invariant.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public Error {
public:
    IoError(std::string path, const std::string& what)
        : Error(what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace mhfa
