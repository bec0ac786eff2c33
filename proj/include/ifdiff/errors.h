#pragma once

#include <stdexcept>
#include <string>

namespace ifdiff {

// Every error carries a stable machine code; the CLI prints it verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error("E_PARSE", message) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("E_SHAPE", message) {}
};

class NumericFault : public Error {
public:
    explicit NumericFault(const std::string& message) : Error("E_NUMERIC", message) {}
};

class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& message) : Error("E_GEOMETRY", message) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& message) : Error("E_CHECKPOINT", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("E_CONFIG", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("E_IO", message) {}
};

class DatasetError : public Error {
public:
    DatasetError(std::string code, const std::string& message) : Error(std::move(code), message) {}
};

}  // namespace ifdiff
