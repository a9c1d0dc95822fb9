#pragma once

#include <stdexcept>
#include <string>

namespace trajcogn {

// Base for all library failures. The CLI maps these to a JSON error record
// and a nonzero exit code.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// A single malformed input record; carries the 1-based line number.
class RecordError : public Error {
public:
    RecordError(std::size_t line, const std::string& message)
        : Error("record", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DatasetError : public Error {
public:
    explicit DatasetError(const std::string& message) : Error("dataset", message) {}
};

class NetworkError : public Error {
public:
    explicit NetworkError(const std::string& message) : Error("network", message) {}
};

class MatchError : public Error {
public:
    MatchError(std::size_t point_index, const std::string& message)
        : Error("match", "point " + std::to_string(point_index) + ": " + message),
          point_index_(point_index) {}

    std::size_t point_index() const { return point_index_; }

private:
    std::size_t point_index_;
};

class ModelError : public Error {
public:
    explicit ModelError(const std::string& message) : Error("model", message) {}
};

class TrainError : public Error {
public:
    explicit TrainError(const std::string& message) : Error("train", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

}  // namespace trajcogn
