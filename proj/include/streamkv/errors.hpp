#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamkv {

// All fatal conditions surface as exceptions rooted here so the CLI can
// map them onto exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidConfigError : public Error {
public:
    explicit InvalidConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid config:";
        for (const auto& s : v) out += " [" + s + "]";
        return out;
    }
    std::vector<std::string> violations_;
};

class DimensionMismatchError : public Error {
public:
    explicit DimensionMismatchError(const std::string& msg)
        : Error("dimension mismatch: " + msg) {}
};

class NonFiniteActivationError : public Error {
public:
    explicit NonFiniteActivationError(const std::string& msg)
        : Error("non-finite activation: " + msg) {}
};

class TraceFormatError : public Error {
public:
    TraceFormatError(const std::string& msg, std::size_t byte_offset)
        : Error("trace format error at byte " + std::to_string(byte_offset) +
                ": " + msg),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

class EmptyInputError : public Error {
public:
    explicit EmptyInputError(const std::string& msg)
        : Error("empty input: " + msg) {}
};

class EmptyWindowError : public Error {
public:
    EmptyWindowError() : Error("rank window is empty") {}
};

class NegativeInputError : public Error {
public:
    explicit NegativeInputError(const std::string& msg)
        : Error("negative input: " + msg) {}
};

class BudgetTooSmallError : public Error {
public:
    explicit BudgetTooSmallError(const std::string& msg)
        : Error("budget too small: " + msg) {}
};

class NoMergeTargetsError : public Error {
public:
    NoMergeTargetsError() : Error("no merge targets available") {}
};

class MissingTokenError : public Error {
public:
    explicit MissingTokenError(const std::string& msg)
        : Error("missing token: " + msg) {}
};

class GridMismatchError : public Error {
public:
    explicit GridMismatchError(const std::string& msg)
        : Error("grid mismatch: " + msg) {}
};

class PipelineError : public Error {
public:
    explicit PipelineError(const std::string& msg)
        : Error("pipeline error: " + msg) {}
};

}  // namespace streamkv
