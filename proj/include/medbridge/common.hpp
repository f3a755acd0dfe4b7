#pragma once

#include <stdexcept>
#include <string>

namespace medbridge {

// File could not be opened or read/written.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A record is malformed: missing field, wrong type, bad enum value.
// `line` is 1-based when the error comes from a line-oriented file, 0 otherwise.
struct SchemaError : std::runtime_error {
    SchemaError(const std::string& msg, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
    int line;
};

inline constexpr double kProbEps = 1e-9;

}  // namespace medbridge
