#pragma once

#include <stdexcept>
#include <string>

namespace mkgc {

// Error taxonomy, mapped to process exit codes by the CLI:
//   io_error -> 1, usage_error -> 2, everything else (invariant breach) -> 3.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct value_error : std::runtime_error {
    explicit value_error(const std::string& msg) : std::runtime_error("value error: " + msg) {}
};

struct vocab_error : std::runtime_error {
    explicit vocab_error(const std::string& msg) : std::runtime_error("vocabulary error: " + msg) {}
};

struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

struct state_error : std::runtime_error {
    explicit state_error(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

} // namespace mkgc
