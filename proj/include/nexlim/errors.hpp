#pragma once

#include <stdexcept>
#include <string>

namespace nexlim {

// Contract violation on an argument (bad domain, mismatched sizes, ...).
struct argument_error : std::invalid_argument {
    explicit argument_error(const std::string& what) : std::invalid_argument(what) {}
};

// The request is well-formed but beyond what this implementation computes
// (e.g. exact cut-norm above the block-count cap).
struct capability_error : std::runtime_error {
    explicit capability_error(const std::string& what) : std::runtime_error(what) {}
};

// A trajectory left the finite range.
struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

// Singular dynamics lost the pairwise separation they need to stay well-posed.
struct separation_error : std::runtime_error {
    explicit separation_error(const std::string& what) : std::runtime_error(what) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

struct config_error : std::runtime_error {
    int line = 0;
    config_error(const std::string& what, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what : what),
          line(line_no) {}
};

}  // namespace nexlim
