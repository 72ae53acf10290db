#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdgn {

// Base of every error thrown by the library.
struct sdgn_error: std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input that is well-formed but violates a documented invariant.
struct validation_error: sdgn_error {
    using sdgn_error::sdgn_error;
};

// Malformed input record. `line` is 1-based.
struct parse_error: validation_error {
    parse_error(std::size_t line, const std::string& what):
        validation_error("line " + std::to_string(line) + ": " + what),
        line(line)
    {}
    std::size_t line;
};

// Argument outside the domain of a function (e.g. time outside horizon).
struct domain_error: validation_error {
    using validation_error::validation_error;
};

// Mismatched dimensions between two operands.
struct shape_error: validation_error {
    using validation_error::validation_error;
};

// Runtime failures: numerics, simulation blow-up, I/O.
struct runtime_failure: sdgn_error {
    using sdgn_error::sdgn_error;
};

struct numeric_fault: runtime_failure {
    numeric_fault(std::size_t neuron, const std::string& what):
        runtime_failure("neuron " + std::to_string(neuron) + ": " + what),
        neuron(neuron)
    {}
    std::size_t neuron;
};

struct simulation_error: runtime_failure {
    using runtime_failure::runtime_failure;
};

struct io_error: runtime_failure {
    using runtime_failure::runtime_failure;
};

// Internal invariant broken; indicates a bug rather than bad input.
struct invariant_fault: runtime_failure {
    using runtime_failure::runtime_failure;
};

} // namespace sdgn
