#pragma once

#include <stdexcept>
#include <string>

namespace retstat {

// Error taxonomy. The CLI maps these onto process exit codes
// (config 2, hypothesis violation 3, I/O 4).

// Malformed configuration or precondition violation on user input.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A point representation fed to an operation that cannot consume it
// (e.g. a bit-vector point handed to the cat map).
struct representation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact-arithmetic budget exhausted: bit-vector horizon, interval piece
// count, or integer matrix-power overflow.
struct budget_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Empirical measure estimate came back zero; caller should enlarge the
// orbit length or the ball.
struct measure_underflow_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A theorem hypothesis does not hold for the supplied inputs.
struct hypothesis_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Not enough usable data points for a fit.
struct insufficient_data_error : std::runtime_error {
    std::size_t largest_usable_k = 0;
    explicit insufficient_data_error(const std::string& what, std::size_t k = 0)
        : std::runtime_error(what), largest_usable_k(k) {}
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace retstat
