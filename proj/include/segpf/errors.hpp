#pragma once

#include <stdexcept>
#include <string>

namespace segpf {

// All importance weights in a resampling step are zero (log-weights all -inf).
struct degenerate_weights_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A segment initializer fails to dominate the incoming transition kernel:
// some proposed first-segment state has r_m(x) = 0 while p(x | x_prev) > 0,
// detected as a fully vanishing boundary-matrix column.
struct dominance_violation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The chain of boundary matrices annihilates every particle tuple, so the
// joined estimator has an empty support (total chain sum is zero).
struct degenerate_join_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed experiment configuration (unknown key, unparsable value,
// inconsistent settings).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace segpf
