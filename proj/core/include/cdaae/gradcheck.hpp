#pragma once

#include "cdaae/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace cdaae {

struct GradCheckOptions {
    double eps = 1e-3;
    /// Coordinates probed per parameter; 0 probes all of them.
    std::size_t samples_per_param = 0;
    /// Lower bound on the relative-error denominator.
    double floor = 1e-8;
    /// When the one-sided slopes disagree by more than `kink_tol` (relative)
    /// the probe straddles a kink; the step is cut tenfold up to this many times.
    std::size_t kink_retries = 0;
    double kink_tol = 1e-3;
    std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients against central differences in double
/// precision.
///
/// `fn` must rebuild the scalar loss from the current parameter values and
/// be deterministic. Returns the maximum over probed coordinates of
/// |analytic − numeric| / max(|analytic|, |numeric|, floor).
double gradient_check(const std::function<BasicTensor<double>()>& fn, const std::vector<BasicTensor<double>>& params,
                      const GradCheckOptions& options = {});

} // namespace cdaae
