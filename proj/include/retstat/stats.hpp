#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace retstat::stats {

// Normalized histogram of a sample of counts. The histogram is truncated at
// the largest observed k; distance computations fold the reference law's
// tail mass beyond the truncation in analytically, so nothing is silently
// dropped.
struct EmpiricalPmf {
    std::vector<std::uint64_t> counts; // counts[k] = #samples equal to k
    std::uint64_t total = 0;

    double mass(std::size_t k) const {
        if (k >= counts.size() || total == 0) return 0.0;
        return static_cast<double>(counts[k]) / static_cast<double>(total);
    }
    std::size_t k_max() const { return counts.empty() ? 0 : counts.size() - 1; }
};

// errors: empty input
EmpiricalPmf empirical_pmf(std::span<const std::uint64_t> samples);

// e^{-t} t^k / k!, evaluated by the multiplicative recurrence
// poi(k+1) = poi(k) * t/(k+1); switches to the log-gamma form when e^{-t}
// would underflow.
double poisson_pmf(double t, std::size_t k);

// Upper tail sum_{j >= k} poi(t, j), clamped to [0,1].
double poisson_upper_tail(double t, std::size_t k);

// sup_k |p(k) - poi(t,k)| over all k in N_0; the reference tail beyond the
// histogram truncation competes against empirical mass zero.
double sup_distance(const EmpiricalPmf& p, double t);

struct Distance {
    double l1 = 0.0; // sum_k |p(k) - q(k)|
    double tv = 0.0; // l1 / 2
};

// Distance to the Poisson(t) reference, tail folded analytically.
Distance tv_distance(const EmpiricalPmf& p, double t);
// Distance to an explicit reference pmf (entries beyond either support
// count as zero mass).
Distance tv_distance(const EmpiricalPmf& p, std::span<const double> q);

// Least-squares fit of log(error) against log(|log rho|); kappa_hat is the
// negated slope. Points with error <= 0 are dropped and counted.
struct DecayFit {
    double kappa_hat = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> points; // (|log rho|, error) kept
    std::size_t dropped = 0;
};

// input: (rho, error) pairs; errors: fewer than 3 usable points
DecayFit fit_log_decay(std::span<const std::pair<double, double>> rho_error);

// Percentile bootstrap confidence interval for a distance statistic of a
// count sample. Per-resample seeds are derived by a counter-based scheme,
// so the interval does not depend on evaluation order or worker count.
struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
};

enum class DistanceKind { Sup, Tv };

BootstrapCi bootstrap_distance_ci(std::span<const std::uint64_t> samples, double t,
                                  DistanceKind kind, int resamples, std::uint64_t seed);

} // namespace retstat::stats
