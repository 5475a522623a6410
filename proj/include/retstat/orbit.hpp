#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "retstat/systems.hpp"

namespace retstat::orbit {

// The indicator sequence X_n = 1_B(T^n y), n = 0..N-1, with the parameters
// that sized it: N = floor(t / mu(B)).
struct HitSeries {
    std::vector<std::uint8_t> bits;
    systems::BallSpec ball;
    double t_param = 0.0;
    std::size_t N = 0;
    double mu_ball = 0.0;
};

// errors: measure underflow propagated; exact-bit horizon exceeded
HitSeries hit_sequence(const systems::SystemSpec& system, const systems::BallSpec& ball,
                       const systems::Point& start, double t);
// overload with the ball measure already resolved (per-ball measures vary
// near the interval boundary, and empirical measures carry their own seed)
HitSeries hit_sequence(const systems::SystemSpec& system, const systems::BallSpec& ball,
                       const systems::Point& start, double t, double mu_ball);

std::uint64_t count_visits(const HitSeries& series);

// ---------------------------------------------------------------------------
// Very-short-return tests: does B intersect T^n B?
// ---------------------------------------------------------------------------

enum class Verdict { Intersects, Disjoint, Unknown };

enum class IntersectTest {
    SufficientCenter,  // witness point y in B with T^n y in B
    NecessaryLipschitz, // d(T^n c, c) > (A^n + 1) rho forces disjointness
    ExactInterval,     // exact interval-union image (1D piecewise monotone)
    ExactLinear,       // exact linear image (cat map)
};

struct ShortReturnVerdict {
    Verdict status = Verdict::Unknown;
    std::optional<std::size_t> witness_n;
    IntersectTest test_used = IntersectTest::SufficientCenter;
};

struct IntersectOptions {
    std::size_t piece_budget = 1 << 14; // interval-union size cap
    int witness_grid = 65;              // witness search resolution (heuristic tier)
};

// Tier selection: exact interval-union images for the 1D piecewise-monotone
// maps (Doubling, Intermittent), the exact linear-image test for CatMap,
// and the Lipschitz/witness pair for everything else. The heuristic tier
// never certifies Intersects without a concrete witness.
// errors: piece budget / matrix power overflow (suggest smaller n)
ShortReturnVerdict ball_image_intersects(const systems::SystemSpec& system,
                                         const systems::BallSpec& ball, std::size_t n,
                                         const IntersectOptions& opts = {});

// The Lipschitz/witness fallback tier on its own, for soundness comparisons
// against the exact tiers.
ShortReturnVerdict heuristic_ball_image_intersects(const systems::SystemSpec& system,
                                                   const systems::BallSpec& ball,
                                                   std::size_t n,
                                                   const IntersectOptions& opts = {});

// Scan n = 1 .. J-1 with J = floor(a_frak |log rho|). First Intersects wins
// (with its witness); all-Disjoint gives Disjoint; otherwise Unknown. An
// empty scan range (J <= 1) is Disjoint.
ShortReturnVerdict is_short_return_center(const systems::SystemSpec& system,
                                          const systems::Point& center, double rho,
                                          double a_frak,
                                          const IntersectOptions& opts = {});
ShortReturnVerdict is_short_return_center(const systems::SystemSpec& system,
                                          const systems::Point& center, double rho,
                                          double a_frak, systems::Metric metric,
                                          const IntersectOptions& opts = {});

// Monte Carlo estimate of mu(V_rho). Unknown verdicts count toward the
// upper bound only; std_error is the binomial error of the upper fraction.
// Centers are folded in index order, so the result is independent of the
// worker count.
struct VEstimate {
    double lower = 0.0;
    double upper = 0.0;
    double std_error = 0.0;
    std::size_t n_intersects = 0;
    std::size_t n_unknown = 0;
    std::size_t samples = 0;
};

VEstimate estimate_V_measure(const systems::SystemSpec& system, double rho,
                             double a_frak, std::size_t samples, std::uint64_t seed,
                             int workers = 1, const IntersectOptions& opts = {});

// floor(a_frak * |log rho|), the very-short-return horizon
std::size_t short_return_horizon(double rho, double a_frak);

} // namespace retstat::orbit
