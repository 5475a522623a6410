#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace retstat::chenstein {

// ---------------------------------------------------------------------------
// stationary {0,1}-valued process models
// ---------------------------------------------------------------------------

struct IIDBernoulli {
    double eps = 0.0; // P(X_1 = 1)
};

// Two-state chain started from its stationary law (the theorem requires a
// stationary process). row[s][s'] = P(s -> s'), states {0,1}.
struct TwoStateMarkov {
    std::array<std::array<double, 2>, 2> transition{};
};

// M independent sampled trajectories of length N each.
struct EmpiricalSamples {
    std::size_t n = 0;                            // trajectory length
    std::vector<std::vector<std::uint8_t>> rows;  // M x n
};

using BinaryProcessModel = std::variant<IIDBernoulli, TwoStateMarkov, EmpiricalSamples>;

void validate(const BinaryProcessModel& model);

// stationary law of a two-state chain; errors: no unique stationary law
std::array<double, 2> stationary_law(const TwoStateMarkov& m);

// ---------------------------------------------------------------------------
// exact laws and the theorem's ingredients
// ---------------------------------------------------------------------------

// Exact distribution of S = X_1 + ... + X_N by dynamic programming over
// (step, state, count). errors: EmpiricalSamples (use the stats histogram)
std::vector<double> exact_S_pmf(const BinaryProcessModel& model, std::size_t N);

struct EpsEstimate {
    double value = 0.0;
    double std_error = 0.0; // 0 for the exact model kinds
};

// eps = P(X_1 = 1): exact stationary probability, or the pooled sample mean
// for empirical data.
EpsEstimate compute_eps(const BinaryProcessModel& model);

// R_1 = sup over 0 < j < N-p, 0 < q < N-p-j of
//   | P(X_1 = 1 and S_{p+1}^{N-j} = q) - eps P(S_{p+1}^{N-j} = q) |.
// The attaining (j,q) is reported; ties break toward the smallest j, then
// the smallest q. Zero by independence for IIDBernoulli.
// errors: empty (j,q) grid
struct R1Result {
    double value = 0.0;
    std::size_t arg_j = 0;
    std::size_t arg_q = 0;
};

R1Result compute_R1(const BinaryProcessModel& model, std::size_t N, std::size_t p_gap);

// R_2 = sum_{n=2}^{p} P(X_1 = 1 and X_n = 1); (p-1) eps^2 for IID.
double compute_R2(const BinaryProcessModel& model, std::size_t p_gap);

// ---------------------------------------------------------------------------
// the explicit bound
// ---------------------------------------------------------------------------

struct BoundInputs {
    double eps = 0.0;
    std::size_t N = 0;
    double t = 0.0;
    std::size_t p_gap = 0;
    double R1 = 0.0;
    double R2 = 0.0;
};

// 6 t #E ( N (R1 + R2) + p eps ) + 2 t^2 / N — the proof-chain constant made
// explicit (per-k comparison with the iid sum, plus the binomial-to-Poisson
// total-variation term).
// errors: violated hypothesis, named (eps < t/2, 2 <= p < N)
double chen_stein_bound(const BoundInputs& in, std::size_t E_size);

// Exact total-variation sum  sum_k |Bin(N, t/N)(k) - Poi(t)(k)|  against the
// 2 t^2 / N bound. pre: N >= 1, 0 < t <= N
struct BinPoiTv {
    double exact_tv = 0.0; // the full L1 sum, as in the estimate
    double bound = 0.0;    // 2 t^2 / N
};

BinPoiTv binomial_poisson_tv(std::size_t N, double t);

// Everything the bound consumed, serialized for reproducibility.
struct ChenSteinReport {
    double eps = 0.0;
    double eps_std_error = 0.0;
    std::size_t N = 0;
    double t_param = 0.0;
    std::size_t p_gap = 0;
    double R1 = 0.0;
    std::size_t R1_arg_j = 0;
    std::size_t R1_arg_q = 0;
    double R2 = 0.0;
    double bound_per_k = 0.0;   // 6 t ( N (R1+R2) + p eps )
    double binpoi_term = 0.0;   // 2 t^2 / N
    double bound_total(std::size_t E_size) const {
        return bound_per_k * static_cast<double>(E_size) + binpoi_term;
    }
};

ChenSteinReport make_report(const BinaryProcessModel& model, std::size_t N, double t,
                            std::size_t p_gap);

std::string to_json_text(const ChenSteinReport& report);

} // namespace retstat::chenstein
