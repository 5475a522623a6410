#include "retstat/chenstein.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "retstat/errors.hpp"
#include "retstat/stats.hpp"

namespace retstat::chenstein {

namespace {

constexpr std::size_t kDpBudget = 10000; // N cap for the (step,state,count) DP

using Row2 = std::array<double, 2>;
using Mat2 = std::array<Row2, 2>;

Mat2 transition_of(const BinaryProcessModel& model) {
    if (const auto* iid = std::get_if<IIDBernoulli>(&model))
        return Mat2{Row2{1.0 - iid->eps, iid->eps}, Row2{1.0 - iid->eps, iid->eps}};
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model)) return mk->transition;
    throw config_error("transition_of: empirical model has no transition matrix");
}

Row2 initial_law(const BinaryProcessModel& model) {
    if (const auto* iid = std::get_if<IIDBernoulli>(&model))
        return Row2{1.0 - iid->eps, iid->eps};
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model)) {
        const auto pi = stationary_law(*mk);
        return Row2{pi[0], pi[1]};
    }
    throw config_error("initial_law: empirical model has no closed-form law");
}

// P(S_window = q) for a window of `len` consecutive variables whose first
// variable is drawn from `init` (possibly a defective law). f[s][c] tracks
// (state of the current variable, count so far including it).
std::vector<double> window_sum_pmf(const Mat2& T, const Row2& init, std::size_t len) {
    std::vector<std::array<double, 2>> f(len + 1, {0.0, 0.0});
    f[0][0] = init[0];
    f[1][1] = init[1];
    std::vector<std::array<double, 2>> g(len + 1);
    for (std::size_t step = 1; step < len; ++step) {
        for (auto& cell : g) cell = {0.0, 0.0};
        const std::size_t cmax = std::min(step, len);
        for (std::size_t c = 0; c <= cmax; ++c) {
            for (int s = 0; s < 2; ++s) {
                const double mass = f[c][static_cast<std::size_t>(s)];
                if (mass == 0.0) continue;
                g[c][0] += mass * T[static_cast<std::size_t>(s)][0];
                g[c + 1][1] += mass * T[static_cast<std::size_t>(s)][1];
            }
        }
        std::swap(f, g);
    }
    std::vector<double> pmf(len + 1, 0.0);
    for (std::size_t c = 0; c <= len; ++c) pmf[c] = f[c][0] + f[c][1];
    return pmf;
}

Row2 propagate(const Mat2& T, Row2 v, std::size_t steps) {
    for (std::size_t k = 0; k < steps; ++k)
        v = Row2{v[0] * T[0][0] + v[1] * T[1][0], v[0] * T[0][1] + v[1] * T[1][1]};
    return v;
}

} // namespace

std::array<double, 2> stationary_law(const TwoStateMarkov& m) {
    const double a = m.transition[0][1]; // 0 -> 1
    const double b = m.transition[1][0]; // 1 -> 0
    if (!(a + b > 0.0))
        throw hypothesis_error("TwoStateMarkov: identity chain has no unique "
                               "stationary law");
    return {b / (a + b), a / (a + b)};
}

void validate(const BinaryProcessModel& model) {
    if (const auto* iid = std::get_if<IIDBernoulli>(&model)) {
        if (!(iid->eps >= 0.0 && iid->eps <= 1.0))
            throw config_error("IIDBernoulli: eps must lie in [0,1]");
        return;
    }
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model)) {
        for (int s = 0; s < 2; ++s) {
            const auto& row = mk->transition[static_cast<std::size_t>(s)];
            if (!(row[0] >= 0.0 && row[1] >= 0.0))
                throw config_error("TwoStateMarkov: negative transition probability");
            if (std::abs(row[0] + row[1] - 1.0) > 1e-12)
                throw config_error("TwoStateMarkov: row must sum to 1");
        }
        stationary_law(*mk); // existence check
        return;
    }
    const auto& emp = std::get<EmpiricalSamples>(model);
    if (emp.rows.empty() || emp.n == 0)
        throw config_error("EmpiricalSamples: empty sample");
    for (const auto& row : emp.rows)
        if (row.size() != emp.n)
            throw config_error("EmpiricalSamples: ragged trajectory matrix");
}

std::vector<double> exact_S_pmf(const BinaryProcessModel& model, std::size_t N) {
    validate(model);
    if (std::holds_alternative<EmpiricalSamples>(model))
        throw config_error("exact_S_pmf: empirical data has no exact law; build a "
                           "histogram instead");
    if (N == 0) throw config_error("exact_S_pmf: N must be >= 1");
    if (N > kDpBudget) throw budget_error("exact_S_pmf: N exceeds the DP budget");
    return window_sum_pmf(transition_of(model), initial_law(model), N);
}

EpsEstimate compute_eps(const BinaryProcessModel& model) {
    validate(model);
    if (const auto* iid = std::get_if<IIDBernoulli>(&model)) return {iid->eps, 0.0};
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model))
        return {stationary_law(*mk)[1], 0.0};
    // stationarity lets every column contribute to the estimate of P(X_1=1)
    const auto& emp = std::get<EmpiricalSamples>(model);
    std::uint64_t ones = 0, total = 0;
    for (const auto& row : emp.rows)
        for (const std::uint8_t b : row) {
            ones += b;
            ++total;
        }
    const double mean = static_cast<double>(ones) / static_cast<double>(total);
    const double se =
        std::sqrt(std::max(0.0, mean * (1.0 - mean)) / static_cast<double>(total));
    return {mean, se};
}

R1Result compute_R1(const BinaryProcessModel& model, std::size_t N, std::size_t p_gap) {
    validate(model);
    if (p_gap < 2 || p_gap >= N) throw config_error("compute_R1: need 2 <= p < N");
    // strict ranges 0 < j < N-p, 0 < q < N-p-j
    if (p_gap + 3 > N)
        throw config_error("compute_R1: the (j,q) window is empty for this p");

    if (std::holds_alternative<IIDBernoulli>(model))
        return {0.0, 1, 1}; // independence factorizes the joint law exactly

    R1Result best{0.0, 1, 1};
    bool first = true;
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model)) {
        if (N > kDpBudget) throw budget_error("compute_R1: N exceeds the DP budget");
        const Mat2 T = mk->transition;
        const auto pi = stationary_law(*mk);
        const double eps = pi[1];
        // P(X_1 = 1, state at time p+1 = s): start in state 1, walk p steps
        const Row2 joint_init = propagate(T, Row2{0.0, pi[1]}, p_gap);
        for (std::size_t j = 1; j + p_gap < N; ++j) {
            const std::size_t len = N - j - p_gap; // window p+1 .. N-j
            if (len < 2) break;
            const auto marg = window_sum_pmf(T, Row2{pi[0], pi[1]}, len);
            const auto joint = window_sum_pmf(T, joint_init, len);
            for (std::size_t q = 1; q < len; ++q) {
                const double d = std::abs(joint[q] - eps * marg[q]);
                if (first || d > best.value) {
                    best = {d, j, q};
                    first = false;
                }
            }
        }
        return best;
    }

    const auto& emp = std::get<EmpiricalSamples>(model);
    if (emp.n < N) throw config_error("compute_R1: trajectories shorter than N");
    const double eps = compute_eps(model).value;
    const double m = static_cast<double>(emp.rows.size());
    // prefix sums per trajectory
    std::vector<std::vector<std::uint32_t>> prefix(emp.rows.size());
    for (std::size_t r = 0; r < emp.rows.size(); ++r) {
        prefix[r].assign(emp.n + 1, 0);
        for (std::size_t i = 0; i < emp.n; ++i)
            prefix[r][i + 1] = prefix[r][i] + emp.rows[r][i];
    }
    for (std::size_t j = 1; j + p_gap < N; ++j) {
        const std::size_t len = N - j - p_gap;
        if (len < 2) break;
        std::vector<double> marg(len + 1, 0.0), joint(len + 1, 0.0);
        for (std::size_t r = 0; r < emp.rows.size(); ++r) {
            // S_{p+1}^{N-j} in 1-based variable indices
            const std::uint32_t q = prefix[r][N - j] - prefix[r][p_gap];
            marg[q] += 1.0;
            if (emp.rows[r][0] == 1) joint[q] += 1.0;
        }
        for (std::size_t q = 1; q < len; ++q) {
            const double d = std::abs(joint[q] / m - eps * (marg[q] / m));
            if (first || d > best.value) {
                best = {d, j, q};
                first = false;
            }
        }
    }
    return best;
}

double compute_R2(const BinaryProcessModel& model, std::size_t p_gap) {
    validate(model);
    if (p_gap < 2) throw config_error("compute_R2: need p >= 2");
    if (const auto* iid = std::get_if<IIDBernoulli>(&model))
        return static_cast<double>(p_gap - 1) * iid->eps * iid->eps;
    if (const auto* mk = std::get_if<TwoStateMarkov>(&model)) {
        const Mat2 T = mk->transition;
        const auto pi = stationary_law(*mk);
        double sum = 0.0;
        Row2 v{0.0, 1.0}; // conditional law after starting in state 1
        for (std::size_t n = 2; n <= p_gap; ++n) {
            v = propagate(T, v, 1);
            sum += pi[1] * v[1]; // P(X_1=1) P(X_n=1 | X_1=1)
        }
        return sum;
    }
    const auto& emp = std::get<EmpiricalSamples>(model);
    if (emp.n < p_gap) throw config_error("compute_R2: trajectories shorter than p");
    double sum = 0.0;
    const double m = static_cast<double>(emp.rows.size());
    for (std::size_t n = 2; n <= p_gap; ++n) {
        std::uint64_t both = 0;
        for (const auto& row : emp.rows)
            if (row[0] == 1 && row[n - 1] == 1) ++both;
        sum += static_cast<double>(both) / m;
    }
    return sum;
}

double chen_stein_bound(const BoundInputs& in, std::size_t E_size) {
    if (!(in.eps < in.t / 2.0))
        throw hypothesis_error("chen_stein_bound: hypothesis eps < t/2 violated");
    if (in.p_gap < 2) throw hypothesis_error("chen_stein_bound: hypothesis p >= 2 violated");
    if (in.p_gap >= in.N)
        throw hypothesis_error("chen_stein_bound: hypothesis p < N violated");
    if (in.R1 < 0.0 || in.R2 < 0.0)
        throw config_error("chen_stein_bound: R1 and R2 must be nonnegative");
    const double n = static_cast<double>(in.N);
    const double per_k =
        6.0 * in.t * (n * (in.R1 + in.R2) + static_cast<double>(in.p_gap) * in.eps);
    return per_k * static_cast<double>(E_size) + 2.0 * in.t * in.t / n;
}

BinPoiTv binomial_poisson_tv(std::size_t N, double t) {
    if (N < 1) throw config_error("binomial_poisson_tv: N >= 1");
    if (!(t > 0.0 && t <= static_cast<double>(N)))
        throw config_error("binomial_poisson_tv: need 0 < t/N <= 1");
    const double p = t / static_cast<double>(N);
    BinPoiTv out;
    out.bound = 2.0 * t * t / static_cast<double>(N);

    // Bin(N, p) by the stable pmf recurrence
    std::vector<double> bin(N + 1, 0.0);
    if (p == 1.0) {
        bin[N] = 1.0;
    } else {
        // start from the largest term to avoid underflow of (1-p)^N? for the
        // parameter ranges here (1-p)^N stays comfortably inside double range
        double b = std::pow(1.0 - p, static_cast<double>(N));
        if (b == 0.0) {
            // fall back to the log form
            for (std::size_t k = 0; k <= N; ++k) {
                const double lg = std::lgamma(static_cast<double>(N + 1)) -
                                  std::lgamma(static_cast<double>(k + 1)) -
                                  std::lgamma(static_cast<double>(N - k + 1)) +
                                  static_cast<double>(k) * std::log(p) +
                                  static_cast<double>(N - k) * std::log1p(-p);
                bin[k] = std::exp(lg);
            }
        } else {
            for (std::size_t k = 0; k <= N; ++k) {
                bin[k] = b;
                b *= (static_cast<double>(N - k) / static_cast<double>(k + 1)) *
                     (p / (1.0 - p));
            }
        }
    }
    double l1 = 0.0, poi_cum = 0.0;
    double poi = stats::poisson_pmf(t, 0);
    for (std::size_t k = 0; k <= N; ++k) {
        l1 += std::abs(bin[k] - poi);
        poi_cum += poi;
        poi *= t / static_cast<double>(k + 1);
    }
    l1 += std::clamp(1.0 - poi_cum, 0.0, 1.0); // Poisson mass beyond N
    out.exact_tv = l1;
    return out;
}

ChenSteinReport make_report(const BinaryProcessModel& model, std::size_t N, double t,
                            std::size_t p_gap) {
    const EpsEstimate eps = compute_eps(model);
    if (!(eps.value < t / 2.0))
        throw hypothesis_error("make_report: hypothesis eps < t/2 violated");
    // N must be floor(t / eps); allow rounding slack of a few ulps
    if (eps.value > 0.0) {
        const double ratio = t / eps.value;
        const double n = static_cast<double>(N);
        if (ratio < n * (1.0 - 1e-9) || ratio >= (n + 1.0) * (1.0 + 1e-9))
            throw hypothesis_error("make_report: N must equal floor(t/eps)");
    }
    const R1Result r1 = compute_R1(model, N, p_gap);
    const double r2 = compute_R2(model, p_gap);
    ChenSteinReport rep;
    rep.eps = eps.value;
    rep.eps_std_error = eps.std_error;
    rep.N = N;
    rep.t_param = t;
    rep.p_gap = p_gap;
    rep.R1 = r1.value;
    rep.R1_arg_j = r1.arg_j;
    rep.R1_arg_q = r1.arg_q;
    rep.R2 = r2;
    rep.bound_per_k = 6.0 * t *
                      (static_cast<double>(N) * (r1.value + r2) +
                       static_cast<double>(p_gap) * eps.value);
    rep.binpoi_term = 2.0 * t * t / static_cast<double>(N);
    return rep;
}

std::string to_json_text(const ChenSteinReport& rep) {
    nlohmann::json j;
    j["eps"] = rep.eps;
    j["eps_std_error"] = rep.eps_std_error;
    j["N"] = rep.N;
    j["t_param"] = rep.t_param;
    j["p_gap"] = rep.p_gap;
    j["R1"] = rep.R1;
    j["R1_arg_j"] = rep.R1_arg_j;
    j["R1_arg_q"] = rep.R1_arg_q;
    j["R2"] = rep.R2;
    j["bound_per_k"] = rep.bound_per_k;
    j["binpoi_term"] = rep.binpoi_term;
    return j.dump(2);
}

} // namespace retstat::chenstein
