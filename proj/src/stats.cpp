#include "retstat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retstat/errors.hpp"
#include "retstat/rng.hpp"

namespace retstat::stats {

EmpiricalPmf empirical_pmf(std::span<const std::uint64_t> samples) {
    if (samples.empty()) throw insufficient_data_error("empirical_pmf: empty sample");
    const std::uint64_t k_max = *std::max_element(samples.begin(), samples.end());
    EmpiricalPmf pmf;
    pmf.counts.assign(static_cast<std::size_t>(k_max) + 1, 0);
    for (std::uint64_t s : samples) ++pmf.counts[static_cast<std::size_t>(s)];
    pmf.total = samples.size();
    return pmf;
}

double poisson_pmf(double t, std::size_t k) {
    if (!(t > 0.0)) throw config_error("poisson_pmf: t must be positive");
    if (t < 700.0) {
        double p = std::exp(-t);
        for (std::size_t j = 0; j < k; ++j) p *= t / static_cast<double>(j + 1);
        return p;
    }
    // e^{-t} underflows; evaluate in log space
    const double kk = static_cast<double>(k);
    return std::exp(kk * std::log(t) - t - std::lgamma(kk + 1.0));
}

double poisson_upper_tail(double t, std::size_t k) {
    if (k == 0) return 1.0;
    double cum = 0.0;
    double p = poisson_pmf(t, 0);
    for (std::size_t j = 0; j < k; ++j) {
        cum += p;
        p *= t / static_cast<double>(j + 1);
    }
    return std::clamp(1.0 - cum, 0.0, 1.0);
}

double sup_distance(const EmpiricalPmf& p, double t) {
    const std::size_t k_hist = p.k_max();
    double sup = 0.0;
    double poi = poisson_pmf(t, 0);
    std::size_t k = 0;
    for (;; ++k) {
        const double diff = std::abs(p.mass(k) - poi);
        sup = std::max(sup, diff);
        // past the histogram and past the Poisson mode the pmf only
        // decreases, so once it drops below the current sup we are done
        if (k > k_hist && static_cast<double>(k) > t && poi < sup) break;
        if (k > k_hist + 10000) break; // hard stop, unreachable in practice
        poi *= t / static_cast<double>(k + 1);
    }
    return sup;
}

Distance tv_distance(const EmpiricalPmf& p, double t) {
    Distance d;
    double poi = poisson_pmf(t, 0);
    double cum = 0.0;
    for (std::size_t k = 0; k <= p.k_max(); ++k) {
        d.l1 += std::abs(p.mass(k) - poi);
        cum += poi;
        poi *= t / static_cast<double>(k + 1);
    }
    // reference mass beyond the truncation faces empirical mass zero
    d.l1 += std::clamp(1.0 - cum, 0.0, 1.0);
    d.tv = 0.5 * d.l1;
    return d;
}

Distance tv_distance(const EmpiricalPmf& p, std::span<const double> q) {
    Distance d;
    const std::size_t n = std::max(p.counts.size(), q.size());
    for (std::size_t k = 0; k < n; ++k) {
        const double qk = k < q.size() ? q[k] : 0.0;
        d.l1 += std::abs(p.mass(k) - qk);
    }
    d.tv = 0.5 * d.l1;
    return d;
}

DecayFit fit_log_decay(std::span<const std::pair<double, double>> rho_error) {
    if (rho_error.size() < 3)
        throw insufficient_data_error("fit_log_decay: need at least 3 points");
    DecayFit fit;
    std::vector<double> xs, ys;
    for (const auto& [rho, err] : rho_error) {
        if (!(rho > 0.0 && rho < 1.0))
            throw config_error("fit_log_decay: rho must lie in (0,1)");
        if (!(err > 0.0)) {
            ++fit.dropped;
            continue;
        }
        const double abs_log_rho = -std::log(rho);
        fit.points.emplace_back(abs_log_rho, err);
        xs.push_back(std::log(abs_log_rho));
        ys.push_back(std::log(err));
    }
    if (xs.size() < 3)
        throw insufficient_data_error("fit_log_decay: fewer than 3 usable points",
                                      xs.size());
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw config_error("fit_log_decay: rho values not distinct");
    const double slope = sxy / sxx;
    fit.kappa_hat = -slope;
    fit.intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (slope * xs[i] + fit.intercept);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0)
                              : (ss_res == 0.0 ? 1.0 : 0.0);
    return fit;
}

BootstrapCi bootstrap_distance_ci(std::span<const std::uint64_t> samples, double t,
                                  DistanceKind kind, int resamples, std::uint64_t seed) {
    if (samples.empty())
        throw insufficient_data_error("bootstrap_distance_ci: empty sample");
    if (resamples < 2) throw config_error("bootstrap_distance_ci: resamples < 2");
    std::vector<double> stat(static_cast<std::size_t>(resamples));
    std::vector<std::uint64_t> draw(samples.size());
    for (int r = 0; r < resamples; ++r) {
        Xoshiro256pp rng(derive_seed(seed, 0x626f6f74ULL, static_cast<std::uint64_t>(r)));
        for (auto& d : draw) d = samples[rng.below(samples.size())];
        const EmpiricalPmf pmf = empirical_pmf(draw);
        stat[static_cast<std::size_t>(r)] =
            kind == DistanceKind::Sup ? sup_distance(pmf, t) : tv_distance(pmf, t).tv;
    }
    std::sort(stat.begin(), stat.end());
    const auto pick = [&](double q) {
        const double pos = q * static_cast<double>(stat.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        if (i + 1 >= stat.size()) return stat.back();
        return stat[i] * (1.0 - frac) + stat[i + 1] * frac;
    };
    return BootstrapCi{pick(0.025), pick(0.975)};
}

} // namespace retstat::stats
