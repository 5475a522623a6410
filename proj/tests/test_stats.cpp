#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "retstat/errors.hpp"
#include "retstat/rng.hpp"
#include "retstat/stats.hpp"

using namespace retstat;
using namespace retstat::stats;

TEST_CASE("empirical_pmf basics") {
    const std::vector<std::uint64_t> zeros{0, 0, 0, 0};
    const auto p0 = empirical_pmf(zeros);
    CHECK(p0.mass(0) == 1.0);
    CHECK(p0.k_max() == 0);

    const std::vector<std::uint64_t> mixed{1, 2, 1, 2};
    const auto pm = empirical_pmf(mixed);
    CHECK(pm.mass(1) == 0.5);
    CHECK(pm.mass(2) == 0.5);
    CHECK(pm.mass(0) == 0.0);

    CHECK_THROWS_AS(empirical_pmf(std::vector<std::uint64_t>{}), insufficient_data_error);
}

TEST_CASE("poisson pmf values and recurrence") {
    CHECK(poisson_pmf(1.0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(poisson_pmf(2.0, 2) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-14));
    for (const double t : {0.3, 1.0, 4.5}) {
        for (std::size_t k = 0; k < 20; ++k) {
            const double ratio = poisson_pmf(t, k + 1) / poisson_pmf(t, k);
            CHECK(ratio == doctest::Approx(t / static_cast<double>(k + 1)).epsilon(1e-12));
        }
    }
    // normalization with the analytic tail remainder
    for (const double t : {0.5, 2.0}) {
        double cum = 0.0;
        for (std::size_t k = 0; k <= 40; ++k) cum += poisson_pmf(t, k);
        CHECK(cum + poisson_upper_tail(t, 41) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(poisson_upper_tail(t, 41) <= std::pow(t, 41) / std::tgamma(42.0));
    }
}

TEST_CASE("sup_distance") {
    // point mass at 0 against Poi(1): the gap at k=0 dominates
    const auto point = empirical_pmf(std::vector<std::uint64_t>{0, 0, 0});
    CHECK(sup_distance(point, 1.0) ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

    // an exactly-Poisson histogram is only off by Monte Carlo noise; a
    // large inverse-cdf sample gets within a few permille
    Xoshiro256pp rng(7);
    std::vector<std::uint64_t> draws;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform01();
        double cum = 0.0;
        std::uint64_t k = 0;
        for (;; ++k) {
            cum += poisson_pmf(1.0, k);
            if (u < cum || k > 50) break;
        }
        draws.push_back(k);
    }
    const auto pmf = empirical_pmf(draws);
    CHECK(sup_distance(pmf, 1.0) < 0.01);
    CHECK(tv_distance(pmf, 1.0).tv < 0.01);
    // sup never exceeds the L1 sum
    CHECK(sup_distance(pmf, 1.0) <= tv_distance(pmf, 1.0).l1 + 1e-15);
}

TEST_CASE("sup_distance sees the reference tail beyond the histogram") {
    // all mass at 0, t large: the sup is attained at the Poisson mode, far
    // beyond the histogram truncation
    const auto point = empirical_pmf(std::vector<std::uint64_t>{0});
    const double sup = sup_distance(point, 30.0);
    CHECK(sup == doctest::Approx(1.0 - poisson_pmf(30.0, 0)).epsilon(1e-12));
}

TEST_CASE("tv_distance metric properties") {
    const auto p = empirical_pmf(std::vector<std::uint64_t>{0, 1, 1, 2});
    CHECK(tv_distance(p, std::vector<double>{0.25, 0.5, 0.25}).tv ==
          doctest::Approx(0.0).epsilon(1e-15));

    // disjoint supports
    const auto q = empirical_pmf(std::vector<std::uint64_t>{5, 5});
    CHECK(tv_distance(q, std::vector<double>{1.0}).tv == doctest::Approx(1.0));

    // symmetry and triangle inequality on random triples
    Xoshiro256pp rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto draw = [&](std::uint64_t hi) {
            std::vector<std::uint64_t> s;
            for (int i = 0; i < 30; ++i) s.push_back(rng.below(hi));
            return empirical_pmf(s);
        };
        const auto a = draw(5), b = draw(5), c = draw(5);
        const auto as_vec = [](const EmpiricalPmf& pmf) {
            std::vector<double> v(pmf.counts.size());
            for (std::size_t k = 0; k < v.size(); ++k) v[k] = pmf.mass(k);
            return v;
        };
        const double ab = tv_distance(a, as_vec(b)).tv;
        const double ba = tv_distance(b, as_vec(a)).tv;
        const double ac = tv_distance(a, as_vec(c)).tv;
        const double cb = tv_distance(c, as_vec(b)).tv;
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab <= ac + cb + 1e-12);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("fit_log_decay recovers planted exponents") {
    // error = |log rho|^-2 exactly
    std::vector<std::pair<double, double>> pts;
    for (const double rho : {1e-2, 1e-3, 1e-4, 1e-5}) {
        const double alr = -std::log(rho);
        pts.emplace_back(rho, std::pow(alr, -2.0));
    }
    const auto fit = fit_log_decay(pts);
    CHECK(fit.kappa_hat == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-10));

    // constant error: zero exponent
    std::vector<std::pair<double, double>> flat;
    for (const double rho : {1e-2, 1e-3, 1e-4}) flat.emplace_back(rho, 0.125);
    CHECK(fit_log_decay(flat).kappa_hat == doctest::Approx(0.0).epsilon(1e-12));

    // nonpositive errors are dropped and counted
    std::vector<std::pair<double, double>> with_zero = pts;
    with_zero.emplace_back(1e-6, 0.0);
    const auto fit2 = fit_log_decay(with_zero);
    CHECK(fit2.dropped == 1);
    CHECK(fit2.kappa_hat == doctest::Approx(2.0).epsilon(1e-10));

    CHECK_THROWS_AS(fit_log_decay(std::vector<std::pair<double, double>>{{0.1, 1.0}, {0.01, 1.0}}),
                    insufficient_data_error);
}

TEST_CASE("bootstrap ci brackets the point estimate and is deterministic") {
    Xoshiro256pp rng(3);
    std::vector<std::uint64_t> sample;
    for (int i = 0; i < 2000; ++i) sample.push_back(rng.below(4));
    const auto pmf = empirical_pmf(sample);
    const double sup = sup_distance(pmf, 1.0);
    const auto ci = bootstrap_distance_ci(sample, 1.0, DistanceKind::Sup, 200, 99);
    CHECK(ci.lo <= sup + 0.05);
    CHECK(ci.hi >= sup - 0.05);
    CHECK(ci.lo <= ci.hi);
    const auto ci2 = bootstrap_distance_ci(sample, 1.0, DistanceKind::Sup, 200, 99);
    CHECK(ci.lo == ci2.lo);
    CHECK(ci.hi == ci2.hi);
}
