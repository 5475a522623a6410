#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "retstat/errors.hpp"
#include "retstat/orbit.hpp"
#include "retstat/rng.hpp"
#include "retstat/systems.hpp"

using namespace retstat;
using namespace retstat::orbit;
using namespace retstat::systems;

namespace {

// Doubling-map oracle by pure linearity: T^n(arc) = 2^n arc mod 1, so the
// image meets the ball iff the stretched arc covers the circle or passes
// within rho of c. Independent of the piecewise interval-union code path.
bool doubling_arc_image_hits_ball(double lo, double hi, std::size_t n, double c,
                                  double rho) {
    const double scale = std::exp2(static_cast<double>(n));
    const double length = (hi - lo) * scale;
    if (length >= 1.0) return true;
    const double start = lo * scale - std::floor(lo * scale);
    // lift c just above start and test membership in [start, start+length],
    // then widen by rho on both sides
    double cc = c - std::floor(c - start); // in [start, start+1)
    return cc <= length + rho + start || cc >= start + 1.0 - rho;
}

} // namespace

TEST_CASE("hit_sequence at a fixed point is all ones") {
    const auto doubling = SystemSpec::doubling();
    const Point zero = ExactBits::from_bits(std::vector<int>(256, 0));
    const BallSpec ball{zero, 0.01, Metric::TorusMax}; // circle ball, mu = 2 rho
    const auto series = hit_sequence(doubling, ball, zero, 1.0);
    CHECK(series.N == 50);
    CHECK(series.mu_ball == doctest::Approx(0.02));
    CHECK(count_visits(series) == 50);
}

TEST_CASE("hit_sequence misses when the periodic orbit stays away") {
    const auto doubling = SystemSpec::doubling();
    const Point third = ExactBits::from_rational(1, 3, 2048);
    const BallSpec ball{Point{ExactBits::from_rational(1, 10, 2048)}, 1.0 / 1024.0,
                        Metric::Interval};
    // orbit of 1/3 is {1/3, 2/3}; the ball around 0.1 is never visited
    const auto series = hit_sequence(doubling, ball, third, 1.0);
    CHECK(series.N > 0);
    CHECK(count_visits(series) == 0);
}

TEST_CASE("hit_sequence counts the period-2 returns of 1/3") {
    const auto doubling = SystemSpec::doubling();
    const double rho = std::exp2(-10.0);
    const Point center = ExactBits::from_rational(1, 3, 600);
    const Point start = ExactBits::from_rational(1, 3, 600);
    const BallSpec ball{center, rho, Metric::Interval};
    // mu = 2 rho (interior ball), N = 512; hits exactly at even n
    const auto series = hit_sequence(doubling, ball, start, 1.0);
    CHECK(series.N == 512);
    std::uint64_t expected = 0; // brute-force oracle: T^n(1/3) = 1/3 iff n even
    for (std::size_t n = 0; n < series.N; ++n)
        if (n % 2 == 0) ++expected;
    CHECK(expected == 256);
    CHECK(count_visits(series) == expected);
    for (std::size_t n = 0; n < 8; ++n) CHECK(series.bits[n] == (n % 2 == 0 ? 1 : 0));
}

TEST_CASE("hit_sequence with exact rational cat-map orbits") {
    // (1/5, 2/5) returns after 2 steps, (1/5, 0) only after the full matrix
    // order 10; tiny balls are visited exactly on those periods
    const auto cat = SystemSpec::cat_map();
    const Point p2 = ExactRational2D::make(1, 2, 5);
    CHECK(points_equal(apply_n(cat, p2, 2), p2));
    const Point p10 = ExactRational2D::make(1, 0, 5);
    for (std::uint64_t n = 1; n < 10; ++n)
        CHECK(!points_equal(apply_n(cat, p10, n), p10));
    CHECK(points_equal(apply_n(cat, p10, 10), p10));

    const BallSpec ball{p10, 0.01, Metric::TorusMax};
    const auto series = hit_sequence(cat, ball, p10, 0.02); // N = 50
    REQUIRE(series.N == 50);
    std::uint64_t expected = 0;
    for (std::size_t n = 0; n < series.N; ++n)
        if (n % 10 == 0) ++expected;
    CHECK(expected == 5);
    CHECK(count_visits(series) == expected);
    CHECK(series.bits[0] == 1);
    CHECK(series.bits[10] == 1);
    CHECK(series.bits[5] == 0);
}

TEST_CASE("intermittent map goes through the exact interval tier") {
    const auto lsv = SystemSpec::intermittent(0.2);
    // fixed point at 0: the ball meets its own image at every n
    const BallSpec at_zero{Point{Float1D{0.0}}, 0.01, Metric::Interval};
    const auto v0 = ball_image_intersects(lsv, at_zero, 1);
    CHECK(v0.status == Verdict::Intersects);
    CHECK(v0.test_used == IntersectTest::ExactInterval);
    CHECK(ball_image_intersects(lsv, at_zero, 3).status == Verdict::Intersects);

    // a small ball deep in the expanding region moves away at n = 1
    const BallSpec moving{Point{Float1D{0.8}}, 1e-5, Metric::Interval};
    CHECK(ball_image_intersects(lsv, moving, 1).status == Verdict::Disjoint);
}

TEST_CASE("hit_sequence horizon guard") {
    const auto doubling = SystemSpec::doubling();
    const Point start = ExactBits::from_rational(1, 3, 100); // too small for N+64
    const BallSpec ball{Point{ExactBits::from_rational(1, 3, 100)}, 0.01, Metric::Interval};
    CHECK_THROWS_AS(hit_sequence(doubling, ball, start, 1.0), budget_error);
}

TEST_CASE("count_visits bounds and concatenation") {
    HitSeries s;
    s.bits = {1, 0, 1, 0, 1};
    s.N = 5;
    CHECK(count_visits(s) == 3);
    Xoshiro256pp rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        HitSeries all;
        all.N = 40;
        for (int i = 0; i < 40; ++i)
            all.bits.push_back(static_cast<std::uint8_t>(rng.below(2)));
        HitSeries head = all, tail = all;
        head.bits.assign(all.bits.begin(), all.bits.begin() + 17);
        tail.bits.assign(all.bits.begin() + 17, all.bits.end());
        CHECK(count_visits(all) == count_visits(head) + count_visits(tail));
        CHECK(count_visits(all) <= all.bits.size());
    }
}

TEST_CASE("ball_image_intersects: fixed point intersects at n=1") {
    const auto doubling = SystemSpec::doubling();
    const BallSpec ball{Point{ExactBits::from_bits(std::vector<int>(64, 0))}, 0.01,
                        Metric::TorusMax};
    const auto v = ball_image_intersects(doubling, ball, 1);
    CHECK(v.status == Verdict::Intersects);
    CHECK(v.test_used == IntersectTest::ExactInterval);
    CHECK(v.witness_n == 1);

    // cat map fixed point at the origin
    const auto cat = SystemSpec::cat_map();
    const BallSpec square{Point{Float2D{0.0, 0.0}}, 0.01, Metric::TorusMax};
    const auto vc = ball_image_intersects(cat, square, 1);
    CHECK(vc.status == Verdict::Intersects);
    CHECK(vc.test_used == IntersectTest::ExactLinear);
}

TEST_CASE("ball_image_intersects: period-2 center is disjoint at n=1") {
    const auto doubling = SystemSpec::doubling();
    const double rho = std::exp2(-20.0);
    const BallSpec ball{Point{ExactBits::from_rational(1, 3, 64)}, rho, Metric::Interval};
    const auto v = ball_image_intersects(doubling, ball, 1);
    CHECK(v.status == Verdict::Disjoint);
    // and it intersects again at n=2 (d(T^2 c, c) = 0)
    CHECK(ball_image_intersects(doubling, ball, 2).status == Verdict::Intersects);
}

TEST_CASE("exact interval tier agrees with the arc oracle for doubling") {
    const auto doubling = SystemSpec::doubling();
    Xoshiro256pp rng(43);
    int intersects = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const double c = rng.uniform01();
        const double rho = std::exp2(-8.0 - static_cast<double>(rng.below(6)));
        const std::size_t n = 1 + rng.below(6);
        const BallSpec ball{Point{Float1D{c}}, rho, Metric::TorusMax};
        const auto v = ball_image_intersects(doubling, ball, n);
        REQUIRE(v.status != Verdict::Unknown);
        const bool oracle = doubling_arc_image_hits_ball(c - rho, c + rho, n, c, rho);
        CHECK(v.status == (oracle ? Verdict::Intersects : Verdict::Disjoint));
        intersects += v.status == Verdict::Intersects ? 1 : 0;
    }
    CHECK(intersects > 0); // the sample genuinely exercises both outcomes
    CHECK(intersects < 400);
}

TEST_CASE("heuristic tier never contradicts the exact tier") {
    const auto doubling = SystemSpec::doubling();
    Xoshiro256pp rng(47);
    int disjoint_checked = 0, witness_checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double c = rng.uniform01();
        const double rho = std::exp2(-9.0 - static_cast<double>(rng.below(5)));
        const std::size_t n = 1 + rng.below(5);
        // both ball geometries; the interval metric wraps nothing, which is
        // exactly where a naive Lipschitz test goes wrong
        const Metric metric = trial % 2 == 0 ? Metric::TorusMax : Metric::Interval;
        const BallSpec ball{Point{Float1D{c}}, rho, metric};
        const auto exact = ball_image_intersects(doubling, ball, n);
        const auto heur = heuristic_ball_image_intersects(doubling, ball, n);
        if (heur.status == Verdict::Disjoint) {
            CHECK(exact.status == Verdict::Disjoint);
            ++disjoint_checked;
        }
        if (heur.status == Verdict::Intersects) {
            CHECK(exact.status == Verdict::Intersects);
            CHECK(heur.test_used == IntersectTest::SufficientCenter);
            ++witness_checked;
        }
    }
    CHECK(disjoint_checked > 0);
    CHECK(witness_checked > 0);
}

TEST_CASE("cat-map verdicts are consistent with grid witnesses") {
    const auto cat = SystemSpec::cat_map();
    Xoshiro256pp rng(53);
    int hits = 0;
    for (int trial = 0; trial < 120; ++trial) {
        const double cx = rng.uniform01(), cy = rng.uniform01();
        const double rho = std::min(0.02 + 0.2 * rng.uniform01(), 0.249);
        const std::size_t n = 1 + rng.below(3);
        const BallSpec ball{Point{Float2D{cx, cy}}, rho, Metric::TorusMax};
        const auto v = ball_image_intersects(cat, ball, n);
        REQUIRE(v.status != Verdict::Unknown);

        // forward and backward witness scans over a grid inside the ball
        bool witness_fwd = false, witness_bwd = false;
        const int g = 41;
        for (int i = 0; i < g; ++i) {
            for (int j = 0; j < g; ++j) {
                double y1 = cx - rho + 2.0 * rho * i / (g - 1);
                double y2 = cy - rho + 2.0 * rho * j / (g - 1);
                y1 -= std::floor(y1);
                y2 -= std::floor(y2);
                const Point fwd = apply_n(cat, Point{Float2D{y1, y2}}, n);
                if (distance(Metric::TorusMax, fwd, ball.center) <= rho)
                    witness_fwd = true;
                // inverse cat map: (x,y) -> (x - y, -x + 2y) mod 1
                double bx = y1, by = y2;
                for (std::size_t k = 0; k < n; ++k) {
                    const double nx = bx - by, ny = -bx + 2.0 * by;
                    bx = nx - std::floor(nx);
                    by = ny - std::floor(ny);
                }
                if (distance(Metric::TorusMax, Point{Float2D{bx, by}}, ball.center) <= rho)
                    witness_bwd = true;
            }
        }
        // a concrete witness in either direction forces Intersects (the
        // backward witness works through T^n B = T^n applied to both sets)
        if (witness_fwd || witness_bwd) {
            CHECK(v.status == Verdict::Intersects);
            ++hits;
        }
    }
    CHECK(hits > 10);
}

TEST_CASE("cat-map verdicts agree between forward and backward images") {
    // B meets T^n B exactly when B meets T^-n B; the backward test walks a
    // genuinely different arithmetic route (inverse matrix powers), so the
    // agreement exercises the exact linear tier from both sides
    const auto cat = SystemSpec::cat_map();
    using i128 = __int128;
    struct M2 { i128 a, b, c, d; };
    const auto inv_power = [](std::size_t n) {
        M2 m{1, 0, 0, 1};
        for (std::size_t k = 0; k < n; ++k)
            m = M2{m.a - m.c, m.b - m.d, -m.a + 2 * m.c, -m.b + 2 * m.d};
        return m;
    };
    const auto backward_intersects = [&](double cx, double cy, double rho,
                                         std::size_t n) {
        const M2 m = inv_power(n);
        const i128 scale = i128{1} << 62;
        const auto snap = [&](double v) {
            return static_cast<i128>(std::llround(v * static_cast<double>(
                                                          std::int64_t{1} << 62)));
        };
        const auto wrap = [&](i128 num) {
            num %= scale;
            if (num < 0) num += scale;
            if (2 * num >= scale) num -= scale;
            return static_cast<double>(num) / static_cast<double>(scale);
        };
        const i128 x = snap(cx), y = snap(cy);
        const double dx = wrap(m.a * x + m.b * y - x);
        const double dy = wrap(m.c * x + m.d * y - y);
        // separating-axis test of {M^-n u : |u|inf <= rho} against squares
        // of halfwidth rho centered at (dx,dy) + k
        const double ua = static_cast<double>(m.a) * rho, uc = static_cast<double>(m.c) * rho;
        const double vb = static_cast<double>(m.b) * rho, vd = static_cast<double>(m.d) * rho;
        const double reach = std::abs(ua) + std::abs(vb) + std::abs(uc) + std::abs(vd) +
                             2.0 * rho + 1.0;
        const long range = static_cast<long>(std::ceil(reach));
        for (long kx = -range; kx <= range; ++kx) {
            for (long ky = -range; ky <= range; ++ky) {
                const double zx = dx + kx, zy = dy + ky;
                const double axes[4][2] = {{1, 0}, {0, 1}, {-uc, ua}, {-vd, vb}};
                bool separated = false;
                for (const auto& ax : axes) {
                    double lo = 1e300, hi = -1e300;
                    for (const double su : {-1.0, 1.0})
                        for (const double sv : {-1.0, 1.0}) {
                            const double px = su * ua + sv * vb, py = su * uc + sv * vd;
                            const double proj = px * ax[0] + py * ax[1];
                            lo = std::min(lo, proj);
                            hi = std::max(hi, proj);
                        }
                    const double zc = zx * ax[0] + zy * ax[1];
                    const double half = rho * (std::abs(ax[0]) + std::abs(ax[1]));
                    if (zc - half > hi || zc + half < lo) {
                        separated = true;
                        break;
                    }
                }
                if (!separated) return true;
            }
        }
        return false;
    };

    Xoshiro256pp rng(97);
    int agree_hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const double cx = rng.uniform01(), cy = rng.uniform01();
        const double rho = std::min(0.01 + 0.2 * rng.uniform01(), 0.249);
        const std::size_t n = 1 + rng.below(4);
        const BallSpec ball{Point{Float2D{cx, cy}}, rho, Metric::TorusMax};
        const auto fwd = ball_image_intersects(cat, ball, n);
        const bool bwd = backward_intersects(cx, cy, rho, n);
        CHECK((fwd.status == Verdict::Intersects) == bwd);
        agree_hits += bwd ? 1 : 0;
    }
    CHECK(agree_hits > 20);
    CHECK(agree_hits < 200);
}

TEST_CASE("cat-map disc balls (TorusEuclid) behave like the square tier") {
    const auto cat = SystemSpec::cat_map();
    // fixed point: both shapes intersect at n = 1
    const BallSpec disc{Point{Float2D{0.0, 0.0}}, 0.01, Metric::TorusEuclid};
    CHECK(ball_image_intersects(cat, disc, 1).status == Verdict::Intersects);

    // the inscribed disc intersects only if the square does; the
    // circumscribed disc intersects whenever the square does
    Xoshiro256pp rng(59);
    for (int trial = 0; trial < 150; ++trial) {
        const double cx = rng.uniform01(), cy = rng.uniform01();
        const double rho = 0.02 + 0.15 * rng.uniform01();
        const std::size_t n = 1 + rng.below(3);
        const BallSpec square{Point{Float2D{cx, cy}}, rho, Metric::TorusMax};
        const BallSpec inner{Point{Float2D{cx, cy}}, rho * 0.70710678, Metric::TorusEuclid};
        const BallSpec outer{Point{Float2D{cx, cy}}, std::min(rho * 1.4142136, 0.249),
                             Metric::TorusEuclid};
        const auto vs = ball_image_intersects(cat, square, n).status;
        if (ball_image_intersects(cat, inner, n).status == Verdict::Intersects)
            CHECK(vs == Verdict::Intersects);
        if (vs == Verdict::Intersects && rho * 1.4142136 < 0.249)
            CHECK(ball_image_intersects(cat, outer, n).status == Verdict::Intersects);
    }
}

TEST_CASE("is_short_return_center") {
    const auto doubling = SystemSpec::doubling();
    // fixed point: witness at n=1 whenever J >= 2
    const auto v0 = is_short_return_center(
        doubling, Point{ExactBits::from_bits(std::vector<int>(64, 0))}, 1e-6, 1.0,
        Metric::TorusMax);
    CHECK(v0.status == Verdict::Intersects);
    CHECK(v0.witness_n == 1);

    // far-from-periodic center with tiny rho: disjoint for every scanned n
    const auto v1 = is_short_return_center(doubling, Point{Float1D{0.3183098861837907}},
                                           std::exp2(-18.0), 0.5, Metric::TorusMax);
    CHECK(v1.status == Verdict::Disjoint);

    // J <= 1 leaves nothing to scan
    CHECK(short_return_horizon(0.1, 0.1) == 0);
    const auto v2 = is_short_return_center(doubling, Point{Float1D{0.5}}, 0.1, 0.1,
                                           Metric::TorusMax);
    CHECK(v2.status == Verdict::Disjoint);
}

TEST_CASE("exact-tier budgets raise typed errors") {
    // forward images gain at most one piece per step (only the piece
    // holding the branch point splits), so only a tight budget can trip;
    // a ball across the branch point splits immediately
    const auto doubling = SystemSpec::doubling();
    const BallSpec ball{Point{Float1D{0.5}}, 0.01, Metric::Interval};
    IntersectOptions opts;
    opts.piece_budget = 1;
    CHECK_THROWS_AS(ball_image_intersects(doubling, ball, 2, opts), budget_error);

    // cat-map matrix powers overflow the exact integer budget near n = 90
    const auto cat = SystemSpec::cat_map();
    const BallSpec square{Point{Float2D{0.3, 0.4}}, 0.01, Metric::TorusMax};
    CHECK_THROWS_AS(ball_image_intersects(cat, square, 120), budget_error);
}

TEST_CASE("estimate_V_measure: degenerate horizon, determinism, workers") {
    const auto doubling = SystemSpec::doubling();
    const auto zero = estimate_V_measure(doubling, 0.1, 0.1, 200, 7);
    CHECK(zero.lower == 0.0);
    CHECK(zero.upper == 0.0);

    const auto a = estimate_V_measure(doubling, std::exp2(-10.0), 1.0, 400, 99, 1);
    const auto b = estimate_V_measure(doubling, std::exp2(-10.0), 1.0, 400, 99, 4);
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    CHECK(a.std_error == b.std_error);
    CHECK(a.lower <= a.upper);
    CHECK(a.upper <= 1.0);

    CHECK_THROWS_AS(estimate_V_measure(doubling, 0.01, 1.0, 50, 1), config_error);
}

TEST_CASE("Unknown verdicts widen only the upper bound") {
    // the Gauss map has no exact tier; its heuristic scan leaves Unknowns
    const auto gauss = SystemSpec::gauss();
    const auto est = estimate_V_measure(gauss, 0.02, 0.8, 300, 9);
    CHECK(est.n_unknown > 0);
    CHECK(est.lower ==
          doctest::Approx(static_cast<double>(est.n_intersects) / 300.0).epsilon(1e-15));
    CHECK(est.upper ==
          doctest::Approx(est.lower + static_cast<double>(est.n_unknown) / 300.0)
              .epsilon(1e-12));
}

TEST_CASE("cat-map V estimate stays small at rho = 1e-3") {
    const auto cat = SystemSpec::cat_map();
    // two seeds pin the value; the exact linear tier leaves no Unknowns
    const auto e1 = estimate_V_measure(cat, 1e-3, 1.0, 10000, 11, 2);
    const auto e2 = estimate_V_measure(cat, 1e-3, 1.0, 10000, 22, 2);
    CHECK(e1.n_unknown == 0);
    CHECK(e2.n_unknown == 0);
    CHECK(e1.upper < 0.05);
    CHECK(e2.upper < 0.05);
    CHECK(std::abs(e1.upper - e2.upper) <=
          3.0 * std::sqrt(e1.std_error * e1.std_error + e2.std_error * e2.std_error) +
              1e-12);
}
