#include "retstat/orbit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "retstat/errors.hpp"
#include "retstat/parallel.hpp"
#include "retstat/rng.hpp"

namespace retstat::orbit {

using systems::BallSpec;
using systems::ExactRational2D;
using systems::Float1D;
using systems::Float2D;
using systems::Metric;
using systems::Point;
using systems::SystemKind;
using systems::SystemSpec;

namespace {

constexpr std::size_t kGuardBits = 64;

// ---------------------------------------------------------------------------
// hit testing
// ---------------------------------------------------------------------------

struct BallTester {
    double cx = 0.0, cy = 0.0;
    double rho = 0.0;
    Metric metric = Metric::Interval;
    int dim = 1;

    explicit BallTester(const BallSpec& ball)
        : rho(ball.radius_rho), metric(ball.metric), dim(systems::point_dim(ball.center)) {
        if (dim == 1) {
            cx = systems::coord_x(ball.center);
        } else {
            std::tie(cx, cy) = systems::coord_xy(ball.center);
        }
    }

    bool contains(const Point& p) const {
        if (dim == 1) {
            double d = std::abs(systems::coord_x(p) - cx);
            if (metric != Metric::Interval) d = std::min(d, 1.0 - d);
            return d <= rho;
        }
        const auto [px, py] = systems::coord_xy(p);
        double dx = std::abs(px - cx);
        dx = std::min(dx, 1.0 - dx);
        double dy = std::abs(py - cy);
        dy = std::min(dy, 1.0 - dy);
        const double d = metric == Metric::TorusMax ? std::max(dx, dy) : std::hypot(dx, dy);
        return d <= rho;
    }
};

// ---------------------------------------------------------------------------
// exact interval-union images (1D piecewise monotone maps)
// ---------------------------------------------------------------------------

// closed subintervals of [0,1], sorted and disjoint after merge()
using IntervalSet = std::vector<std::pair<double, double>>;

void merge_in_place(IntervalSet& set) {
    std::sort(set.begin(), set.end());
    IntervalSet out;
    for (const auto& piece : set) {
        if (!out.empty() && piece.first <= out.back().second)
            out.back().second = std::max(out.back().second, piece.second);
        else
            out.push_back(piece);
    }
    set = std::move(out);
}

// The metric ball as a set of closed intervals (two arcs when a torus ball
// wraps, clipped when an interval-metric ball leaves [0,1)).
IntervalSet ball_arcs(double c, double rho, Metric metric) {
    IntervalSet arcs;
    if (metric == Metric::Interval) {
        arcs.emplace_back(std::max(0.0, c - rho), std::min(1.0, c + rho));
        return arcs;
    }
    const double lo = c - rho, hi = c + rho;
    if (lo < 0.0) {
        arcs.emplace_back(0.0, hi);
        arcs.emplace_back(lo + 1.0, 1.0);
    } else if (hi > 1.0) {
        arcs.emplace_back(lo, 1.0);
        arcs.emplace_back(0.0, hi - 1.0);
    } else {
        arcs.emplace_back(lo, hi);
    }
    merge_in_place(arcs);
    return arcs;
}

// One forward image step under a full pair of increasing branches split at
// 1/2. Both maps send 1/2 to 1, identified with 0, so the closure point 0
// is kept whenever an image reaches the right endpoint.
IntervalSet step_image(const SystemSpec& system, const IntervalSet& pieces,
                       std::size_t piece_budget) {
    const auto left = [&](double x) {
        return system.kind == SystemKind::Doubling
                   ? 2.0 * x
                   : x * (1.0 + std::exp2(system.alpha_pm) * std::pow(x, system.alpha_pm));
    };
    const auto right = [&](double x) { return 2.0 * x - 1.0; };

    IntervalSet out;
    const auto push = [&](double lo, double hi) {
        lo = std::clamp(lo, 0.0, 1.0);
        hi = std::clamp(hi, 0.0, 1.0);
        if (lo > hi) return;
        out.emplace_back(lo, hi);
        if (hi >= 1.0) out.emplace_back(0.0, 0.0); // 1 is identified with 0
    };
    for (const auto& [a, b] : pieces) {
        if (a <= 0.5) push(left(a), left(std::min(b, 0.5)));
        if (b > 0.5) push(right(std::max(a, 0.5)), right(b));
    }
    merge_in_place(out);
    if (out.size() > piece_budget)
        throw budget_error("ball_image_intersects: interval pieces exceed budget; "
                           "use a smaller n");
    return out;
}

bool sets_intersect(const IntervalSet& a, const IntervalSet& b) {
    for (const auto& [alo, ahi] : a)
        for (const auto& [blo, bhi] : b)
            if (alo <= bhi && blo <= ahi) return true;
    return false;
}

ShortReturnVerdict exact_interval_verdict(const SystemSpec& system, const BallSpec& ball,
                                          std::size_t n, const IntersectOptions& opts) {
    const double c = systems::coord_x(ball.center);
    IntervalSet image = ball_arcs(c, ball.radius_rho, ball.metric);
    for (std::size_t k = 0; k < n; ++k)
        image = step_image(system, image, opts.piece_budget);
    const IntervalSet ball_set = ball_arcs(c, ball.radius_rho, ball.metric);
    ShortReturnVerdict verdict;
    verdict.test_used = IntersectTest::ExactInterval;
    if (sets_intersect(image, ball_set)) {
        verdict.status = Verdict::Intersects;
        verdict.witness_n = n;
    } else {
        verdict.status = Verdict::Disjoint;
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// exact linear images (cat map)
// ---------------------------------------------------------------------------

using i128 = __int128;

struct Mat2I {
    i128 a = 1, b = 0, c = 0, d = 1;
};

constexpr i128 kEntryCap = i128{1} << 62;

Mat2I cat_power_exact(std::size_t n) {
    Mat2I m;
    for (std::size_t k = 0; k < n; ++k) {
        // multiply by (2 1; 1 1)
        const Mat2I next{2 * m.a + m.b, m.a + m.b, 2 * m.c + m.d, m.c + m.d};
        if (next.a > kEntryCap || next.b > kEntryCap || next.c > kEntryCap ||
            next.d > kEntryCap)
            throw budget_error("ball_image_intersects: cat-map power overflows the "
                               "exact matrix budget at n=" + std::to_string(n));
        m = next;
    }
    return m;
}

// T^n c - c on the torus, components wrapped to [-1/2, 1/2). Exact for
// rational centers; float centers are snapped to a 2^-62 grid first.
std::pair<double, double> cat_displacement(const Mat2I& m, const Point& center) {
    if (const auto* r = std::get_if<ExactRational2D>(&center)) {
        const i128 den = r->den;
        const auto wrap = [&](i128 num) {
            num %= den;
            if (num < 0) num += den;
            if (2 * num >= den) num -= den;
            return static_cast<double>(num) / static_cast<double>(den);
        };
        const i128 dx = m.a * r->num_x + m.b * r->num_y - r->num_x;
        const i128 dy = m.c * r->num_x + m.d * r->num_y - r->num_y;
        return {wrap(dx), wrap(dy)};
    }
    const auto [cx, cy] = systems::coord_xy(center);
    const i128 scale = i128{1} << 62;
    const auto snap = [&](double v) {
        return static_cast<i128>(std::llround(v * static_cast<double>(std::int64_t{1} << 62)));
    };
    const i128 x = snap(cx), y = snap(cy);
    const auto wrap = [&](i128 num) {
        num %= scale;
        if (num < 0) num += scale;
        if (2 * num >= scale) num -= scale;
        return static_cast<double>(num) / static_cast<double>(scale);
    };
    return {wrap(m.a * x + m.b * y - x), wrap(m.c * x + m.d * y - y)};
}

struct Vec2 {
    double x = 0.0, y = 0.0;
};

// separating-axis test: parallelogram {M u : |u|_inf <= rho} against the
// axis-aligned square of halfwidth rho centered at z
bool parallelogram_meets_square(const Mat2I& m, double rho, Vec2 z) {
    const Vec2 u{static_cast<double>(m.a) * rho, static_cast<double>(m.c) * rho};
    const Vec2 v{static_cast<double>(m.b) * rho, static_cast<double>(m.d) * rho};
    const std::array<Vec2, 4> para = {Vec2{u.x + v.x, u.y + v.y}, Vec2{u.x - v.x, u.y - v.y},
                                      Vec2{-u.x + v.x, -u.y + v.y},
                                      Vec2{-u.x - v.x, -u.y - v.y}};
    const std::array<Vec2, 4> axes = {Vec2{1.0, 0.0}, Vec2{0.0, 1.0},
                                      Vec2{-u.y, u.x}, Vec2{-v.y, v.x}};
    for (const auto& ax : axes) {
        double para_lo = 1e300, para_hi = -1e300;
        for (const auto& p : para) {
            const double proj = p.x * ax.x + p.y * ax.y;
            para_lo = std::min(para_lo, proj);
            para_hi = std::max(para_hi, proj);
        }
        const double zc = z.x * ax.x + z.y * ax.y;
        const double half = rho * (std::abs(ax.x) + std::abs(ax.y));
        if (zc - half > para_hi || zc + half < para_lo) return false;
    }
    return true;
}

// squared distance from z to the ellipse {M u : |u|_2 <= rho}; constrained
// least squares solved by bisection on the Lagrange multiplier
double dist_to_ellipse(const Mat2I& m, double rho, Vec2 z) {
    const double a = static_cast<double>(m.a) * rho, b = static_cast<double>(m.b) * rho;
    const double c = static_cast<double>(m.c) * rho, d = static_cast<double>(m.d) * rho;
    // unconstrained minimizer u* = A^{-1} z (det A = rho^2 det M = rho^2)
    const double det = a * d - b * c;
    const double ux = (d * z.x - b * z.y) / det;
    const double uy = (-c * z.x + a * z.y) / det;
    if (ux * ux + uy * uy <= 1.0) return 0.0;
    // w(l) = (A^T A + l I)^{-1} A^T z, |w(l)| decreasing in l; find |w| = 1
    const double g11 = a * a + c * c, g12 = a * b + c * d, g22 = b * b + d * d;
    const double h1 = a * z.x + c * z.y, h2 = b * z.x + d * z.y;
    const auto norm_w = [&](double l) {
        const double m11 = g11 + l, m12 = g12, m22 = g22 + l;
        const double dd = m11 * m22 - m12 * m12;
        const double wx = (m22 * h1 - m12 * h2) / dd;
        const double wy = (-m12 * h1 + m11 * h2) / dd;
        return std::array<double, 3>{wx, wy, wx * wx + wy * wy};
    };
    double lo = 0.0, hi = std::max(1.0, std::hypot(h1, h2));
    while (norm_w(hi)[2] > 1.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (norm_w(mid)[2] > 1.0 ? lo : hi) = mid;
    }
    const auto w = norm_w(hi);
    const double ex = a * w[0] + b * w[1] - z.x;
    const double ey = c * w[0] + d * w[1] - z.y;
    return std::hypot(ex, ey);
}

ShortReturnVerdict exact_linear_verdict(const BallSpec& ball, std::size_t n,
                                        const IntersectOptions& opts) {
    const double rho = ball.radius_rho;
    const Mat2I m = cat_power_exact(n);
    const auto [dx, dy] = cat_displacement(m, ball.center);

    // lattice translates that could touch M^n B + B
    const double reach =
        (static_cast<double>(m.a > m.c ? m.a : m.c) + static_cast<double>(m.b > m.d ? m.b : m.d)) *
            rho + 2.0 * rho + 1.0;
    const long range = static_cast<long>(std::ceil(reach));
    if ((2 * range + 1) * (2 * range + 1) >
        static_cast<long>(opts.piece_budget))
        throw budget_error("ball_image_intersects: lattice enumeration exceeds the "
                           "budget; use a smaller n");
    bool hit = false;
    for (long kx = -range; kx <= range && !hit; ++kx) {
        for (long ky = -range; ky <= range && !hit; ++ky) {
            const Vec2 z{dx + static_cast<double>(kx), dy + static_cast<double>(ky)};
            if (ball.metric == Metric::TorusMax)
                hit = parallelogram_meets_square(m, rho, z);
            else
                hit = dist_to_ellipse(m, rho, z) <= rho;
        }
    }
    ShortReturnVerdict verdict;
    verdict.test_used = IntersectTest::ExactLinear;
    if (hit) {
        verdict.status = Verdict::Intersects;
        verdict.witness_n = n;
    } else {
        verdict.status = Verdict::Disjoint;
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// heuristic tier
// ---------------------------------------------------------------------------

ShortReturnVerdict heuristic_verdict(const SystemSpec& system, const BallSpec& ball,
                                     std::size_t n, const IntersectOptions& opts) {
    const Point tn_c = systems::apply_n(system, ball.center, n);
    // The disjointness implication needs the metric in which T is Lipschitz.
    // For the 1D maps that is the circle distance (the interval distance
    // jumps across the wrap); an interval ball sits inside the circle ball
    // of the same radius, so the test stays valid for interval balls.
    const Metric lipschitz_metric =
        systems::point_dim(ball.center) == 1 ? Metric::TorusMax : ball.metric;
    const double dc = systems::distance(lipschitz_metric, tn_c, ball.center);
    const double rho = ball.radius_rho;
    const double expansion = std::pow(system.lipschitz_A, static_cast<double>(n));

    ShortReturnVerdict verdict;
    if (dc > (expansion + 1.0) * rho) {
        verdict.status = Verdict::Disjoint;
        verdict.test_used = IntersectTest::NecessaryLipschitz;
        return verdict;
    }
    // witness search: a concrete y in B with T^n y in B certifies the
    // intersection; without a witness we never report Intersects here
    const double c = systems::coord_x(ball.center);
    const BallTester tester(ball);
    const int grid = std::max(3, opts.witness_grid);
    for (int i = 0; i < grid; ++i) {
        double y = c - rho + 2.0 * rho * static_cast<double>(i) / static_cast<double>(grid - 1);
        if (ball.metric == Metric::Interval) {
            y = std::clamp(y, 0.0, std::nextafter(1.0, 0.0));
        } else {
            y = y - std::floor(y);
        }
        const Point image = systems::apply_n(system, Point{Float1D{y}}, n);
        if (tester.contains(image)) {
            verdict.status = Verdict::Intersects;
            verdict.witness_n = n;
            verdict.test_used = IntersectTest::SufficientCenter;
            return verdict;
        }
    }
    verdict.status = Verdict::Unknown;
    verdict.test_used = IntersectTest::SufficientCenter;
    return verdict;
}

} // namespace

// ---------------------------------------------------------------------------
// hit sequences
// ---------------------------------------------------------------------------

HitSeries hit_sequence(const SystemSpec& system, const BallSpec& ball,
                       const Point& start, double t) {
    return hit_sequence(system, ball, start, t, ball_measure(system, ball).value);
}

HitSeries hit_sequence(const SystemSpec& system, const BallSpec& ball,
                       const Point& start, double t, double mu_ball) {
    systems::validate(ball);
    if (!(t > 0.0)) throw config_error("hit_sequence: t must be positive");
    if (!(mu_ball > 0.0))
        throw measure_underflow_error("hit_sequence: ball measure is not positive");
    const double n_real = std::floor(t / mu_ball);
    if (n_real > 1e12) throw budget_error("hit_sequence: horizon too large");
    const std::size_t N = static_cast<std::size_t>(n_real);

    if (const auto* e = std::get_if<systems::ExactBits>(&start)) {
        if (e->remaining() < N + kGuardBits)
            throw budget_error("hit_sequence: horizon " + std::to_string(N) +
                               " exceeds the exact-bit budget");
    }

    HitSeries series;
    series.ball = ball;
    series.t_param = t;
    series.N = N;
    series.mu_ball = mu_ball;
    series.bits.resize(N);

    const BallTester tester(ball);
    Point x = start;
    for (std::size_t n = 0; n < N; ++n) {
        series.bits[n] = tester.contains(x) ? 1 : 0;
        if (n + 1 < N) x = systems::apply(system, x);
    }
    return series;
}

std::uint64_t count_visits(const HitSeries& series) {
    std::uint64_t s = 0;
    for (const std::uint8_t b : series.bits) s += b;
    return s;
}

// ---------------------------------------------------------------------------
// short-return verdicts
// ---------------------------------------------------------------------------

ShortReturnVerdict heuristic_ball_image_intersects(const SystemSpec& system,
                                                   const BallSpec& ball, std::size_t n,
                                                   const IntersectOptions& opts) {
    systems::validate(ball);
    if (n < 1) throw config_error("ball_image_intersects: n must be >= 1");
    return heuristic_verdict(system, ball, n, opts);
}

ShortReturnVerdict ball_image_intersects(const SystemSpec& system, const BallSpec& ball,
                                         std::size_t n, const IntersectOptions& opts) {
    systems::validate(ball);
    if (n < 1) throw config_error("ball_image_intersects: n must be >= 1");
    switch (system.kind) {
        case SystemKind::Doubling:
        case SystemKind::Intermittent:
            return exact_interval_verdict(system, ball, n, opts);
        case SystemKind::CatMap:
            return exact_linear_verdict(ball, n, opts);
        case SystemKind::Gauss:
            return heuristic_verdict(system, ball, n, opts);
    }
    throw config_error("ball_image_intersects: unknown system kind");
}

std::size_t short_return_horizon(double rho, double a_frak) {
    if (!(rho > 0.0 && rho < 1.0)) throw config_error("short_return_horizon: rho in (0,1)");
    if (!(a_frak > 0.0)) throw config_error("short_return_horizon: a_frak > 0");
    return static_cast<std::size_t>(std::floor(a_frak * -std::log(rho)));
}

ShortReturnVerdict is_short_return_center(const SystemSpec& system, const Point& center,
                                          double rho, double a_frak,
                                          const IntersectOptions& opts) {
    return is_short_return_center(system, center, rho, a_frak,
                                  systems::default_metric(system), opts);
}

ShortReturnVerdict is_short_return_center(const SystemSpec& system, const Point& center,
                                          double rho, double a_frak, Metric metric,
                                          const IntersectOptions& opts) {
    const std::size_t J = short_return_horizon(rho, a_frak);
    const BallSpec ball{center, rho, metric};
    ShortReturnVerdict result;
    result.status = Verdict::Disjoint; // empty scan range is vacuously disjoint
    result.test_used = IntersectTest::NecessaryLipschitz;
    bool any_unknown = false;
    for (std::size_t n = 1; n < J; ++n) {
        const ShortReturnVerdict v = ball_image_intersects(system, ball, n, opts);
        if (v.status == Verdict::Intersects) return v;
        if (v.status == Verdict::Unknown) any_unknown = true;
        result.test_used = v.test_used;
    }
    if (any_unknown) result.status = Verdict::Unknown;
    return result;
}

VEstimate estimate_V_measure(const SystemSpec& system, double rho, double a_frak,
                             std::size_t samples, std::uint64_t seed, int workers,
                             const IntersectOptions& opts) {
    if (samples < 100) throw config_error("estimate_V_measure: need samples >= 100");
    systems::SampleOptions sample_opts;
    sample_opts.exact_bits = 256; // verdicts only need the center value

    std::vector<std::uint8_t> code(samples, 0); // 0 disjoint, 1 unknown, 2 intersects
    parallel_for(samples, workers, [&](std::size_t i) {
        const std::uint64_t si = derive_seed(seed, 0x56726831ULL, i);
        const Point center = systems::sample_invariant(system, si, sample_opts);
        const ShortReturnVerdict v =
            is_short_return_center(system, center, rho, a_frak, opts);
        code[i] = v.status == Verdict::Intersects ? 2
                  : v.status == Verdict::Unknown ? 1
                                                 : 0;
    });

    VEstimate est;
    est.samples = samples;
    for (std::size_t i = 0; i < samples; ++i) { // ordered fold
        if (code[i] == 2) ++est.n_intersects;
        if (code[i] == 1) ++est.n_unknown;
    }
    const double n = static_cast<double>(samples);
    est.lower = static_cast<double>(est.n_intersects) / n;
    est.upper = static_cast<double>(est.n_intersects + est.n_unknown) / n;
    est.std_error = std::sqrt(std::max(0.0, est.upper * (1.0 - est.upper)) / n);
    return est;
}

} // namespace retstat::orbit
