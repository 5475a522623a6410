#include "retstat/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "retstat/errors.hpp"
#include "retstat/rng.hpp"

namespace retstat::systems {

namespace {

constexpr std::int64_t kMaxDen = std::int64_t{1} << 62;

double frac(double x) {
    double f = x - std::floor(x);
    if (f >= 1.0) f = 0.0; // guard against rounding at the top
    return f;
}

double circle_dist(double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
}

std::uint64_t mod_mul(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(a) * b) % m);
}

struct Mat2Mod {
    std::uint64_t a, b, c, d;
};

Mat2Mod mat_mul(const Mat2Mod& x, const Mat2Mod& y, std::uint64_t m) {
    return Mat2Mod{
        (mod_mul(x.a, y.a, m) + mod_mul(x.b, y.c, m)) % m,
        (mod_mul(x.a, y.b, m) + mod_mul(x.b, y.d, m)) % m,
        (mod_mul(x.c, y.a, m) + mod_mul(x.d, y.c, m)) % m,
        (mod_mul(x.c, y.b, m) + mod_mul(x.d, y.d, m)) % m,
    };
}

// (2 1; 1 1)^n mod m by fast exponentiation
Mat2Mod cat_power_mod(std::uint64_t n, std::uint64_t m) {
    Mat2Mod result{1 % m, 0, 0, 1 % m};
    Mat2Mod base{2 % m, 1 % m, 1 % m, 1 % m};
    while (n > 0) {
        if (n & 1) result = mat_mul(result, base, m);
        base = mat_mul(base, base, m);
        n >>= 1;
    }
    return result;
}

double lsv_left(double x, double alpha) {
    // x (1 + 2^a x^a) on [0, 1/2]
    return x * (1.0 + std::exp2(alpha) * std::pow(x, alpha));
}

double intermittent_apply(double x, double alpha) {
    double y = x <= 0.5 ? lsv_left(x, alpha) : 2.0 * x - 1.0;
    if (y >= 1.0) y = 0.0; // T(1/2) = 1, identified with 0
    return y;
}

double gauss_apply(double x) {
    if (x == 0.0) return 0.0;
    return frac(1.0 / x);
}

} // namespace

// --------------------------------------------------------------------------
// ExactBits
// --------------------------------------------------------------------------

ExactBits ExactBits::from_bits(const std::vector<int>& bits) {
    auto words = std::make_shared<std::vector<std::uint64_t>>(
        (bits.size() + 63) / 64, 0ULL);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != 0)
            (*words)[i / 64] |= std::uint64_t{1} << (63 - i % 64);
    }
    ExactBits p;
    p.words_ = std::move(words);
    p.nbits_ = bits.size();
    return p;
}

ExactBits ExactBits::from_rational(std::uint64_t num, std::uint64_t den,
                                   std::size_t nbits) {
    if (den == 0 || num >= den)
        throw config_error("ExactBits::from_rational: need 0 <= num < den, den > 0");
    if (den > static_cast<std::uint64_t>(kMaxDen))
        throw budget_error("ExactBits::from_rational: denominator too large");
    auto words = std::make_shared<std::vector<std::uint64_t>>((nbits + 63) / 64, 0ULL);
    std::uint64_t rem = num;
    for (std::size_t i = 0; i < nbits; ++i) {
        rem <<= 1;
        if (rem >= den) {
            rem -= den;
            (*words)[i / 64] |= std::uint64_t{1} << (63 - i % 64);
        }
    }
    ExactBits p;
    p.words_ = std::move(words);
    p.nbits_ = nbits;
    return p;
}

ExactBits ExactBits::random(std::uint64_t seed, std::size_t nbits) {
    Xoshiro256pp rng(seed);
    const std::size_t nwords = (nbits + 63) / 64;
    auto words = std::make_shared<std::vector<std::uint64_t>>(nwords);
    for (auto& w : *words) w = rng.next();
    if (nbits % 64 != 0 && nwords > 0) // keep unused low bits zero
        words->back() &= ~std::uint64_t{0} << (64 - nbits % 64);
    ExactBits p;
    p.words_ = std::move(words);
    p.nbits_ = nbits;
    return p;
}

int ExactBits::bit(std::size_t i) const {
    const std::size_t j = offset_ + i;
    if (j >= nbits_) throw budget_error("ExactBits::bit: index past the bit budget");
    return static_cast<int>(((*words_)[j / 64] >> (63 - j % 64)) & 1ULL);
}

double ExactBits::value() const {
    if (!words_ || remaining() == 0) return 0.0;
    const std::size_t wi = offset_ / 64;
    const std::size_t sh = offset_ % 64;
    const auto& w = *words_;
    std::uint64_t v = w[wi] << sh;
    if (sh != 0 && wi + 1 < w.size()) v |= w[wi + 1] >> (64 - sh);
    if (remaining() < 64) // zero digits beyond the suffix
        v &= ~std::uint64_t{0} << (64 - remaining());
    return std::ldexp(static_cast<double>(v), -64);
}

ExactBits ExactBits::shifted(std::size_t n) const {
    if (n > remaining())
        throw budget_error("ExactBits: shift past the bit budget");
    ExactBits p = *this;
    p.offset_ += n;
    return p;
}

bool ExactBits::operator==(const ExactBits& other) const {
    if (remaining() != other.remaining()) return false;
    for (std::size_t i = 0; i < remaining(); ++i)
        if (bit(i) != other.bit(i)) return false;
    return true;
}

// --------------------------------------------------------------------------
// ExactRational2D
// --------------------------------------------------------------------------

ExactRational2D ExactRational2D::make(std::int64_t nx, std::int64_t ny,
                                      std::int64_t den) {
    if (den <= 0 || den > kMaxDen)
        throw config_error("ExactRational2D: denominator out of range");
    const auto reduce = [den](std::int64_t v) {
        std::int64_t r = v % den;
        if (r < 0) r += den;
        return r;
    };
    return ExactRational2D{reduce(nx), reduce(ny), den};
}

// --------------------------------------------------------------------------
// Point helpers
// --------------------------------------------------------------------------

bool points_equal(const Point& a, const Point& b) {
    if (a.index() != b.index()) return false;
    return std::visit(
        [&](const auto& pa) {
            using T = std::decay_t<decltype(pa)>;
            return pa == std::get<T>(b);
        },
        a);
}

int point_dim(const Point& p) {
    return std::holds_alternative<ExactBits>(p) || std::holds_alternative<Float1D>(p)
               ? 1
               : 2;
}

double coord_x(const Point& p) {
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ExactBits>) return v.value();
            else if constexpr (std::is_same_v<T, Float1D>) return v.x;
            else if constexpr (std::is_same_v<T, ExactRational2D>) return v.x();
            else return v.x;
        },
        p);
}

std::pair<double, double> coord_xy(const Point& p) {
    if (const auto* r = std::get_if<ExactRational2D>(&p)) return {r->x(), r->y()};
    if (const auto* f = std::get_if<Float2D>(&p)) return {f->x, f->y};
    throw representation_error("coord_xy: point is not two-dimensional");
}

// --------------------------------------------------------------------------
// SystemSpec
// --------------------------------------------------------------------------

SystemSpec SystemSpec::doubling() {
    // |T'| = 2, inverse branches have slope 1/2: A = 2 + 1/2
    return SystemSpec{SystemKind::Doubling, 0.0, 2.5, MeasureKind::Lebesgue1D};
}

SystemSpec SystemSpec::cat_map() {
    // DT = (2 1; 1 1), spectral norm (3+sqrt 5)/2 for it and its inverse
    const double a = 3.0 + std::sqrt(5.0);
    return SystemSpec{SystemKind::CatMap, 0.0, a, MeasureKind::Lebesgue2D};
}

SystemSpec SystemSpec::intermittent(double alpha_pm) {
    if (!(alpha_pm > 0.0 && alpha_pm < 1.0))
        throw config_error("intermittent: alpha_pm must lie in (0,1)");
    return SystemSpec{SystemKind::Intermittent, alpha_pm, 3.0 + alpha_pm,
                      MeasureKind::EmpiricalBirkhoff};
}

SystemSpec SystemSpec::gauss(double lipschitz_surrogate) {
    if (!(lipschitz_surrogate >= 2.0))
        throw config_error("gauss: lipschitz surrogate must be >= 2");
    return SystemSpec{SystemKind::Gauss, 0.0, lipschitz_surrogate,
                      MeasureKind::EmpiricalBirkhoff};
}

Metric default_metric(const SystemSpec& system) {
    return system.kind == SystemKind::CatMap ? Metric::TorusMax : Metric::Interval;
}

void validate(const SystemSpec& system) {
    if (!(system.lipschitz_A >= 2.0))
        throw config_error("SystemSpec: lipschitz_A must be >= 2");
    if (system.kind == SystemKind::Intermittent &&
        !(system.alpha_pm > 0.0 && system.alpha_pm < 1.0))
        throw config_error("SystemSpec: intermittent alpha_pm must lie in (0,1)");
}

void validate(const BallSpec& ball) {
    if (!(ball.radius_rho > 0.0 && ball.radius_rho < 0.25))
        throw config_error("BallSpec: radius must lie in (0, 1/4)");
    if (ball.metric == Metric::Interval && point_dim(ball.center) != 1)
        throw representation_error("BallSpec: Interval metric needs a 1D center");
    if (ball.metric != Metric::Interval && point_dim(ball.center) != 2 &&
        point_dim(ball.center) != 1)
        throw representation_error("BallSpec: bad center dimension");
}

// --------------------------------------------------------------------------
// apply / apply_n
// --------------------------------------------------------------------------

Point apply(const SystemSpec& system, const Point& x) {
    switch (system.kind) {
        case SystemKind::Doubling:
            if (const auto* e = std::get_if<ExactBits>(&x)) return e->shifted(1);
            if (const auto* f = std::get_if<Float1D>(&x))
                return Float1D{frac(2.0 * f->x)};
            throw representation_error("apply: doubling expects ExactBits or Float1D");
        case SystemKind::CatMap:
            if (const auto* r = std::get_if<ExactRational2D>(&x)) {
                const std::uint64_t m = static_cast<std::uint64_t>(r->den);
                const std::uint64_t px = static_cast<std::uint64_t>(r->num_x);
                const std::uint64_t py = static_cast<std::uint64_t>(r->num_y);
                return ExactRational2D{
                    static_cast<std::int64_t>((mod_mul(2, px, m) + py) % m),
                    static_cast<std::int64_t>((px + py) % m), r->den};
            }
            if (const auto* f = std::get_if<Float2D>(&x))
                return Float2D{frac(2.0 * f->x + f->y), frac(f->x + f->y)};
            throw representation_error(
                "apply: cat map expects ExactRational2D or Float2D");
        case SystemKind::Intermittent:
            if (const auto* f = std::get_if<Float1D>(&x))
                return Float1D{intermittent_apply(f->x, system.alpha_pm)};
            throw representation_error("apply: intermittent expects Float1D");
        case SystemKind::Gauss:
            if (const auto* f = std::get_if<Float1D>(&x))
                return Float1D{gauss_apply(f->x)};
            throw representation_error("apply: Gauss expects Float1D");
    }
    throw representation_error("apply: unknown system kind");
}

Point apply_n(const SystemSpec& system, const Point& x, std::uint64_t n) {
    if (n == 0) return x;
    if (system.kind == SystemKind::Doubling) {
        if (const auto* e = std::get_if<ExactBits>(&x)) {
            if (n > e->remaining())
                throw budget_error("apply_n: doubling horizon " + std::to_string(n) +
                                   " exceeds the bit budget");
            return e->shifted(static_cast<std::size_t>(n));
        }
    }
    if (system.kind == SystemKind::CatMap) {
        if (const auto* r = std::get_if<ExactRational2D>(&x)) {
            const std::uint64_t m = static_cast<std::uint64_t>(r->den);
            const Mat2Mod p = cat_power_mod(n, m);
            const std::uint64_t px = static_cast<std::uint64_t>(r->num_x);
            const std::uint64_t py = static_cast<std::uint64_t>(r->num_y);
            return ExactRational2D{
                static_cast<std::int64_t>((mod_mul(p.a, px, m) + mod_mul(p.b, py, m)) % m),
                static_cast<std::int64_t>((mod_mul(p.c, px, m) + mod_mul(p.d, py, m)) % m),
                r->den};
        }
    }
    Point y = x;
    for (std::uint64_t i = 0; i < n; ++i) y = systems::apply(system, y);
    return y;
}

// --------------------------------------------------------------------------
// distance
// --------------------------------------------------------------------------

double distance(Metric metric, const Point& a, const Point& b) {
    if (a.index() != b.index())
        throw representation_error("distance: mixed point representations");
    if (point_dim(a) == 1) {
        const double d = std::abs(coord_x(a) - coord_x(b));
        return metric == Metric::Interval ? d : std::min(d, 1.0 - d);
    }
    if (metric == Metric::Interval)
        throw representation_error("distance: Interval metric is one-dimensional");
    const auto [ax, ay] = coord_xy(a);
    const auto [bx, by] = coord_xy(b);
    const double dx = circle_dist(ax, bx);
    const double dy = circle_dist(ay, by);
    return metric == Metric::TorusMax ? std::max(dx, dy) : std::hypot(dx, dy);
}

double distance(const SystemSpec& system, const Point& a, const Point& b) {
    return distance(default_metric(system), a, b);
}

// --------------------------------------------------------------------------
// ball_measure
// --------------------------------------------------------------------------

namespace {

MeasureEstimate lebesgue_ball_measure(const BallSpec& ball) {
    const double rho = ball.radius_rho;
    if (point_dim(ball.center) == 1) {
        if (ball.metric == Metric::Interval) {
            const double c = coord_x(ball.center);
            const double lo = std::max(0.0, c - rho);
            const double hi = std::min(1.0, c + rho);
            return {std::max(0.0, hi - lo), 0.0};
        }
        return {std::min(1.0, 2.0 * rho), 0.0};
    }
    if (ball.metric == Metric::TorusMax) {
        const double side = std::min(1.0, 2.0 * rho);
        return {side * side, 0.0};
    }
    return {std::numbers::pi * rho * rho, 0.0};
}

} // namespace

MeasureEstimate ball_measure(const SystemSpec& system, const BallSpec& ball) {
    validate(ball);
    switch (system.measure) {
        case MeasureKind::Lebesgue1D:
        case MeasureKind::Lebesgue2D:
            return lebesgue_ball_measure(ball);
        case MeasureKind::EmpiricalBirkhoff:
            return ball_measure(system, ball, BirkhoffOptions{});
    }
    throw config_error("ball_measure: unknown measure kind");
}

MeasureEstimate ball_measure(const SystemSpec& system, const BallSpec& ball,
                             const BirkhoffOptions& opts) {
    validate(ball);
    if (system.measure != MeasureKind::EmpiricalBirkhoff)
        return lebesgue_ball_measure(ball);
    if (point_dim(ball.center) != 1)
        throw representation_error("ball_measure: Birkhoff path expects 1D systems");
    if (opts.orbit_length == 0 || opts.batches < 2)
        throw config_error("ball_measure: bad Birkhoff options");

    Xoshiro256pp rng(opts.seed);
    Point x = Point{Float1D{rng.uniform01()}};
    for (std::uint64_t i = 0; i < opts.burn_in; ++i) x = systems::apply(system, x);

    const double c = coord_x(ball.center);
    const double rho = ball.radius_rho;
    const bool torus = ball.metric != Metric::Interval;

    const std::uint64_t batches = static_cast<std::uint64_t>(opts.batches);
    const std::uint64_t per_batch = opts.orbit_length / batches;
    const std::uint64_t M = per_batch * batches;
    std::uint64_t hits_total = 0;
    double mean_sq = 0.0, mean_sum = 0.0;
    for (std::uint64_t b = 0; b < batches; ++b) {
        std::uint64_t hits = 0;
        for (std::uint64_t i = 0; i < per_batch; ++i) {
            const double v = coord_x(x);
            double d = std::abs(v - c);
            if (torus) d = std::min(d, 1.0 - d);
            hits += d <= rho ? 1 : 0;
            x = systems::apply(system, x);
        }
        hits_total += hits;
        const double m = static_cast<double>(hits) / static_cast<double>(per_batch);
        mean_sum += m;
        mean_sq += m * m;
    }
    if (hits_total == 0)
        throw measure_underflow_error(
            "ball_measure: no orbit hits; enlarge the orbit length or the radius");
    const double nb = static_cast<double>(batches);
    const double mean = mean_sum / nb;
    const double var = std::max(0.0, mean_sq / nb - mean * mean);
    const double se = std::sqrt(var / (nb - 1.0));
    return {static_cast<double>(hits_total) / static_cast<double>(M), se};
}

// --------------------------------------------------------------------------
// sample_invariant
// --------------------------------------------------------------------------

Point sample_invariant(const SystemSpec& system, std::uint64_t seed,
                       const SampleOptions& opts) {
    switch (system.kind) {
        case SystemKind::Doubling:
            return ExactBits::random(seed, opts.exact_bits);
        case SystemKind::CatMap: {
            Xoshiro256pp rng(seed);
            const double x = rng.uniform01();
            const double y = rng.uniform01();
            return Float2D{x, y};
        }
        case SystemKind::Intermittent:
        case SystemKind::Gauss: {
            Xoshiro256pp rng(seed);
            Point x = Point{Float1D{rng.uniform01()}};
            for (std::uint64_t i = 0; i < opts.burn_in; ++i) x = systems::apply(system, x);
            return x;
        }
    }
    throw config_error("sample_invariant: unknown system kind");
}

} // namespace retstat::systems
