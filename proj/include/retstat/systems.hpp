#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

namespace retstat::systems {

// ---------------------------------------------------------------------------
// Point representations
// ---------------------------------------------------------------------------

// A point of [0,1) stored as its binary expansion. The doubling map is a
// left shift, so orbits are computed exactly by advancing a cursor into an
// immutable shared bit array; in plain doubles the doubling map collapses
// to 0 after ~53 iterates. Bits are packed MSB-first into 64-bit words.
class ExactBits {
public:
    ExactBits() = default;

    static ExactBits from_bits(const std::vector<int>& bits);
    // binary expansion of num/den (0 <= num < den), nbits digits, exact
    static ExactBits from_rational(std::uint64_t num, std::uint64_t den,
                                   std::size_t nbits);
    static ExactBits random(std::uint64_t seed, std::size_t nbits);

    // remaining digits after the cursor
    std::size_t remaining() const { return nbits_ - offset_; }
    // i-th digit after the cursor
    int bit(std::size_t i) const;
    // numeric value 0.b1 b2 ..., truncated to the first 64 remaining digits
    double value() const;
    // left shift by n digits (the doubling map applied n times)
    ExactBits shifted(std::size_t n) const;

    bool operator==(const ExactBits& other) const; // bit-for-bit on the suffix

private:
    std::shared_ptr<const std::vector<std::uint64_t>> words_;
    std::size_t nbits_ = 0;
    std::size_t offset_ = 0;
};

// Rational point of the 2-torus with a common denominator; entries are kept
// reduced modulo den. The cat map acts by an exact integer matrix action.
struct ExactRational2D {
    std::int64_t num_x = 0;
    std::int64_t num_y = 0;
    std::int64_t den = 1;

    static ExactRational2D make(std::int64_t nx, std::int64_t ny, std::int64_t den);
    double x() const { return static_cast<double>(num_x) / static_cast<double>(den); }
    double y() const { return static_cast<double>(num_y) / static_cast<double>(den); }
    bool operator==(const ExactRational2D&) const = default;
};

struct Float1D {
    double x = 0.0;
    bool operator==(const Float1D&) const = default;
};

struct Float2D {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Float2D&) const = default;
};

using Point = std::variant<ExactBits, ExactRational2D, Float1D, Float2D>;

bool points_equal(const Point& a, const Point& b);
int point_dim(const Point& p);
double coord_x(const Point& p);                    // 1D value, or x of a 2D point
std::pair<double, double> coord_xy(const Point& p); // 2D only

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

enum class SystemKind { Doubling, CatMap, Intermittent, Gauss };
enum class MeasureKind { Lebesgue1D, Lebesgue2D, EmpiricalBirkhoff };
enum class Metric { Interval, TorusMax, TorusEuclid };

// A concrete map with its expansion constant and invariant-measure
// descriptor. lipschitz_A plays the role of A = |DT| + |DT^-1| where that
// is defined; for the intermittent and Gauss maps it is a documented
// surrogate (see factory functions).
struct SystemSpec {
    SystemKind kind = SystemKind::Doubling;
    double alpha_pm = 0.0; // intermittent map parameter, in (0,1)
    double lipschitz_A = 2.5;
    MeasureKind measure = MeasureKind::Lebesgue1D;

    static SystemSpec doubling();
    static SystemSpec cat_map();
    // Liverani-Saussol-Vaienti: x(1 + 2^a x^a) on [0,1/2], 2x-1 on (1/2,1].
    // Surrogate A = sup|T'| + sup|1/T'| = (2+a) + 1.
    static SystemSpec intermittent(double alpha_pm);
    // Gauss map x -> frac(1/x). |T'| is unbounded near 0, so A is a
    // configurable surrogate; the default covers the region x >= 0.2.
    static SystemSpec gauss(double lipschitz_surrogate = 26.0);
};

Metric default_metric(const SystemSpec& system);

struct BallSpec {
    Point center;
    double radius_rho = 0.0; // in (0, 1/4)
    Metric metric = Metric::Interval;
};

void validate(const SystemSpec& system);
void validate(const BallSpec& ball);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// One application of T. Exact for Doubling/ExactBits and CatMap/
// ExactRational2D; double precision (with the usual shadowing caveat) for
// the float representations. errors: representation mismatch
Point apply(const SystemSpec& system, const Point& x);

// n-fold composition; the cat map uses an exact matrix power modulo den.
Point apply_n(const SystemSpec& system, const Point& x, std::uint64_t n);

// Metric distance. The (system, x, y) overload uses the system's default
// metric. Torus metrics minimize over integer shifts; Interval is the
// plain 1D distance. errors: mixed representations, Interval on 2D points
double distance(Metric metric, const Point& a, const Point& b);
double distance(const SystemSpec& system, const Point& a, const Point& b);

struct MeasureEstimate {
    double value = 0.0;
    double std_error = 0.0; // 0 for closed-form measures
};

struct BirkhoffOptions {
    std::uint64_t orbit_length = 1000000;
    std::uint64_t burn_in = 10000;
    std::uint64_t seed = 1;
    int batches = 64; // batch-means std error (orbit samples are correlated)
};

// mu(B_rho): closed form for the Lebesgue kinds (interval length / square
// area / disc area; interval balls are clipped to [0,1)); Birkhoff average
// along a burned-in orbit for EmpiricalBirkhoff.
// errors: empirical estimate with zero hits (measure underflow)
MeasureEstimate ball_measure(const SystemSpec& system, const BallSpec& ball);
MeasureEstimate ball_measure(const SystemSpec& system, const BallSpec& ball,
                             const BirkhoffOptions& opts);

struct SampleOptions {
    std::uint64_t burn_in = 10000; // for systems sampled through an orbit
    std::size_t exact_bits = 4096; // bit budget for ExactBits points
};

// Draw a point distributed by the system's invariant measure. Uniform for
// the Lebesgue systems (exact random bits for Doubling); a burned-in orbit
// point from a uniform start otherwise. Deterministic in the seed.
Point sample_invariant(const SystemSpec& system, std::uint64_t seed,
                       const SampleOptions& opts = {});

} // namespace retstat::systems
