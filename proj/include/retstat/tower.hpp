#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retstat/systems.hpp"

namespace retstat::tower {

// Abstract Young tower data: beam masses m(Lambda_i), return times R_i,
// polynomial tail law m(R > k) <= C1 k^-lambda, and the regularity
// constants of the distortion assumption.
struct TowerSpec {
    double lambda_tail = 5.0;   // tail exponent, > 4
    double C1_tail = 1.0;       // tail constant (smallest valid for the law)
    std::size_t max_R = 10000;  // truncation of the return-time law
    std::vector<double> base_masses;        // m(Lambda_i)
    std::vector<std::uint32_t> return_times; // R_i
    double alpha_contract = 0.5; // worst branch contraction ratio
    double C0_dist = 1.0;
    double truncated_mass = 0.0; // tail mass removed by the max_R cutoff

    double base_mass() const;
    double mean_return() const; // sum_i R_i m(Lambda_i)
};

// Return-time law m(R = k) proportional to k^-(lambda+1) for k = 1..max_R,
// split into equal-mass beams within each height class. The gcd of the
// heights is 1 because height 1 is always present.
// errors: lambda <= 4, max_R < 3, gcd != 1
TowerSpec build_tower(double lambda_tail, std::size_t max_R,
                      std::size_t n_beams_per_height = 1);

void validate(const TowerSpec& spec);

// Omega(s) = sqrt( sum_{i : R_i > s} R_i m(Lambda_i) ), non-increasing,
// zero from max_R on.
double omega(const TowerSpec& spec, std::size_t s);

// Least-squares slope of log Omega against log s over s_range; the tail
// law makes Omega(s) decay like s^{-(lambda-1)/2}.
// errors: fewer than 3 points with Omega > 0
double check_omega_decay(const TowerSpec& spec, const std::vector<std::size_t>& s_range);

// ---------------------------------------------------------------------------
// canonical interval realization
// ---------------------------------------------------------------------------

// The model tower realizes the base as [0,1) with each Lambda_i a
// sub-interval of mass-proportional length and every return branch mapping
// it onto the whole base. With wobble_delta = 0 the branches are affine and
// all Jacobian ratios along matched itineraries cancel exactly; a positive
// delta bends each branch so that log J T-hat = delta * (image coordinate)
// + const, which realizes the distortion assumption with C0 = delta.
class TowerModel {
public:
    TowerModel(TowerSpec spec, double wobble_delta = 0.0);

    const TowerSpec& spec() const { return spec_; }
    double wobble_delta() const { return delta_; }
    std::size_t n_beams() const { return lower_.size(); }
    double beam_lower(std::size_t i) const { return lower_[i]; }
    double beam_length(std::size_t i) const { return length_[i]; }
    std::size_t locate(double v) const; // beam containing base coordinate v

    // worst contraction ratio over all inverse branches
    double alpha() const;

    double branch_image(std::size_t i, double fiber) const;   // T-hat in local coords
    double branch_preimage(std::size_t i, double v) const;    // global inverse branch
    double log_jacobian(std::size_t i, double image) const;   // log J T-hat

private:
    TowerSpec spec_;
    double delta_ = 0.0;
    std::vector<double> lower_;
    std::vector<double> length_;
};

struct TowerPoint {
    std::size_t base_index = 0;
    std::uint32_t level = 0;
    double fiber = 0.0; // local coordinate in Lambda_i, in [0,1)
};

// Climb one level, or return through the full-branch Markov map from the
// top level.
TowerPoint tower_step(const TowerModel& model, const TowerPoint& x);

// First k <= horizon at which the return-map orbits of two base points land
// in distinct beams; returns horizon as the "never separated" sentinel.
// pre: both points at level 0
std::size_t separation_time(const TowerModel& model, const TowerPoint& x,
                            const TowerPoint& y, std::size_t horizon);

struct CylinderIndex {
    std::vector<std::size_t> indices; // (i_0, ..., i_l)
};

// Exact diameter of the model cylinder: the product of branch contraction
// ratios for the affine model, endpoint composition for the wobble model.
// errors: out-of-range beam index
double cylinder_diameter(const TowerModel& model, const CylinderIndex& cyl);

// Worst |log(J T-hat^q x / J T-hat^q y)| over sampled pairs with separation
// at least q. Exactly 0 for the affine model; bounded by delta/(1-alpha)
// for the wobble model.
double check_distortion(const TowerModel& model, std::size_t samples, std::size_t q,
                        std::uint64_t seed);

// First-return times of the intermittent map to the base (1/2, 1], with a
// power-law fit of the empirical survival function. The LSV tail exponent
// is 1/alpha_pm.
// errors: tail range too short to fit (carries the largest usable k)
struct ReturnTailFit {
    double exponent = 0.0;
    std::size_t k_min = 0;
    std::size_t k_max = 0;
    std::size_t n_points = 0;
};

ReturnTailFit intermittent_return_tail(const systems::SystemSpec& system,
                                       std::size_t samples, std::uint64_t seed);

// structured-text serialization for experiment reproducibility
std::string to_json_text(const TowerSpec& spec);
TowerSpec tower_from_json_text(const std::string& text);

} // namespace retstat::tower
