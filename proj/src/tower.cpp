#include "retstat/tower.hpp"
#include <limits>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "retstat/errors.hpp"
#include "retstat/rng.hpp"

namespace retstat::tower {

double TowerSpec::base_mass() const {
    return std::accumulate(base_masses.begin(), base_masses.end(), 0.0);
}

double TowerSpec::mean_return() const {
    double s = 0.0;
    for (std::size_t i = 0; i < base_masses.size(); ++i)
        s += static_cast<double>(return_times[i]) * base_masses[i];
    return s;
}

void validate(const TowerSpec& spec) {
    if (!(spec.lambda_tail > 4.0))
        throw config_error("TowerSpec: lambda_tail must exceed 4");
    if (spec.base_masses.size() != spec.return_times.size() || spec.base_masses.empty())
        throw config_error("TowerSpec: masses and return times must align");
    for (const double m : spec.base_masses)
        if (!(m > 0.0)) throw config_error("TowerSpec: masses must be positive");
    std::uint32_t g = 0;
    for (const std::uint32_t r : spec.return_times) {
        if (r == 0 || r > spec.max_R)
            throw config_error("TowerSpec: return time out of range");
        g = std::gcd(g, r);
    }
    if (g != 1) throw config_error("TowerSpec: gcd of return times must be 1");
    if (!(spec.alpha_contract > 0.0 && spec.alpha_contract < 1.0))
        throw config_error("TowerSpec: alpha_contract must lie in (0,1)");
    // tail law m(R > k) <= C1 k^-lambda
    std::vector<double> tail_mass(spec.max_R + 1, 0.0);
    for (std::size_t i = 0; i < spec.base_masses.size(); ++i)
        tail_mass[spec.return_times[i]] += spec.base_masses[i];
    double tail = 0.0;
    for (std::size_t k = spec.max_R; k >= 1; --k) {
        if (k < spec.max_R) tail += tail_mass[k + 1];
        const double bound =
            spec.C1_tail * std::pow(static_cast<double>(k), -spec.lambda_tail);
        if (tail > bound * (1.0 + 1e-12))
            throw config_error("TowerSpec: tail law violated at k=" + std::to_string(k));
    }
}

TowerSpec build_tower(double lambda_tail, std::size_t max_R,
                      std::size_t n_beams_per_height) {
    if (!(lambda_tail > 4.0)) throw config_error("build_tower: lambda_tail must exceed 4");
    if (max_R < 3) throw config_error("build_tower: max_R must be >= 3");
    if (n_beams_per_height == 0)
        throw config_error("build_tower: need at least one beam per height");

    TowerSpec spec;
    spec.lambda_tail = lambda_tail;
    spec.max_R = max_R;

    // m(R = k) proportional to k^-(lambda+1), normalized to base mass 1
    std::vector<double> law(max_R + 1, 0.0);
    double z = 0.0;
    for (std::size_t k = 1; k <= max_R; ++k) {
        law[k] = std::pow(static_cast<double>(k), -(lambda_tail + 1.0));
        z += law[k];
    }
    // removed tail mass, relative to the same normalization
    double removed = 0.0;
    for (std::size_t k = max_R + 1; k <= 100 * max_R; ++k)
        removed += std::pow(static_cast<double>(k), -(lambda_tail + 1.0));
    spec.truncated_mass = removed / z;

    spec.base_masses.reserve(max_R * n_beams_per_height);
    spec.return_times.reserve(max_R * n_beams_per_height);
    for (std::size_t k = 1; k <= max_R; ++k) {
        const double beam_mass = law[k] / z / static_cast<double>(n_beams_per_height);
        for (std::size_t b = 0; b < n_beams_per_height; ++b) {
            spec.base_masses.push_back(beam_mass);
            spec.return_times.push_back(static_cast<std::uint32_t>(k));
        }
    }

    // smallest C1 making the tail law hold for every k >= 1
    double c1 = 0.0, tail = 0.0;
    for (std::size_t k = max_R; k >= 1; --k) {
        if (k < max_R) tail += law[k + 1] / z;
        c1 = std::max(c1, tail * std::pow(static_cast<double>(k), lambda_tail));
    }
    spec.C1_tail = std::max(c1, 1e-12);

    // canonical model constants: worst branch ratio is the heaviest beam
    spec.alpha_contract = *std::max_element(spec.base_masses.begin(), spec.base_masses.end());
    spec.C0_dist = 1.0;
    validate(spec);
    return spec;
}

double omega(const TowerSpec& spec, std::size_t s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.base_masses.size(); ++i)
        if (spec.return_times[i] > s)
            sum += static_cast<double>(spec.return_times[i]) * spec.base_masses[i];
    return std::sqrt(sum);
}

double check_omega_decay(const TowerSpec& spec, const std::vector<std::size_t>& s_range) {
    std::vector<double> xs, ys;
    for (const std::size_t s : s_range) {
        const double w = omega(spec, s);
        if (w > 0.0 && s > 0) {
            xs.push_back(std::log(static_cast<double>(s)));
            ys.push_back(std::log(w));
        }
    }
    if (xs.size() < 3)
        throw insufficient_data_error("check_omega_decay: fewer than 3 usable points",
                                      xs.size());
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw config_error("check_omega_decay: s values not distinct");
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// TowerModel
// ---------------------------------------------------------------------------

TowerModel::TowerModel(TowerSpec spec, double wobble_delta)
    : spec_(std::move(spec)), delta_(wobble_delta) {
    validate(spec_);
    if (delta_ < 0.0) throw config_error("TowerModel: wobble delta must be >= 0");
    const double total = spec_.base_mass();
    lower_.resize(spec_.base_masses.size());
    length_.resize(spec_.base_masses.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < spec_.base_masses.size(); ++i) {
        lower_[i] = acc;
        length_[i] = spec_.base_masses[i] / total;
        acc += length_[i];
    }
    if (alpha() >= 1.0)
        throw config_error("TowerModel: wobble makes a branch non-contracting");
}

std::size_t TowerModel::locate(double v) const {
    const auto it = std::upper_bound(lower_.begin(), lower_.end(), v);
    const std::size_t i = it == lower_.begin() ? 0 : static_cast<std::size_t>(it - lower_.begin()) - 1;
    return std::min(i, lower_.size() - 1);
}

double TowerModel::alpha() const {
    const double worst_len = *std::max_element(length_.begin(), length_.end());
    if (delta_ == 0.0) return worst_len;
    // inverse-branch slope l_i phi'(v) is largest at v = 0
    return worst_len * delta_ / (1.0 - std::exp(-delta_));
}

double TowerModel::branch_image(std::size_t i, double fiber) const {
    (void)i;
    if (delta_ == 0.0) return fiber;
    // inverse of phi(v) = (1 - e^{-d v}) / (1 - e^{-d})
    const double v = -std::log1p(-(1.0 - std::exp(-delta_)) * fiber) / delta_;
    return std::clamp(v, 0.0, std::nextafter(1.0, 0.0));
}

double TowerModel::branch_preimage(std::size_t i, double v) const {
    if (delta_ == 0.0) return lower_[i] + length_[i] * v;
    const double phi = (1.0 - std::exp(-delta_ * v)) / (1.0 - std::exp(-delta_));
    return lower_[i] + length_[i] * phi;
}

double TowerModel::log_jacobian(std::size_t i, double image) const {
    if (delta_ == 0.0) return -std::log(length_[i]);
    return delta_ * image +
           std::log((1.0 - std::exp(-delta_)) / (delta_ * length_[i]));
}

TowerPoint tower_step(const TowerModel& model, const TowerPoint& x) {
    const auto& spec = model.spec();
    if (x.base_index >= model.n_beams())
        throw config_error("tower_step: beam index out of range");
    if (x.level + 1 < spec.return_times[x.base_index])
        return TowerPoint{x.base_index, x.level + 1, x.fiber};
    // return branch: image in global base coordinates, then re-localize
    const double v = model.branch_image(x.base_index, x.fiber);
    const std::size_t j = model.locate(v);
    const double local = (v - model.beam_lower(j)) / model.beam_length(j);
    return TowerPoint{j, 0, std::clamp(local, 0.0, std::nextafter(1.0, 0.0))};
}

std::size_t separation_time(const TowerModel& model, const TowerPoint& x,
                            const TowerPoint& y, std::size_t horizon) {
    if (x.level != 0 || y.level != 0)
        throw config_error("separation_time: points must sit at base level 0");
    TowerPoint a = x, b = y;
    for (std::size_t k = 0; k < horizon; ++k) {
        if (a.base_index != b.base_index) return k;
        // advance both through the return map in one go
        const auto advance = [&](const TowerPoint& p) {
            const double v = model.branch_image(p.base_index, p.fiber);
            const std::size_t j = model.locate(v);
            const double local = (v - model.beam_lower(j)) / model.beam_length(j);
            return TowerPoint{j, 0, std::clamp(local, 0.0, std::nextafter(1.0, 0.0))};
        };
        a = advance(a);
        b = advance(b);
    }
    return horizon;
}

double cylinder_diameter(const TowerModel& model, const CylinderIndex& cyl) {
    if (cyl.indices.empty()) throw config_error("cylinder_diameter: empty index");
    for (const std::size_t i : cyl.indices)
        if (i >= model.n_beams())
            throw config_error("cylinder_diameter: beam index out of range "
                               "(cylinder empty)");
    if (model.wobble_delta() == 0.0) {
        double d = 1.0;
        for (const std::size_t i : cyl.indices) d *= model.beam_length(i);
        return d;
    }
    // compose inverse branches on the endpoints, innermost symbol last
    double lo = 0.0, hi = 1.0;
    for (auto it = cyl.indices.rbegin(); it != cyl.indices.rend(); ++it) {
        lo = model.branch_preimage(*it, lo);
        hi = model.branch_preimage(*it, hi);
    }
    return hi - lo;
}

double check_distortion(const TowerModel& model, std::size_t samples, std::size_t q,
                        std::uint64_t seed) {
    if (q == 0) return 0.0;
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        Xoshiro256pp rng(derive_seed(seed, 0x64697374ULL, s));
        // draw a q-cylinder by following a random base point's itinerary
        CylinderIndex cyl;
        cyl.indices.reserve(q);
        {
            double v = rng.uniform01();
            for (std::size_t k = 0; k < q; ++k) {
                const std::size_t i = model.locate(v);
                cyl.indices.push_back(i);
                const double local = (v - model.beam_lower(i)) / model.beam_length(i);
                v = model.branch_image(i, std::clamp(local, 0.0, 1.0));
            }
        }
        // two points inside that cylinder have separation >= q
        double lo = 0.0, hi = 1.0;
        for (auto it = cyl.indices.rbegin(); it != cyl.indices.rend(); ++it) {
            lo = model.branch_preimage(*it, lo);
            hi = model.branch_preimage(*it, hi);
        }
        const double xa = lo + (hi - lo) * rng.uniform(0.05, 0.45);
        const double xb = lo + (hi - lo) * rng.uniform(0.55, 0.95);

        const auto log_jac_q = [&](double x0) {
            double x = x0, total = 0.0;
            for (std::size_t k = 0; k < q; ++k) {
                const std::size_t i = model.locate(x);
                const double local =
                    std::clamp((x - model.beam_lower(i)) / model.beam_length(i), 0.0, 1.0);
                const double image = model.branch_image(i, local);
                total += model.log_jacobian(i, image);
                x = image;
            }
            return total;
        };
        worst = std::max(worst, std::abs(log_jac_q(xa) - log_jac_q(xb)));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// intermittent return-time tail
// ---------------------------------------------------------------------------

ReturnTailFit intermittent_return_tail(const systems::SystemSpec& system,
                                       std::size_t samples, std::uint64_t seed) {
    if (system.kind != systems::SystemKind::Intermittent)
        throw config_error("intermittent_return_tail: system must be intermittent");
    if (samples < 100) throw config_error("intermittent_return_tail: samples >= 100");
    const double alpha = system.alpha_pm;

    constexpr std::size_t kMaxReturn = 1 << 22; // per-sample iteration cap
    std::vector<std::uint64_t> count_gt; // count_gt[k] = #returns > k
    count_gt.assign(64, 0);

    for (std::size_t s = 0; s < samples; ++s) {
        Xoshiro256pp rng(derive_seed(seed, 0x7461696cULL, s));
        // start in the base Lambda = (1/2, 1]
        double x = 0.5 + 0.5 * rng.uniform01();
        std::size_t r = 0;
        do {
            double y = x <= 0.5 ? x * (1.0 + std::exp2(alpha) * std::pow(x, alpha))
                                : 2.0 * x - 1.0;
            if (y >= 1.0) y = 0.0;
            x = y;
            ++r;
        } while (x <= 0.5 && r < kMaxReturn);
        if (count_gt.size() < r + 1) count_gt.resize(r + 1, 0);
        for (std::size_t k = 0; k < r; ++k) ++count_gt[k]; // R > k for k < r
    }

    // The LSV survival law behaves like (u0 + beta k)^{-1/alpha}: a power
    // law whose offset biases a plain log-log slope at reachable k. Regress
    // log S on {1, log k, 1/k} instead; the 1/k column absorbs the
    // first-order offset correction and the log k coefficient is the tail
    // exponent. The pre-asymptotic k <= 2 points stay out of the fit.
    ReturnTailFit fit;
    std::vector<double> ks, ys, ws;
    const double n = static_cast<double>(samples);
    std::size_t largest_usable = 0;
    for (std::size_t k = 3; k < count_gt.size(); ++k) {
        if (count_gt[k] < 25) break;
        largest_usable = k;
        ks.push_back(static_cast<double>(k));
        ys.push_back(std::log(static_cast<double>(count_gt[k]) / n));
        ws.push_back(1.0);
    }
    if (ks.size() < 4)
        throw insufficient_data_error(
            "intermittent_return_tail: tail too short to fit (largest usable k = " +
                std::to_string(largest_usable) + ")",
            largest_usable);

    double A[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double rhs[3] = {0, 0, 0};
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double phi[3] = {1.0, std::log(ks[i]), 1.0 / ks[i]};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) A[r][c] += ws[i] * phi[r] * phi[c];
            rhs[r] += ws[i] * phi[r] * ys[i];
        }
    }
    // 3x3 Gaussian elimination with partial pivoting
    int perm[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        std::swap(A[col], A[piv]);
        std::swap(rhs[col], rhs[piv]);
        std::swap(perm[col], perm[piv]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = A[r][col] / A[col][col];
            for (int c = col; c < 3; ++c) A[r][c] -= f * A[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    double coef[3];
    for (int r = 2; r >= 0; --r) {
        double s = rhs[r];
        for (int c = r + 1; c < 3; ++c) s -= A[r][c] * coef[c];
        coef[r] = s / A[r][r];
    }
    fit.exponent = -coef[1];
    fit.k_min = 3;
    fit.k_max = largest_usable;
    fit.n_points = ks.size();
    return fit;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

std::string to_json_text(const TowerSpec& spec) {
    nlohmann::json j;
    j["lambda_tail"] = spec.lambda_tail;
    j["C1_tail"] = spec.C1_tail;
    j["max_R"] = spec.max_R;
    j["base_masses"] = spec.base_masses;
    j["return_times"] = spec.return_times;
    j["alpha_contract"] = spec.alpha_contract;
    j["C0_dist"] = spec.C0_dist;
    j["truncated_mass"] = spec.truncated_mass;
    return j.dump(2);
}

TowerSpec tower_from_json_text(const std::string& text) {
    TowerSpec spec;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        spec.lambda_tail = j.at("lambda_tail").get<double>();
        spec.C1_tail = j.at("C1_tail").get<double>();
        spec.max_R = j.at("max_R").get<std::size_t>();
        spec.base_masses = j.at("base_masses").get<std::vector<double>>();
        spec.return_times = j.at("return_times").get<std::vector<std::uint32_t>>();
        spec.alpha_contract = j.at("alpha_contract").get<double>();
        spec.C0_dist = j.at("C0_dist").get<double>();
        spec.truncated_mass = j.value("truncated_mass", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("tower_from_json_text: ") + e.what());
    }
    validate(spec);
    return spec;
}

} // namespace retstat::tower
