#include "retstat/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "retstat/errors.hpp"
#include "retstat/parallel.hpp"
#include "retstat/rng.hpp"

namespace retstat::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// round-trip exact float formatting for the CSV outputs
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw io_error("cannot open for writing: " + file.string());
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
}

double nominal_mu(const ExperimentConfig& config, double rho) {
    using systems::MeasureKind;
    using systems::Metric;
    switch (config.system.measure) {
        case MeasureKind::Lebesgue1D:
            return 2.0 * rho;
        case MeasureKind::Lebesgue2D:
            return config.metric == Metric::TorusMax
                       ? 4.0 * rho * rho
                       : 3.14159265358979323846 * rho * rho;
        case MeasureKind::EmpiricalBirkhoff:
            return 0.0; // resolved per center
    }
    return 0.0;
}

systems::SystemSpec system_from_json(const json& j) {
    std::string kind = j.value("kind", "doubling");
    systems::SystemSpec spec;
    if (kind == "doubling") spec = systems::SystemSpec::doubling();
    else if (kind == "cat") spec = systems::SystemSpec::cat_map();
    else if (kind == "intermittent")
        spec = systems::SystemSpec::intermittent(j.value("alpha_pm", 0.2));
    else if (kind == "gauss") spec = systems::SystemSpec::gauss();
    else throw config_error("unknown system kind: " + kind);
    if (j.contains("lipschitz_a")) {
        spec.lipschitz_A = j.at("lipschitz_a").get<double>();
        if (!(spec.lipschitz_A >= 2.0))
            throw config_error("lipschitz_a must be >= 2");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "kind" && key != "alpha_pm" && key != "lipschitz_a")
            throw config_error("unknown system key: " + key);
    }
    return spec;
}

std::string system_kind_name(const systems::SystemSpec& spec) {
    switch (spec.kind) {
        case systems::SystemKind::Doubling: return "doubling";
        case systems::SystemKind::CatMap: return "cat";
        case systems::SystemKind::Intermittent: return "intermittent";
        case systems::SystemKind::Gauss: return "gauss";
    }
    return "?";
}

systems::Metric metric_from_name(const std::string& name) {
    if (name == "interval") return systems::Metric::Interval;
    if (name == "torus-max") return systems::Metric::TorusMax;
    if (name == "torus-euclid") return systems::Metric::TorusEuclid;
    throw config_error("unknown metric: " + name);
}

std::string metric_name(systems::Metric m) {
    switch (m) {
        case systems::Metric::Interval: return "interval";
        case systems::Metric::TorusMax: return "torus-max";
        case systems::Metric::TorusEuclid: return "torus-euclid";
    }
    return "?";
}

void validate_config(const ExperimentConfig& config) {
    systems::validate(config.system);
    if (!(config.t_param > 0.0)) throw config_error("t_param must be positive");
    if (config.rho_grid.empty()) throw config_error("rho_grid must not be empty");
    for (std::size_t i = 0; i < config.rho_grid.size(); ++i) {
        const double rho = config.rho_grid[i];
        if (!(rho > 0.0 && rho < 0.25))
            throw config_error("rho values must lie in (0, 1/4)");
        if (i > 0 && !(rho < config.rho_grid[i - 1]))
            throw config_error("rho_grid must be strictly decreasing");
    }
    if (config.n_centers == 0) throw config_error("n_centers must be >= 1");
    if (config.n_starts_per_center == 0) throw config_error("n_starts_per_center must be >= 1");
    if (!(config.b_frak > 0.0 && config.b_frak < 1.0 / 3.0))
        throw config_error("b_frak must lie in (0, 1/3)");
    if (config.workers < 1) throw config_error("workers must be >= 1");
    if (config.system.kind == systems::SystemKind::CatMap &&
        config.metric == systems::Metric::Interval)
        throw config_error("the cat map needs a torus metric");
    if (config.system.kind == systems::SystemKind::Gauss &&
        config.metric != systems::Metric::Interval)
        throw config_error("the Gauss map is not a circle map; use the interval metric");
}

void require_heavy_tail(const ExperimentConfig& config) {
    // the Poisson-limit experiment needs a return-time tail exponent above 4,
    // which for the intermittent map means alpha_pm < 1/4
    if (config.system.kind == systems::SystemKind::Intermittent &&
        !(config.system.alpha_pm < 0.25))
        throw config_error("return statistics need alpha_pm < 1/4 (tail exponent "
                           "1/alpha_pm > 4)");
}

} // namespace

double ExperimentConfig::resolved_a_frak() const {
    if (a_frak > 0.0) return a_frak;
    return 1.0 / (4.0 * std::log(system.lipschitz_A));
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config parse: ") + e.what());
    }
    ExperimentConfig config;
    bool seed_set = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "system") config.system = system_from_json(value);
        else if (key == "metric") config.metric = metric_from_name(value.get<std::string>());
        else if (key == "t_param") config.t_param = value.get<double>();
        else if (key == "rho_grid") config.rho_grid = value.get<std::vector<double>>();
        else if (key == "n_centers") config.n_centers = value.get<std::size_t>();
        else if (key == "n_starts_per_center")
            config.n_starts_per_center = value.get<std::size_t>();
        else if (key == "a_frak") config.a_frak = value.get<double>();
        else if (key == "seed") { config.seed = value.get<std::uint64_t>(); seed_set = true; }
        else if (key == "output_dir") config.output_dir = value.get<std::string>();
        else if (key == "workers") config.workers = value.get<int>();
        else if (key == "v_samples") config.v_samples = value.get<std::size_t>();
        else if (key == "b_frak") config.b_frak = value.get<double>();
        else if (key == "mu_orbit_length") config.mu_orbit_length = value.get<std::uint64_t>();
        else if (key == "bootstrap_resamples")
            config.bootstrap_resamples = value.get<int>();
        else throw config_error("unknown config key: " + key);
    }
    if (!j.contains("metric"))
        config.metric = systems::default_metric(config.system);
    if (!seed_set) throw config_error("seed is mandatory (no wall-clock seeding)");
    validate_config(config);
    return config;
}

std::string experiment_config_echo(const ExperimentConfig& config) {
    // canonical echo: execution knobs (output_dir, workers) are not part of
    // the experiment identity and stay out so reruns compare byte-identical
    json j;
    j["system"]["kind"] = system_kind_name(config.system);
    if (config.system.kind == systems::SystemKind::Intermittent)
        j["system"]["alpha_pm"] = config.system.alpha_pm;
    j["system"]["lipschitz_a"] = config.system.lipschitz_A;
    j["metric"] = metric_name(config.metric);
    j["t_param"] = config.t_param;
    j["rho_grid"] = config.rho_grid;
    j["n_centers"] = config.n_centers;
    j["n_starts_per_center"] = config.n_starts_per_center;
    j["a_frak"] = config.a_frak;
    j["a_frak_resolved"] = config.resolved_a_frak();
    j["seed"] = config.seed;
    j["v_samples"] = config.v_samples;
    j["b_frak"] = config.b_frak;
    j["mu_orbit_length"] = config.mu_orbit_length;
    j["bootstrap_resamples"] = config.bootstrap_resamples;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// return statistics
// ---------------------------------------------------------------------------

namespace {

struct CenterSlot {
    int code = 0; // 0 kept, 1 unknown-kept, 2 excluded
    double mu = 0.0;
    std::vector<std::uint64_t> visits; // one S per start
};

// sup_k |pmf(k) - poi(t,k)| for an explicit pmf vector (exact laws)
double sup_dev_vs_poisson(const std::vector<double>& pmf, double t) {
    double sup = 0.0;
    double poi = stats::poisson_pmf(t, 0);
    std::size_t k = 0;
    for (;; ++k) {
        const double mass = k < pmf.size() ? pmf[k] : 0.0;
        sup = std::max(sup, std::abs(mass - poi));
        if (k >= pmf.size() && static_cast<double>(k) > t && poi < sup) break;
        if (k > pmf.size() + 10000) break;
        poi *= t / static_cast<double>(k + 1);
    }
    return sup;
}

} // namespace

ExperimentResult run_return_stats(const ExperimentConfig& config) {
    validate_config(config);
    require_heavy_tail(config);
    const double t = config.t_param;
    const double af = config.resolved_a_frak();

    ExperimentResult result;
    result.config_echo = experiment_config_echo(config);
    result.t_param = t;

    for (std::size_t rho_idx = 0; rho_idx < config.rho_grid.size(); ++rho_idx) {
        const double rho = config.rho_grid[rho_idx];
        std::vector<CenterSlot> slots(config.n_centers);

        parallel_for(config.n_centers, config.workers, [&](std::size_t i) {
            CenterSlot& slot = slots[i];
            // the center only contributes its value to verdicts and hit
            // tests, so a short bit budget suffices
            systems::SampleOptions center_opts;
            center_opts.exact_bits = 256;
            const systems::Point center = systems::sample_invariant(
                config.system, derive_seed(config.seed, 0xc3, rho_idx, i), center_opts);
            const systems::BallSpec ball{center, rho, config.metric};

            double mu = 0.0;
            if (config.system.measure == systems::MeasureKind::EmpiricalBirkhoff) {
                systems::BirkhoffOptions bopts;
                bopts.orbit_length = config.mu_orbit_length;
                bopts.seed = derive_seed(config.seed, 0xb1, rho_idx, i);
                mu = systems::ball_measure(config.system, ball, bopts).value;
            } else {
                mu = systems::ball_measure(config.system, ball).value;
            }
            slot.mu = mu;

            const orbit::ShortReturnVerdict verdict =
                orbit::is_short_return_center(config.system, center, rho, af, config.metric);
            if (verdict.status == orbit::Verdict::Intersects) {
                slot.code = 2;
                return;
            }
            slot.code = verdict.status == orbit::Verdict::Unknown ? 1 : 0;

            const std::size_t N = static_cast<std::size_t>(std::floor(t / mu));
            slot.visits.reserve(config.n_starts_per_center);
            for (std::size_t j = 0; j < config.n_starts_per_center; ++j) {
                systems::SampleOptions start_opts;
                start_opts.exact_bits = N + 96;
                const systems::Point start = systems::sample_invariant(
                    config.system,
                    derive_seed(config.seed, 0x57a7, rho_idx,
                                i * config.n_starts_per_center + j),
                    start_opts);
                const orbit::HitSeries series =
                    orbit::hit_sequence(config.system, ball, start, t, mu);
                slot.visits.push_back(orbit::count_visits(series));
            }
        });

        // ordered fold
        PerRhoRecord rec;
        rec.rho = rho;
        rec.centers_total = config.n_centers;
        std::vector<std::uint64_t> pooled;
        double mu_sum = 0.0;
        std::size_t mu_count = 0;
        for (const CenterSlot& slot : slots) {
            if (slot.code == 2) {
                ++rec.excluded_centers;
                continue;
            }
            if (slot.code == 1) ++rec.unknown_centers;
            mu_sum += slot.mu;
            ++mu_count;
            pooled.insert(pooled.end(), slot.visits.begin(), slot.visits.end());
            if (!slot.visits.empty()) {
                const auto center_pmf = stats::empirical_pmf(slot.visits);
                rec.per_center_sup.push_back(stats::sup_distance(center_pmf, t));
            }
        }
        if (pooled.empty())
            throw config_error("run_return_stats: every center was excluded as a "
                               "short-return center; lower a_frak or enlarge rho");
        rec.mu_ball_mean = mu_sum / static_cast<double>(mu_count);
        const double mu_nom = config.system.measure == systems::MeasureKind::EmpiricalBirkhoff
                                  ? rec.mu_ball_mean
                                  : nominal_mu(config, rho);
        rec.N_nominal = static_cast<std::size_t>(std::floor(t / mu_nom));
        rec.n_samples = pooled.size();
        rec.pmf = stats::empirical_pmf(pooled);
        rec.sup_distance = stats::sup_distance(rec.pmf, t);
        const auto tv = stats::tv_distance(rec.pmf, t);
        rec.tv_distance = tv.tv;
        const auto sup_ci = stats::bootstrap_distance_ci(
            pooled, t, stats::DistanceKind::Sup, config.bootstrap_resamples,
            derive_seed(config.seed, 0xb007, rho_idx, 0));
        const auto tv_ci = stats::bootstrap_distance_ci(
            pooled, t, stats::DistanceKind::Tv, config.bootstrap_resamples,
            derive_seed(config.seed, 0xb007, rho_idx, 1));
        rec.sup_ci_lo = sup_ci.lo;
        rec.sup_ci_hi = sup_ci.hi;
        rec.tv_ci_lo = tv_ci.lo;
        rec.tv_ci_hi = tv_ci.hi;
        result.per_rho.push_back(std::move(rec));
    }

    if (result.per_rho.size() >= 3) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& rec : result.per_rho)
            pts.emplace_back(rec.rho, rec.sup_distance);
        result.fit = stats::fit_log_decay(pts);
        result.has_fit = true;
    }
    return result;
}

void emit_plot_data(const ExperimentResult& result, const fs::path& dir) {
    ensure_dir(dir);
    {
        auto out = open_out(dir / "pmf.csv");
        out << "rho,k,empirical_mass,poisson_mass\n";
        for (const auto& rec : result.per_rho) {
            for (std::size_t k = 0; k <= rec.pmf.k_max(); ++k)
                out << fmt(rec.rho) << ',' << k << ',' << fmt(rec.pmf.mass(k)) << ','
                    << fmt(stats::poisson_pmf(result.t_param, k)) << '\n';
        }
    }
    {
        auto out = open_out(dir / "summary.csv");
        out << "rho,mu_ball_mean,N_nominal,centers_total,excluded_centers,"
               "unknown_centers,n_samples,sup_distance,sup_ci_lo,sup_ci_hi,"
               "tv_distance,tv_ci_lo,tv_ci_hi\n";
        for (const auto& rec : result.per_rho)
            out << fmt(rec.rho) << ',' << fmt(rec.mu_ball_mean) << ',' << rec.N_nominal
                << ',' << rec.centers_total << ',' << rec.excluded_centers << ','
                << rec.unknown_centers << ',' << rec.n_samples << ','
                << fmt(rec.sup_distance) << ',' << fmt(rec.sup_ci_lo) << ','
                << fmt(rec.sup_ci_hi) << ',' << fmt(rec.tv_distance) << ','
                << fmt(rec.tv_ci_lo) << ',' << fmt(rec.tv_ci_hi) << '\n';
    }
    if (result.has_fit) {
        auto out = open_out(dir / "fit.csv");
        out << "kappa_hat,intercept,r_squared,n_points,dropped\n";
        out << fmt(result.fit.kappa_hat) << ',' << fmt(result.fit.intercept) << ','
            << fmt(result.fit.r_squared) << ',' << result.fit.points.size() << ','
            << result.fit.dropped << '\n';
    }
}

void write_result_json(const ExperimentResult& result, const fs::path& dir) {
    ensure_dir(dir);
    json j;
    j["version"] = result.version;
    j["schema_version"] = result.schema_version;
    j["config"] = json::parse(result.config_echo);
    j["t_param"] = result.t_param;
    j["per_rho"] = json::array();
    for (const auto& rec : result.per_rho) {
        json r;
        r["rho"] = rec.rho;
        r["mu_ball_mean"] = rec.mu_ball_mean;
        r["N_nominal"] = rec.N_nominal;
        r["centers_total"] = rec.centers_total;
        r["excluded_centers"] = rec.excluded_centers;
        r["unknown_centers"] = rec.unknown_centers;
        r["n_samples"] = rec.n_samples;
        r["pmf_counts"] = rec.pmf.counts;
        r["sup_distance"] = rec.sup_distance;
        r["sup_ci"] = {rec.sup_ci_lo, rec.sup_ci_hi};
        r["tv_distance"] = rec.tv_distance;
        r["tv_ci"] = {rec.tv_ci_lo, rec.tv_ci_hi};
        r["per_center_sup"] = rec.per_center_sup;
        j["per_rho"].push_back(std::move(r));
    }
    if (result.has_fit) {
        j["fit"]["kappa_hat"] = result.fit.kappa_hat;
        j["fit"]["intercept"] = result.fit.intercept;
        j["fit"]["r_squared"] = result.fit.r_squared;
        j["fit"]["dropped"] = result.fit.dropped;
    } else {
        j["fit"] = nullptr;
    }
    auto out = open_out(dir / "result.json");
    out << j.dump(2) << '\n';
}

std::vector<SummaryRow> parse_summary_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw io_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty summary csv");
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 13) throw io_error("summary csv: bad column count");
        SummaryRow row{};
        row.rho = std::stod(cells[0]);
        row.mu_ball_mean = std::stod(cells[1]);
        row.N_nominal = std::stoull(cells[2]);
        row.centers_total = std::stoull(cells[3]);
        row.excluded_centers = std::stoull(cells[4]);
        row.unknown_centers = std::stoull(cells[5]);
        row.n_samples = std::stoull(cells[6]);
        row.sup_distance = std::stod(cells[7]);
        row.sup_ci_lo = std::stod(cells[8]);
        row.sup_ci_hi = std::stod(cells[9]);
        row.tv_distance = std::stod(cells[10]);
        row.tv_ci_lo = std::stod(cells[11]);
        row.tv_ci_hi = std::stod(cells[12]);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// very-short-return scan
// ---------------------------------------------------------------------------

double sp_inflation(double A, std::size_t n, std::size_t p) {
    if (!(A > 1.0)) throw config_error("sp_inflation: A must exceed 1");
    const double an = std::pow(A, static_cast<double>(n));
    const double anp = std::pow(A, static_cast<double>(n) * std::exp2(static_cast<double>(p)));
    return std::exp2(static_cast<double>(p)) * (anp - 1.0) / (an - 1.0);
}

std::size_t sp_exponent(std::size_t n, double b_frak, std::size_t J) {
    if (n == 0) throw config_error("sp_exponent: n must be >= 1");
    const double bj = b_frak * static_cast<double>(J);
    std::size_t p = 1;
    while (static_cast<double>(n) * std::exp2(static_cast<double>(p)) <= bj) ++p;
    return p;
}

ShortReturnScanResult run_short_return_scan(const ExperimentConfig& config) {
    validate_config(config);
    const double af = config.resolved_a_frak();
    ShortReturnScanResult result;
    result.config_echo = experiment_config_echo(config);
    for (std::size_t rho_idx = 0; rho_idx < config.rho_grid.size(); ++rho_idx) {
        const double rho = config.rho_grid[rho_idx];
        const orbit::VEstimate est = orbit::estimate_V_measure(
            config.system, rho, af, config.v_samples,
            derive_seed(config.seed, 0x5eed, rho_idx, 0), config.workers);
        result.per_rho.emplace_back(rho, est);

        // doubling-trick table: inflated radii and levels
        const std::size_t J = orbit::short_return_horizon(rho, af);
        std::vector<SpRow> table;
        const std::size_t n_top =
            static_cast<std::size_t>(std::floor(config.b_frak * static_cast<double>(J)));
        for (std::size_t n = 1; n <= n_top; ++n) {
            SpRow row;
            row.n = n;
            row.p = sp_exponent(n, config.b_frak, J);
            row.s_p = sp_inflation(config.system.lipschitz_A, n, row.p);
            row.rho_prime = row.s_p * rho;
            row.n_prime = n << row.p;
            table.push_back(row);
        }
        result.sp_tables.push_back(std::move(table));
    }
    return result;
}

void write_short_return_files(const ShortReturnScanResult& result, const fs::path& dir) {
    ensure_dir(dir);
    write_run_config(result.config_echo, dir);
    {
        auto out = open_out(dir / "v_measure.csv");
        out << "rho,lower,upper,std_error,n_intersects,n_unknown,samples\n";
        for (const auto& [rho, est] : result.per_rho)
            out << fmt(rho) << ',' << fmt(est.lower) << ',' << fmt(est.upper) << ','
                << fmt(est.std_error) << ',' << est.n_intersects << ',' << est.n_unknown
                << ',' << est.samples << '\n';
    }
    {
        auto out = open_out(dir / "sp_table.csv");
        out << "rho,n,p,s_p,rho_prime,n_prime\n";
        for (std::size_t i = 0; i < result.per_rho.size(); ++i)
            for (const auto& row : result.sp_tables[i])
                out << fmt(result.per_rho[i].first) << ',' << row.n << ',' << row.p << ','
                    << fmt(row.s_p) << ',' << fmt(row.rho_prime) << ',' << row.n_prime
                    << '\n';
    }
}

// ---------------------------------------------------------------------------
// Chen-Stein suite
// ---------------------------------------------------------------------------

namespace {

std::string chen_stein_config_echo(const ChenSteinSuiteConfig& config) {
    json j;
    j["model_kind"] = config.model_kind;
    j["instances"] = config.instances;
    j["n_max"] = config.n_max;
    j["p_list"] = config.p_list;
    j["seed"] = config.seed;
    if (config.start_law)
        j["start_law"] = {(*config.start_law)[0], (*config.start_law)[1]};
    return j.dump(2);
}

std::string tower_config_echo(const TowerCheckConfig& config) {
    json j;
    j["lambda_tail"] = config.lambda_tail;
    j["max_r"] = config.max_R;
    j["beams_per_height"] = config.beams_per_height;
    j["wobble_delta"] = config.wobble_delta;
    j["distortion_samples"] = config.distortion_samples;
    j["distortion_q"] = config.distortion_q;
    j["orbit_length"] = config.orbit_length;
    j["seed"] = config.seed;
    return j.dump(2);
}

} // namespace

void write_run_config(const std::string& config_echo, const fs::path& dir) {
    ensure_dir(dir);
    json j;
    j["version"] = kVersion;
    j["schema_version"] = kSchemaVersion;
    j["config"] = json::parse(config_echo);
    auto out = open_out(dir / "run.json");
    out << j.dump(2) << '\n';
}

ChenSteinSuiteResult run_chen_stein_suite(const ChenSteinSuiteConfig& config) {
    if (config.instances == 0) throw config_error("chen-stein: instances must be >= 1");
    if (config.n_max < 8 || config.n_max > 64)
        throw config_error("chen-stein: n_max must lie in [8, 64]");
    if (config.model_kind != "markov" && config.model_kind != "iid")
        throw config_error("chen-stein: model kind must be markov or iid");
    for (const std::size_t p : config.p_list)
        if (p < 2) throw config_error("chen-stein: every p must be >= 2");

    ChenSteinSuiteResult result;
    result.config_echo = chen_stein_config_echo(config);
    for (std::size_t inst = 0; inst < config.instances; ++inst) {
        Xoshiro256pp rng(derive_seed(config.seed, 0xc5e1, inst, 0));
        chenstein::BinaryProcessModel model;
        if (config.model_kind == "markov") {
            // eps bounded away from 0 keeps t = N eps >= 1, inside the range
            // where the 6t proof constant is valid
            const double a = rng.uniform(0.18, 0.8);
            const double b = rng.uniform(0.3, 0.8);
            model = chenstein::TwoStateMarkov{{std::array<double, 2>{1.0 - a, a},
                                               std::array<double, 2>{b, 1.0 - b}}};
        } else {
            model = chenstein::IIDBernoulli{rng.uniform(0.15, 0.4)};
        }
        if (config.start_law) {
            const auto pi = std::holds_alternative<chenstein::IIDBernoulli>(model)
                                ? std::array<double, 2>{1.0 - std::get<chenstein::IIDBernoulli>(model).eps,
                                                         std::get<chenstein::IIDBernoulli>(model).eps}
                                : chenstein::stationary_law(
                                      std::get<chenstein::TwoStateMarkov>(model));
            if (std::abs((*config.start_law)[0] - pi[0]) > 1e-12 ||
                std::abs((*config.start_law)[1] - pi[1]) > 1e-12)
                throw hypothesis_error(
                    "chen-stein: the requested start law is not stationary; the "
                    "theorem requires a stationary process");
        }
        const std::size_t N = 8 + rng.below(config.n_max - 8 + 1);
        const double eps = chenstein::compute_eps(model).value;
        const double t = static_cast<double>(N) * eps;
        const std::vector<double> pmf = chenstein::exact_S_pmf(model, N);
        result.pmfs.push_back(pmf);

        // prefix sums for interval probabilities
        std::vector<double> prefix(N + 2, 0.0);
        for (std::size_t k = 0; k <= N; ++k) prefix[k + 1] = prefix[k] + pmf[k];
        std::vector<double> poi(N + 2, 0.0);
        for (std::size_t k = 0; k <= N + 1; ++k) poi[k] = stats::poisson_pmf(t, k);
        std::vector<double> poi_prefix(N + 2, 0.0);
        for (std::size_t k = 0; k <= N; ++k) poi_prefix[k + 1] = poi_prefix[k] + poi[k];

        for (const std::size_t p : config.p_list) {
            if (p + 3 > N) continue; // empty R1 window
            const chenstein::ChenSteinReport rep =
                chenstein::make_report(model, N, t, p);
            ChenSteinRow row;
            row.instance = inst;
            row.kind = config.model_kind;
            row.N = N;
            row.t = t;
            row.eps = eps;
            row.p_gap = p;
            row.R1 = rep.R1;
            row.R2 = rep.R2;
            row.bound_per_k = rep.bound_per_k;
            row.binpoi_term = rep.binpoi_term;
            row.max_singleton_dev = sup_dev_vs_poisson(pmf, t);
            row.bound_singleton = rep.bound_total(1);
            row.ratio = row.max_singleton_dev > 0.0
                            ? row.bound_singleton / row.max_singleton_dev
                            : std::numeric_limits<double>::infinity();
            // every interval [a,b] within [0,N], plus the half-infinite tails
            for (std::size_t a = 0; a <= N; ++a) {
                for (std::size_t b = a; b <= N; ++b) {
                    const double dev =
                        std::abs((prefix[b + 1] - prefix[a]) -
                                 (poi_prefix[b + 1] - poi_prefix[a]));
                    const std::size_t e_size = b - a + 1;
                    ++row.intervals_checked;
                    if (dev > rep.bound_total(e_size)) ++row.interval_violations;
                }
                // E = [a, infinity): #(E cap [0,N]) = N - a + 1
                const double dev = std::abs((prefix[N + 1] - prefix[a]) -
                                            stats::poisson_upper_tail(t, a));
                ++row.intervals_checked;
                if (dev > rep.bound_total(N - a + 1)) ++row.interval_violations;
            }
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

void write_chen_stein_files(const ChenSteinSuiteResult& result, const fs::path& dir) {
    ensure_dir(dir);
    write_run_config(result.config_echo, dir);
    {
        auto out = open_out(dir / "chen_stein_report.csv");
        out << "instance,kind,N,t,eps,p_gap,R1,R2,bound_per_k,binpoi_term,"
               "max_singleton_dev,bound_singleton,ratio,intervals_checked,"
               "interval_violations\n";
        for (const auto& r : result.rows)
            out << r.instance << ',' << r.kind << ',' << r.N << ',' << fmt(r.t) << ','
                << fmt(r.eps) << ',' << r.p_gap << ',' << fmt(r.R1) << ',' << fmt(r.R2)
                << ',' << fmt(r.bound_per_k) << ',' << fmt(r.binpoi_term) << ','
                << fmt(r.max_singleton_dev) << ',' << fmt(r.bound_singleton) << ','
                << fmt(r.ratio) << ',' << r.intervals_checked << ','
                << r.interval_violations << '\n';
    }
    {
        auto out = open_out(dir / "chen_stein_pmf.csv");
        out << "instance,k,mass\n";
        for (std::size_t i = 0; i < result.pmfs.size(); ++i)
            for (std::size_t k = 0; k < result.pmfs[i].size(); ++k)
                out << i << ',' << k << ',' << fmt(result.pmfs[i][k]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// tower checks
// ---------------------------------------------------------------------------

TowerCheckResult run_tower_checks(const TowerCheckConfig& config) {
    TowerCheckResult result;
    result.config_echo = tower_config_echo(config);
    result.spec = tower::build_tower(config.lambda_tail, config.max_R,
                                     config.beams_per_height);
    result.theta_expected = (config.lambda_tail - 1.0) / 2.0;

    // log-spaced s values within [4, max_R / 10]
    std::vector<std::size_t> s_range;
    const double s_lo = 4.0, s_hi = std::max(8.0, static_cast<double>(config.max_R) / 10.0);
    for (int i = 0; i < 12; ++i) {
        const double s = s_lo * std::pow(s_hi / s_lo, static_cast<double>(i) / 11.0);
        const auto si = static_cast<std::size_t>(std::llround(s));
        if (s_range.empty() || si != s_range.back()) s_range.push_back(si);
    }
    result.omega_slope = tower::check_omega_decay(result.spec, s_range);

    const tower::TowerModel linear(result.spec, 0.0);
    const tower::TowerModel wobble(result.spec, config.wobble_delta);
    result.distortion_linear = tower::check_distortion(
        linear, config.distortion_samples, config.distortion_q, config.seed);
    result.distortion_wobble = tower::check_distortion(
        wobble, config.distortion_samples, config.distortion_q, config.seed);
    result.wobble_bound = config.wobble_delta / (1.0 - wobble.alpha());

    // Kac ratio along one long orbit, batch-means standard error
    result.kac_expected = result.spec.base_mass() / result.spec.mean_return();
    Xoshiro256pp rng(derive_seed(config.seed, 0x6b61, 0, 0));
    tower::TowerPoint x{linear.locate(rng.uniform01()), 0, 0.0};
    {
        const double v = rng.uniform01();
        const std::size_t i = linear.locate(v);
        x = tower::TowerPoint{i, 0, (v - linear.beam_lower(i)) / linear.beam_length(i)};
    }
    const std::uint64_t batches = 50;
    const std::uint64_t per_batch = std::max<std::uint64_t>(1, config.orbit_length / batches);
    double mean_sum = 0.0, mean_sq = 0.0;
    std::uint64_t hits = 0, steps = 0;
    for (std::uint64_t b = 0; b < batches; ++b) {
        std::uint64_t batch_hits = 0;
        for (std::uint64_t i = 0; i < per_batch; ++i) {
            if (x.level == 0) ++batch_hits;
            x = tower::tower_step(linear, x);
        }
        hits += batch_hits;
        steps += per_batch;
        const double m = static_cast<double>(batch_hits) / static_cast<double>(per_batch);
        mean_sum += m;
        mean_sq += m * m;
    }
    result.kac_fraction = static_cast<double>(hits) / static_cast<double>(steps);
    const double nb = static_cast<double>(batches);
    const double mean = mean_sum / nb;
    const double var = std::max(0.0, mean_sq / nb - mean * mean);
    result.kac_std_error = std::sqrt(var / (nb - 1.0));
    return result;
}

void write_tower_files(const TowerCheckResult& result, const fs::path& dir) {
    ensure_dir(dir);
    write_run_config(result.config_echo, dir);
    {
        auto out = open_out(dir / "tower.json");
        out << tower::to_json_text(result.spec) << '\n';
    }
    {
        json j;
        j["omega_slope"] = result.omega_slope;
        j["theta_expected"] = result.theta_expected;
        j["distortion_linear"] = result.distortion_linear;
        j["distortion_wobble"] = result.distortion_wobble;
        j["wobble_bound"] = result.wobble_bound;
        j["kac_fraction"] = result.kac_fraction;
        j["kac_expected"] = result.kac_expected;
        j["kac_std_error"] = result.kac_std_error;
        j["truncated_mass"] = result.spec.truncated_mass;
        auto out = open_out(dir / "tower_report.json");
        out << j.dump(2) << '\n';
    }
}

} // namespace retstat::experiments
