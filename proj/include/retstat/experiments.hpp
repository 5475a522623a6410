#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "retstat/chenstein.hpp"
#include "retstat/orbit.hpp"
#include "retstat/stats.hpp"
#include "retstat/systems.hpp"
#include "retstat/tower.hpp"

namespace retstat::experiments {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

// exit codes used by the CLI
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitHypothesis = 3;
inline constexpr int kExitIo = 4;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Shared by return-stats, scaling and short-returns. Seeds are mandatory;
// there is no wall-clock fallback. a_frak = 0 selects the default
// (4 log A)^-1.
struct ExperimentConfig {
    systems::SystemSpec system = systems::SystemSpec::doubling();
    systems::Metric metric = systems::Metric::Interval;
    double t_param = 1.0;
    std::vector<double> rho_grid;   // strictly decreasing
    std::size_t n_centers = 100;
    std::size_t n_starts_per_center = 10;
    double a_frak = 0.0;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int workers = 1;
    // short-returns extras
    std::size_t v_samples = 2000;
    double b_frak = 0.25; // split constant for the inflation table, < 1/3
    // empirical-measure resolution for Birkhoff systems
    std::uint64_t mu_orbit_length = 100000;
    int bootstrap_resamples = 200;

    double resolved_a_frak() const;
};

// parsed from a flat JSON object; unknown keys are rejected
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_echo(const ExperimentConfig& config); // canonical echo

struct ChenSteinSuiteConfig {
    std::string model_kind = "markov"; // "markov" or "iid"
    std::size_t instances = 50;
    std::size_t n_max = 12;
    std::vector<std::size_t> p_list = {2, 3, 4};
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    // optional explicit start law; anything but the stationary law violates
    // the theorem's stationarity hypothesis
    std::optional<std::array<double, 2>> start_law;
};

struct TowerCheckConfig {
    double lambda_tail = 5.0;
    std::size_t max_R = 10000;
    std::size_t beams_per_height = 4;
    double wobble_delta = 0.1;
    std::size_t distortion_samples = 2000;
    std::size_t distortion_q = 8;
    std::uint64_t orbit_length = 1000000;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
};

// ---------------------------------------------------------------------------
// return statistics (Poisson-limit experiment)
// ---------------------------------------------------------------------------

struct PerRhoRecord {
    double rho = 0.0;
    double mu_ball_mean = 0.0; // mean of the per-center ball measures
    std::size_t N_nominal = 0; // floor(t / mu) for an interior ball
    std::size_t centers_total = 0;
    std::size_t excluded_centers = 0; // Intersects verdicts, dropped
    std::size_t unknown_centers = 0;  // kept, but flagged
    std::size_t n_samples = 0;        // S draws pooled over centers x starts
    stats::EmpiricalPmf pmf;
    double sup_distance = 0.0, sup_ci_lo = 0.0, sup_ci_hi = 0.0;
    double tv_distance = 0.0, tv_ci_lo = 0.0, tv_ci_hi = 0.0;
    std::vector<double> per_center_sup; // outlier visibility
};

struct ExperimentResult {
    std::string version = kVersion;
    int schema_version = kSchemaVersion;
    std::string config_echo; // canonical JSON echo (volatile keys excluded)
    double t_param = 1.0;
    std::vector<PerRhoRecord> per_rho;
    bool has_fit = false;
    stats::DecayFit fit; // over (rho, sup_distance), when >= 3 rhos
};

// errors: all centers excluded (suggests smaller a_frak or larger rho)
ExperimentResult run_return_stats(const ExperimentConfig& config);

// pmf.csv + summary.csv (+ fit.csv when the fit exists); header-only files
// for an empty result. Floats are written round-trip exact.
void emit_plot_data(const ExperimentResult& result, const std::filesystem::path& dir);
void write_result_json(const ExperimentResult& result, const std::filesystem::path& dir);

// re-parse helpers (round-trip checks and downstream tooling)
struct SummaryRow {
    double rho, mu_ball_mean;
    std::uint64_t N_nominal, centers_total, excluded_centers, unknown_centers, n_samples;
    double sup_distance, sup_ci_lo, sup_ci_hi, tv_distance, tv_ci_lo, tv_ci_hi;
};
std::vector<SummaryRow> parse_summary_csv(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// very-short-return scan
// ---------------------------------------------------------------------------

struct SpRow {
    std::size_t n = 0;      // original level
    std::size_t p = 0;      // doubling exponent p(n)
    double s_p = 0.0;       // inflation factor
    double rho_prime = 0.0; // inflated radius
    std::size_t n_prime = 0; // inflated level n 2^p
};

struct ShortReturnScanResult {
    std::string config_echo;
    std::vector<std::pair<double, orbit::VEstimate>> per_rho; // (rho, estimate)
    std::vector<std::vector<SpRow>> sp_tables;                // one per rho
};

ShortReturnScanResult run_short_return_scan(const ExperimentConfig& config);
void write_short_return_files(const ShortReturnScanResult& result,
                              const std::filesystem::path& dir);

// s_p = 2^p (A^{n 2^p} - 1) / (A^n - 1)
double sp_inflation(double A, std::size_t n, std::size_t p);
// smallest p >= 1 with n 2^p > b J
std::size_t sp_exponent(std::size_t n, double b_frak, std::size_t J);

// ---------------------------------------------------------------------------
// Chen-Stein suite
// ---------------------------------------------------------------------------

struct ChenSteinRow {
    std::size_t instance = 0;
    std::string kind;
    std::size_t N = 0;
    double t = 0.0;
    double eps = 0.0;
    std::size_t p_gap = 0;
    double R1 = 0.0, R2 = 0.0;
    double bound_per_k = 0.0, binpoi_term = 0.0;
    double max_singleton_dev = 0.0; // sup_k |P(S=k) - poi(t,k)|
    double bound_singleton = 0.0;   // bound for #E = 1
    double ratio = 0.0;             // bound_singleton / max_singleton_dev
    std::size_t intervals_checked = 0;
    std::size_t interval_violations = 0; // must stay 0
};

struct ChenSteinSuiteResult {
    std::string config_echo;
    std::vector<ChenSteinRow> rows;
    std::vector<std::vector<double>> pmfs; // exact pmf per instance
};

ChenSteinSuiteResult run_chen_stein_suite(const ChenSteinSuiteConfig& config);
void write_chen_stein_files(const ChenSteinSuiteResult& result,
                            const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// tower checks
// ---------------------------------------------------------------------------

struct TowerCheckResult {
    std::string config_echo;
    tower::TowerSpec spec;
    double omega_slope = 0.0;      // fitted log-log slope
    double theta_expected = 0.0;   // (lambda-1)/2
    double distortion_linear = 0.0;
    double distortion_wobble = 0.0;
    double wobble_bound = 0.0;     // delta / (1 - alpha)
    double kac_fraction = 0.0;     // orbit fraction at level 0
    double kac_expected = 0.0;     // base mass / mean return
    double kac_std_error = 0.0;
};

TowerCheckResult run_tower_checks(const TowerCheckConfig& config);
void write_tower_files(const TowerCheckResult& result, const std::filesystem::path& dir);

// version + config echo sidecar, written next to every subcommand's outputs
void write_run_config(const std::string& config_echo, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

// subcommands: return-stats, chen-stein, tower, short-returns, scaling
int cli_main(const std::vector<std::string>& args);

} // namespace retstat::experiments
