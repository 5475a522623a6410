#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "retstat/errors.hpp"
#include "retstat/experiments.hpp"

using namespace retstat;
using namespace retstat::experiments;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("retstat_test_" + tag);
    fs::remove_all(dir);
    return dir;
}

const char* kSmallConfig = R"({
  "system": {"kind": "doubling"},
  "metric": "interval",
  "t_param": 1.0,
  "rho_grid": [0.015625, 0.0078125, 0.00390625],
  "n_centers": 40,
  "n_starts_per_center": 5,
  "seed": 4242,
  "v_samples": 300,
  "bootstrap_resamples": 50
})";

} // namespace

TEST_CASE("config parsing and validation") {
    const auto config = parse_experiment_config(kSmallConfig);
    CHECK(config.system.kind == systems::SystemKind::Doubling);
    CHECK(config.t_param == 1.0);
    CHECK(config.rho_grid.size() == 3);
    CHECK(config.seed == 4242);
    // default a_frak comes out as (4 log A)^-1
    CHECK(config.resolved_a_frak() ==
          doctest::Approx(1.0 / (4.0 * std::log(2.5))).epsilon(1e-14));

    CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "bogus_key": 2})"),
                    config_error);
    CHECK_THROWS_AS(parse_experiment_config(R"({"t_param": 1.0})"), config_error);
    CHECK_THROWS_AS(
        parse_experiment_config(
            R"({"seed": 1, "rho_grid": [0.001, 0.01], "system": {"kind": "doubling"}})"),
        config_error); // increasing grid
    CHECK_THROWS_AS(
        parse_experiment_config(
            R"({"seed": 1, "rho_grid": [0.01], "b_frak": 0.4})"),
        config_error); // b_frak >= 1/3
    CHECK_THROWS_AS(
        parse_experiment_config(
            R"({"seed": 1, "rho_grid": [0.01], "system": {"kind": "cat"}, "metric": "interval"})"),
        config_error);
}

TEST_CASE("sp inflation table identities") {
    // s_1 = 2 (A^{2n} - 1)/(A^n - 1) = 2 (A^n + 1)
    for (const double A : {2.0, 2.5, 5.23}) {
        for (std::size_t n = 1; n <= 12; ++n) {
            const double an = std::pow(A, static_cast<double>(n));
            CHECK(sp_inflation(A, n, 1) ==
                  doctest::Approx(2.0 * (an + 1.0)).epsilon(1e-12));
        }
    }
    // level inflation stays within its band: 1 <= n <= floor(bJ) implies
    // ceil(bJ) <= n 2^{p(n)} <= 2bJ, checked exhaustively up to J = 1000
    const double b = 0.25;
    for (std::size_t J = 1; J <= 1000; ++J) {
        const double bj = b * static_cast<double>(J);
        const auto top = static_cast<std::size_t>(std::floor(bj));
        for (std::size_t n = 1; n <= top; ++n) {
            const std::size_t p = sp_exponent(n, b, J);
            const double n_prime = static_cast<double>(n) * std::exp2(static_cast<double>(p));
            CHECK(n_prime >= std::ceil(bj));
            CHECK(n_prime <= 2.0 * bj);
        }
    }
}

TEST_CASE("run_return_stats: bookkeeping, determinism, worker independence") {
    auto config = parse_experiment_config(kSmallConfig);
    const auto result = run_return_stats(config);
    REQUIRE(result.per_rho.size() == 3);
    for (const auto& rec : result.per_rho) {
        CHECK(rec.centers_total == 40);
        const std::size_t used = rec.centers_total - rec.excluded_centers;
        CHECK(rec.n_samples == used * 5);
        CHECK(rec.pmf.total == rec.n_samples);
        CHECK(rec.per_center_sup.size() == used);
        CHECK(rec.sup_distance >= 0.0);
        CHECK(rec.tv_distance <= 1.0);
        CHECK(rec.N_nominal ==
              static_cast<std::size_t>(std::floor(1.0 / (2.0 * rec.rho))));
    }
    CHECK(result.has_fit);

    // same seed, different worker count: identical output bytes
    config.workers = 3;
    const auto result2 = run_return_stats(config);
    const auto d1 = fresh_dir("rr1"), d2 = fresh_dir("rr2");
    emit_plot_data(result, d1);
    write_result_json(result, d1);
    emit_plot_data(result2, d2);
    write_result_json(result2, d2);
    for (const char* name : {"pmf.csv", "summary.csv", "fit.csv", "result.json"})
        CHECK(slurp(d1 / name) == slurp(d2 / name));
}

TEST_CASE("degenerate horizon N = 1 gives a Bernoulli count") {
    auto config = parse_experiment_config(R"({
      "system": {"kind": "doubling"},
      "metric": "torus-max",
      "t_param": 0.04,
      "rho_grid": [0.02],
      "n_centers": 30,
      "n_starts_per_center": 4,
      "seed": 7,
      "bootstrap_resamples": 50
    })");
    const auto result = run_return_stats(config);
    REQUIRE(result.per_rho.size() == 1);
    CHECK(result.per_rho[0].N_nominal == 1);
    CHECK(result.per_rho[0].pmf.k_max() <= 1); // S is 0 or 1
    CHECK_FALSE(result.has_fit);
}

TEST_CASE("emit_plot_data: schema, empty result, round-trip") {
    ExperimentResult empty;
    empty.config_echo = "{}";
    const auto dir = fresh_dir("empty");
    emit_plot_data(empty, dir);
    CHECK(slurp(dir / "pmf.csv") == "rho,k,empirical_mass,poisson_mass\n");
    CHECK(slurp(dir / "summary.csv") ==
          "rho,mu_ball_mean,N_nominal,centers_total,excluded_centers,"
          "unknown_centers,n_samples,sup_distance,sup_ci_lo,sup_ci_hi,"
          "tv_distance,tv_ci_lo,tv_ci_hi\n");
    CHECK_FALSE(fs::exists(dir / "fit.csv"));

    // re-parsed summary equals the in-memory records
    auto config = parse_experiment_config(kSmallConfig);
    const auto result = run_return_stats(config);
    const auto dir2 = fresh_dir("roundtrip");
    emit_plot_data(result, dir2);
    const auto rows = parse_summary_csv(dir2 / "summary.csv");
    REQUIRE(rows.size() == result.per_rho.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].rho == doctest::Approx(result.per_rho[i].rho).epsilon(1e-12));
        CHECK(rows[i].mu_ball_mean ==
              doctest::Approx(result.per_rho[i].mu_ball_mean).epsilon(1e-12));
        CHECK(rows[i].N_nominal == result.per_rho[i].N_nominal);
        CHECK(rows[i].n_samples == result.per_rho[i].n_samples);
        CHECK(rows[i].sup_distance ==
              doctest::Approx(result.per_rho[i].sup_distance).epsilon(1e-12));
        CHECK(rows[i].tv_ci_hi ==
              doctest::Approx(result.per_rho[i].tv_ci_hi).epsilon(1e-12));
    }
}

TEST_CASE("run_short_return_scan emits the estimates and the sp table") {
    auto config = parse_experiment_config(kSmallConfig);
    config.a_frak = 0.5;
    const auto scan = run_short_return_scan(config);
    REQUIRE(scan.per_rho.size() == 3);
    for (std::size_t i = 0; i + 1 < scan.per_rho.size(); ++i)
        CHECK(scan.per_rho[i].first > scan.per_rho[i + 1].first);
    for (const auto& [rho, est] : scan.per_rho) {
        CHECK(est.samples == 300);
        CHECK(est.lower <= est.upper);
    }
    const auto dir = fresh_dir("scan");
    write_short_return_files(scan, dir);
    const auto v_text = slurp(dir / "v_measure.csv");
    CHECK(v_text.rfind("rho,lower,upper,std_error,n_intersects,n_unknown,samples\n", 0) == 0);
    const auto sp_text = slurp(dir / "sp_table.csv");
    CHECK(sp_text.rfind("rho,n,p,s_p,rho_prime,n_prime\n", 0) == 0);
}

TEST_CASE("run_chen_stein_suite: zero violations, stationarity enforcement") {
    ChenSteinSuiteConfig config;
    config.instances = 6;
    config.n_max = 10;
    config.seed = 11;
    const auto result = run_chen_stein_suite(config);
    CHECK(!result.rows.empty());
    for (const auto& row : result.rows) {
        CHECK(row.interval_violations == 0);
        CHECK(row.intervals_checked > 0);
        CHECK(row.bound_singleton >= row.max_singleton_dev);
        CHECK(row.R1 >= 0.0);
        CHECK(row.R2 >= 0.0);
    }
    const auto dir = fresh_dir("cs");
    write_chen_stein_files(result, dir);
    CHECK(slurp(dir / "chen_stein_report.csv").find("interval_violations") !=
          std::string::npos);

    // the stationary start is fine; anything else violates the hypothesis
    ChenSteinSuiteConfig bad = config;
    bad.start_law = std::array<double, 2>{0.5, 0.5};
    CHECK_THROWS_AS(run_chen_stein_suite(bad), hypothesis_error);

    ChenSteinSuiteConfig iid = config;
    iid.model_kind = "iid";
    const auto r2 = run_chen_stein_suite(iid);
    for (const auto& row : r2.rows) {
        CHECK(row.R1 == 0.0);
        CHECK(row.interval_violations == 0);
    }
}

TEST_CASE("run_tower_checks") {
    TowerCheckConfig config;
    config.lambda_tail = 5.0;
    config.max_R = 2000;
    config.beams_per_height = 3;
    config.orbit_length = 200000;
    config.distortion_samples = 300;
    config.distortion_q = 5;
    config.seed = 3;
    const auto result = run_tower_checks(config);
    CHECK(result.distortion_linear == 0.0);
    CHECK(result.distortion_wobble > 0.0);
    CHECK(result.distortion_wobble <= result.wobble_bound);
    CHECK(std::abs(result.omega_slope + result.theta_expected) < 0.3);
    CHECK(std::abs(result.kac_fraction - result.kac_expected) <=
          3.0 * result.kac_std_error + 1e-4);
    const auto dir = fresh_dir("tower");
    write_tower_files(result, dir);
    CHECK(slurp(dir / "tower.json").find("lambda_tail") != std::string::npos);
    CHECK(slurp(dir / "tower_report.json").find("kac_fraction") != std::string::npos);
}

TEST_CASE("a horizon flagging every center raises a typed error") {
    // with a huge a_frak the scan reaches depths where every ball image
    // covers the space, so every sampled center is a short-return center
    auto config = parse_experiment_config(R"({
      "system": {"kind": "doubling"},
      "t_param": 1.0, "rho_grid": [0.2], "n_centers": 20,
      "n_starts_per_center": 2, "a_frak": 20.0, "seed": 13
    })");
    CHECK_THROWS_AS(run_return_stats(config), config_error);
}

TEST_CASE("the Poisson-limit run rejects light intermittent tails") {
    auto config = parse_experiment_config(R"({
      "system": {"kind": "intermittent", "alpha_pm": 0.3},
      "t_param": 1.0, "rho_grid": [0.01], "n_centers": 10,
      "n_starts_per_center": 2, "seed": 3, "mu_orbit_length": 2000
    })");
    CHECK_THROWS_AS(run_return_stats(config), config_error);
    // alpha below 1/4 is allowed (tail exponent above 4)
    config.system = systems::SystemSpec::intermittent(0.2);
    config.mu_orbit_length = 5000;
    const auto result = run_return_stats(config);
    CHECK(result.per_rho.size() == 1);
}

TEST_CASE("cli exit codes") {
    const auto ok_dir = fresh_dir("cli_ok");
    CHECK(cli_main({"return-stats", "--seed", "5", "--rho", "0.01", "--centers", "10",
                    "--starts", "2", "--output-dir", ok_dir.string()}) == kExitOk);
    CHECK(fs::exists(ok_dir / "summary.csv"));
    CHECK(fs::exists(ok_dir / "result.json"));

    // flags override config-file keys
    const auto cfg_path = fs::temp_directory_path() / "retstat_cfg.json";
    std::ofstream(cfg_path.string()) << R"({
      "system": {"kind": "doubling"}, "rho_grid": [0.01],
      "n_centers": 9, "n_starts_per_center": 2, "seed": 77
    })";
    const auto ov_dir = fresh_dir("cli_override");
    CHECK(cli_main({"--config", cfg_path.string(), "return-stats", "--centers", "13",
                    "--output-dir", ov_dir.string()}) == kExitOk);
    const auto rows = parse_summary_csv(ov_dir / "summary.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].centers_total == 13);

    // missing seed is a config error
    CHECK(cli_main({"return-stats", "--rho", "0.01"}) == kExitConfig);
    // unknown subcommand
    CHECK(cli_main({"frobnicate"}) == kExitConfig);
    // non-stationary start violates the theorem hypothesis
    CHECK(cli_main({"chen-stein", "--seed", "1", "--instances", "2", "--start", "0.5",
                    "0.5", "--output-dir", fresh_dir("cli_cs").string()}) ==
          kExitHypothesis);
    // unwritable output directory
    const auto blocker = fs::temp_directory_path() / "retstat_blocker";
    std::ofstream(blocker.string()) << "x";
    CHECK(cli_main({"short-returns", "--seed", "2", "--rho", "0.01", "--v-samples",
                    "150", "--output-dir", (blocker / "sub").string()}) == kExitIo);

    // scaling emits the fit files
    const auto sc_dir = fresh_dir("cli_scaling");
    CHECK(cli_main({"scaling", "--seed", "6", "--rho", "0.02", "--rho", "0.01",
                    "--rho", "0.005", "--centers", "12", "--starts", "2",
                    "--output-dir", sc_dir.string()}) == kExitOk);
    CHECK(fs::exists(sc_dir / "fit.csv"));
    CHECK(fs::exists(sc_dir / "summary.csv"));
    CHECK(fs::exists(sc_dir / "run.json"));
    CHECK_FALSE(fs::exists(sc_dir / "result.json"));

    // tower subcommand writes its reports
    const auto tw_dir = fresh_dir("cli_tower");
    CHECK(cli_main({"tower", "--seed", "4", "--max-r", "500", "--orbit-length",
                    "50000", "--distortion-samples", "100", "--output-dir",
                    tw_dir.string()}) == kExitOk);
    CHECK(fs::exists(tw_dir / "tower.json"));
}
