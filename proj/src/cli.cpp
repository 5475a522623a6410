#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "retstat/errors.hpp"
#include "retstat/experiments.hpp"

namespace retstat::experiments {

namespace {

using nlohmann::json;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& e) {
        throw config_error(std::string("config parse: ") + e.what());
    }
}

// flags shared by the experiment-style subcommands; values present only
// when the flag was passed, so config-file keys survive unless overridden
struct ExperimentFlags {
    std::optional<std::string> system_kind;
    std::optional<double> alpha_pm;
    std::optional<double> lipschitz_a;
    std::optional<std::string> metric;
    std::optional<double> t_param;
    std::vector<double> rho;
    std::optional<std::size_t> n_centers;
    std::optional<std::size_t> n_starts;
    std::optional<double> a_frak;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> workers;
    std::optional<std::size_t> v_samples;
    std::optional<double> b_frak;

    void attach(CLI::App* cmd) {
        cmd->add_option("--system", system_kind, "system kind: doubling|cat|intermittent|gauss");
        cmd->add_option("--alpha-pm", alpha_pm, "intermittent map parameter");
        cmd->add_option("--lipschitz-a", lipschitz_a, "expansion constant override");
        cmd->add_option("--metric", metric, "interval|torus-max|torus-euclid");
        cmd->add_option("--t", t_param, "time parameter t");
        cmd->add_option("--rho", rho, "rho grid (strictly decreasing)");
        cmd->add_option("--centers", n_centers, "number of ball centers");
        cmd->add_option("--starts", n_starts, "starts per center");
        cmd->add_option("--a-frak", a_frak, "short-return horizon constant (0 = default)");
        cmd->add_option("--seed", seed, "master seed (mandatory)");
        cmd->add_option("--output-dir", output_dir, "output directory");
        cmd->add_option("--workers", workers, "worker threads");
        cmd->add_option("--v-samples", v_samples, "Monte Carlo samples for mu(V_rho)");
        cmd->add_option("--b-frak", b_frak, "inflation-table split constant (< 1/3)");
    }

    json merged(const json& base) const {
        json j = base;
        if (system_kind || alpha_pm || lipschitz_a) {
            json sys = j.value("system", json::object());
            if (system_kind) sys["kind"] = *system_kind;
            if (alpha_pm) sys["alpha_pm"] = *alpha_pm;
            if (lipschitz_a) sys["lipschitz_a"] = *lipschitz_a;
            j["system"] = sys;
        }
        if (metric) j["metric"] = *metric;
        if (t_param) j["t_param"] = *t_param;
        if (!rho.empty()) j["rho_grid"] = rho;
        if (n_centers) j["n_centers"] = *n_centers;
        if (n_starts) j["n_starts_per_center"] = *n_starts;
        if (a_frak) j["a_frak"] = *a_frak;
        if (seed) j["seed"] = *seed;
        if (output_dir) j["output_dir"] = *output_dir;
        if (workers) j["workers"] = *workers;
        if (v_samples) j["v_samples"] = *v_samples;
        if (b_frak) j["b_frak"] = *b_frak;
        return j;
    }
};

int run_with_exit_codes(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const hypothesis_error& e) {
        std::cerr << "hypothesis violation: " << e.what() << '\n';
        return kExitHypothesis;
    } catch (const io_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
}

} // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"retstat: return-time statistics and Poisson approximation toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file")->expected(1);

    auto* cmd_return = app.add_subcommand("return-stats",
                                          "hit statistics of shrinking balls vs Poisson");
    auto* cmd_scaling = app.add_subcommand("scaling",
                                           "log-decay fit of the Poisson distance");
    auto* cmd_short = app.add_subcommand("short-returns",
                                         "Monte Carlo size of the very-short-return set");
    auto* cmd_cs = app.add_subcommand("chen-stein", "exact small-N bound verification");
    auto* cmd_tower = app.add_subcommand("tower", "model tower diagnostics");

    ExperimentFlags ret_flags, scaling_flags, short_flags;
    ret_flags.attach(cmd_return);
    scaling_flags.attach(cmd_scaling);
    short_flags.attach(cmd_short);

    // chen-stein flags
    std::optional<std::string> cs_kind;
    std::optional<std::size_t> cs_instances, cs_nmax;
    std::vector<std::size_t> cs_p;
    std::optional<std::uint64_t> cs_seed;
    std::optional<std::string> cs_out;
    std::vector<double> cs_start;
    cmd_cs->add_option("--kind", cs_kind, "model kind: markov|iid");
    cmd_cs->add_option("--instances", cs_instances, "number of randomized instances");
    cmd_cs->add_option("--n-max", cs_nmax, "largest N");
    cmd_cs->add_option("--p", cs_p, "gap parameters");
    cmd_cs->add_option("--seed", cs_seed, "master seed (mandatory)");
    cmd_cs->add_option("--output-dir", cs_out, "output directory");
    cmd_cs->add_option("--start", cs_start, "explicit start law (2 values)")->expected(2);

    // tower flags
    std::optional<double> tw_lambda, tw_wobble;
    std::optional<std::size_t> tw_maxr, tw_beams, tw_dist_samples, tw_dist_q;
    std::optional<std::uint64_t> tw_orbit, tw_seed;
    std::optional<std::string> tw_out;
    cmd_tower->add_option("--lambda", tw_lambda, "tail exponent (> 4)");
    cmd_tower->add_option("--max-r", tw_maxr, "return-time truncation");
    cmd_tower->add_option("--beams", tw_beams, "beams per height");
    cmd_tower->add_option("--wobble", tw_wobble, "log-slope wobble delta");
    cmd_tower->add_option("--distortion-samples", tw_dist_samples, "distortion pairs");
    cmd_tower->add_option("--distortion-q", tw_dist_q, "distortion separation q");
    cmd_tower->add_option("--orbit-length", tw_orbit, "Kac orbit length");
    cmd_tower->add_option("--seed", tw_seed, "master seed (mandatory)");
    cmd_tower->add_option("--output-dir", tw_out, "output directory");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("retstat");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    const auto run_experiment = [&](const ExperimentFlags& flags, bool scaling_only,
                                    bool short_returns) {
        return run_with_exit_codes([&] {
            const json merged = flags.merged(load_config_file(config_path));
            const ExperimentConfig config = parse_experiment_config(merged.dump());
            if (short_returns) {
                const ShortReturnScanResult result = run_short_return_scan(config);
                write_short_return_files(result, config.output_dir);
                for (const auto& [rho, est] : result.per_rho)
                    std::cout << "rho=" << rho << "  mu(V) in [" << est.lower << ", "
                              << est.upper << "]  se=" << est.std_error << '\n';
            } else {
                const ExperimentResult result = run_return_stats(config);
                emit_plot_data(result, config.output_dir);
                if (scaling_only) write_run_config(result.config_echo, config.output_dir);
                else write_result_json(result, config.output_dir);
                for (const auto& rec : result.per_rho)
                    std::cout << "rho=" << rec.rho << "  sup=" << rec.sup_distance
                              << "  tv=" << rec.tv_distance << "  excluded="
                              << rec.excluded_centers << '\n';
                if (result.has_fit)
                    std::cout << "kappa_hat=" << result.fit.kappa_hat
                              << "  r2=" << result.fit.r_squared << '\n';
            }
            // wall time goes to the console, never into the output files,
            // so identical seeds reproduce byte-identical artifacts
            std::cout << "done in " << elapsed() << " s -> " << config.output_dir << '\n';
        });
    };

    if (cmd_return->parsed()) return run_experiment(ret_flags, false, false);
    if (cmd_scaling->parsed()) return run_experiment(scaling_flags, true, false);
    if (cmd_short->parsed()) return run_experiment(short_flags, false, true);

    if (cmd_cs->parsed()) {
        return run_with_exit_codes([&] {
            const json base = load_config_file(config_path);
            ChenSteinSuiteConfig config;
            bool seed_set = false;
            for (const auto& [key, value] : base.items()) {
                if (key == "model_kind") config.model_kind = value.get<std::string>();
                else if (key == "instances") config.instances = value.get<std::size_t>();
                else if (key == "n_max") config.n_max = value.get<std::size_t>();
                else if (key == "p_list") config.p_list = value.get<std::vector<std::size_t>>();
                else if (key == "seed") { config.seed = value.get<std::uint64_t>(); seed_set = true; }
                else if (key == "output_dir") config.output_dir = value.get<std::string>();
                else if (key == "start_law") {
                    const auto v = value.get<std::vector<double>>();
                    if (v.size() != 2) throw config_error("start_law needs 2 entries");
                    config.start_law = std::array<double, 2>{v[0], v[1]};
                } else throw config_error("unknown chen-stein key: " + key);
            }
            if (cs_kind) config.model_kind = *cs_kind;
            if (cs_instances) config.instances = *cs_instances;
            if (cs_nmax) config.n_max = *cs_nmax;
            if (!cs_p.empty()) config.p_list = cs_p;
            if (cs_seed) { config.seed = *cs_seed; seed_set = true; }
            if (cs_out) config.output_dir = *cs_out;
            if (cs_start.size() == 2)
                config.start_law = std::array<double, 2>{cs_start[0], cs_start[1]};
            if (!seed_set) throw config_error("seed is mandatory (no wall-clock seeding)");

            const ChenSteinSuiteResult result = run_chen_stein_suite(config);
            write_chen_stein_files(result, config.output_dir);
            std::size_t violations = 0;
            for (const auto& row : result.rows) violations += row.interval_violations;
            std::cout << result.rows.size() << " rows, " << violations
                      << " interval violations\n";
            std::cout << "done in " << elapsed() << " s -> " << config.output_dir << '\n';
        });
    }

    if (cmd_tower->parsed()) {
        return run_with_exit_codes([&] {
            const json base = load_config_file(config_path);
            TowerCheckConfig config;
            bool seed_set = false;
            for (const auto& [key, value] : base.items()) {
                if (key == "lambda_tail") config.lambda_tail = value.get<double>();
                else if (key == "max_r") config.max_R = value.get<std::size_t>();
                else if (key == "beams_per_height")
                    config.beams_per_height = value.get<std::size_t>();
                else if (key == "wobble_delta") config.wobble_delta = value.get<double>();
                else if (key == "distortion_samples")
                    config.distortion_samples = value.get<std::size_t>();
                else if (key == "distortion_q") config.distortion_q = value.get<std::size_t>();
                else if (key == "orbit_length") config.orbit_length = value.get<std::uint64_t>();
                else if (key == "seed") { config.seed = value.get<std::uint64_t>(); seed_set = true; }
                else if (key == "output_dir") config.output_dir = value.get<std::string>();
                else throw config_error("unknown tower key: " + key);
            }
            if (tw_lambda) config.lambda_tail = *tw_lambda;
            if (tw_maxr) config.max_R = *tw_maxr;
            if (tw_beams) config.beams_per_height = *tw_beams;
            if (tw_wobble) config.wobble_delta = *tw_wobble;
            if (tw_dist_samples) config.distortion_samples = *tw_dist_samples;
            if (tw_dist_q) config.distortion_q = *tw_dist_q;
            if (tw_orbit) config.orbit_length = *tw_orbit;
            if (tw_seed) { config.seed = *tw_seed; seed_set = true; }
            if (tw_out) config.output_dir = *tw_out;
            if (!seed_set) throw config_error("seed is mandatory (no wall-clock seeding)");

            const TowerCheckResult result = run_tower_checks(config);
            write_tower_files(result, config.output_dir);
            std::cout << "omega slope " << result.omega_slope << " (theta "
                      << result.theta_expected << ")\n"
                      << "distortion linear " << result.distortion_linear << ", wobble "
                      << result.distortion_wobble << " (bound " << result.wobble_bound
                      << ")\n"
                      << "kac " << result.kac_fraction << " vs " << result.kac_expected
                      << " +- " << result.kac_std_error << '\n';
            std::cout << "done in " << elapsed() << " s -> " << config.output_dir << '\n';
        });
    }

    return kExitConfig;
}

} // namespace retstat::experiments
