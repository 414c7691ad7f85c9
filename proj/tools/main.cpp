#include "cfma/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cmd_run(const std::string& config_path, std::uint64_t seed, bool seed_set, int trials,
            const std::string& out_path, const std::string& format, int threads) {
    cfma::ExperimentConfig cfg;
    try {
        cfg = config_path.empty() ? cfma::desk_profile()
                                  : cfma::experiment_from_json(read_file(config_path));
        if (seed_set) cfg.seed = seed;
        if (trials > 0) cfg.trials = trials;
        if (threads > 0) cfg.threads = threads;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    try {
        const auto records = cfma::run_monte_carlo(cfg);
        std::cout << cfma::format_aggregate_table(cfma::aggregate(records));
        if (!out_path.empty()) {
            const auto fmt = format == "jsonl" ? cfma::ResultFormat::JsonLines
                                               : cfma::ResultFormat::Csv;
            cfma::emit_results(records, out_path, fmt);
            std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}

int cmd_latency(int g, int n_cp, int dft_len, double b_s, int data_dft) {
    try {
        const double lat = cfma::pilot_latency_s(g, n_cp, dft_len, b_s);
        const double red = cfma::latency_reduction(n_cp, dft_len, data_dft);
        std::printf("pilot_latency_us: %.6f\n", lat * 1e6);
        std::printf("latency_reduction_percent: %.2f\n", red * 100.0);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_complexity(const cfma::ComplexityParams& p, bool edge) {
    const long long cloud = cfma::complexity_cloud(p);
    std::printf("C_cloud: %lld\n", static_cast<long long>(cloud));
    if (edge) std::printf("C_edge: %lld\n", static_cast<long long>(cfma::complexity_edge(p)));
    return 0;
}

int cmd_replay(const std::string& config_path, std::uint64_t seed, int trial, int g,
               const std::string& out_path, const std::string& in_path) {
    try {
        if (!in_path.empty()) {
            const cfma::Scenario scen = cfma::scenario_from_json(read_file(in_path));
            const cfma::Scenario replayed = cfma::scenario_from_json(cfma::scenario_to_json(scen));
            double diff = 0.0;
            for (std::size_t p = 0; p < scen.channels.spatial.size(); ++p)
                for (std::size_t b = 0; b < scen.channels.spatial[p].size(); ++b)
                    diff += (scen.channels.spatial[p][b] - replayed.channels.spatial[p][b])
                                .squaredNorm();
            std::printf("loaded scenario: K=%d B=%d G=%d actives=%d roundtrip_error=%g\n",
                        scen.cfg.num_ues, scen.cfg.num_aps, scen.pilots.g, scen.act.k_a, diff);
            return 0;
        }
        cfma::ExperimentConfig cfg = config_path.empty()
                                         ? cfma::desk_profile()
                                         : cfma::experiment_from_json(read_file(config_path));
        cfg.seed = seed;
        cfma::Rng rng = cfma::Rng(cfg.seed).substream("trial", static_cast<std::uint64_t>(trial));
        const cfma::Scenario scen = cfma::make_scenario(cfg.scenario, g, rng);
        const std::string text = cfma::scenario_to_json(scen);
        if (out_path.empty()) {
            std::cout << text << "\n";
        } else {
            std::ofstream out(out_path);
            if (!out) throw std::runtime_error("cannot open " + out_path);
            out << text;
            std::cout << "wrote scenario dump to " << out_path << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cell-free massive MIMO grant-free access simulator"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Monte Carlo experiment from a config file");
    std::string config_path, out_path, format = "csv";
    std::uint64_t seed = 1;
    int trials = 0, threads = 0;
    run->add_option("--config", config_path, "experiment config (JSON); default: desk profile");
    auto* seed_opt = run->add_option("--seed", seed, "master seed");
    run->add_option("--trials", trials, "override trial count");
    run->add_option("--out", out_path, "output file for per-trial records");
    run->add_option("--format", format, "csv | jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    run->add_option("--threads", threads, "worker threads (0: hardware)");

    // latency
    auto* lat = app.add_subcommand("latency", "pilot-phase frame latency calculator");
    int g = 40, n_cp = 64, dft_len = 64, data_dft = 2048;
    double b_s = 10e6;
    lat->add_option("--g", g, "pilot length (time slots)");
    lat->add_option("--ncp", n_cp, "cyclic prefix length");
    lat->add_option("--dft", dft_len, "pilot-phase DFT size");
    lat->add_option("--bs", b_s, "bandwidth in Hz");
    lat->add_option("--data-dft", data_dft, "data-phase DFT size");

    // complexity
    auto* cx = app.add_subcommand("complexity", "processing complexity estimator");
    cfma::ComplexityParams cp;
    bool edge = false;
    cx->add_option("--tsic", cp.t_sic);
    cx->add_option("--tamp", cp.t_amp);
    cx->add_option("--ttur", cp.t_tur);
    cx->add_option("--g", cp.g);
    cx->add_option("--k", cp.k);
    cx->add_option("--m", cp.m);
    cx->add_option("--p", cp.p);
    cx->add_option("--b", cp.b);
    cx->add_option("--mc", cp.m_c);
    cx->add_option("--ka", cp.k_a);
    cx->add_flag("--edge", edge, "also evaluate the per-DPU edge cost");
    cx->add_option("--ki", cp.k_i);
    cx->add_option("--mi", cp.m_i);
    cx->add_option("--nco", cp.n_co);
    cx->add_option("--kai", cp.k_a_i);

    // replay
    auto* rp = app.add_subcommand("replay", "dump or verify a scenario for exact replay");
    std::string rp_config, rp_out, rp_in;
    std::uint64_t rp_seed = 1;
    int rp_trial = 0, rp_g = 30;
    rp->add_option("--config", rp_config, "experiment config (JSON)");
    rp->add_option("--seed", rp_seed, "master seed");
    rp->add_option("--trial", rp_trial, "trial index");
    rp->add_option("--g", rp_g, "pilot length");
    rp->add_option("--out", rp_out, "dump file (default: stdout)");
    rp->add_option("--in", rp_in, "load a dump and verify replay");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed())
        return cmd_run(config_path, seed, seed_opt->count() > 0, trials, out_path, format, threads);
    if (lat->parsed()) return cmd_latency(g, n_cp, dft_len, b_s, data_dft);
    if (cx->parsed()) return cmd_complexity(cp, edge);
    if (rp->parsed()) return cmd_replay(rp_config, rp_seed, rp_trial, rp_g, rp_out, rp_in);
    return 1;
}
