#include "cfma/harness.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace cfma {

using json = nlohmann::json;

void ExperimentConfig::validate() const {
    if (trials < 1) throw InvalidArgument("ExperimentConfig: trials must be >= 1");
    if (q_bits < 0) throw InvalidArgument("ExperimentConfig: q_bits must be >= 0");
    for (int g : g_values)
        if (g < 1) throw InvalidArgument("ExperimentConfig: pilot lengths must be positive");
    for (const RunSpec& r : runs) {
        if (r.kind != "cloud" && r.kind != "edge" && r.kind != "multicell")
            throw InvalidArgument("ExperimentConfig: unknown run kind '" + r.kind + "'");
        if (r.t_sic < 1) throw InvalidArgument("ExperimentConfig: t_sic must be >= 1");
    }
    sic.validate();
}

ExperimentConfig desk_profile() {
    ExperimentConfig cfg;
    cfg.scenario.num_ues = 200;
    cfg.scenario.num_active = 10;
    cfg.scenario.antennas_per_ap = 8;
    cfg.scenario.num_pilot_subcarriers = 1;
    cfg.g_values = {30};
    cfg.trials = 200;
    cfg.q_bits = 10;
    cfg.runs = {{"cloud-sic", "cloud", Method::Sic, 0, {}, false, 3}};
    return cfg;
}

ExperimentConfig table1_profile() {
    ExperimentConfig cfg;
    cfg.scenario = ScenarioConfig{};  // Table-style defaults
    cfg.scenario.antennas_per_ap = 16;
    cfg.g_values = {30};
    cfg.trials = 10;
    cfg.q_bits = 10;
    cfg.runs = {{"cloud-sic", "cloud", Method::Sic, 0, {}, false, 3}};
    return cfg;
}

double compute_pe(const std::vector<std::uint8_t>& alpha_hat,
                  const std::vector<std::uint8_t>& alpha) {
    if (alpha_hat.size() != alpha.size()) throw InvalidArgument("compute_pe: length mismatch");
    if (alpha.empty()) throw InvalidArgument("compute_pe: empty activity vectors");
    int errors = 0;
    for (std::size_t i = 0; i < alpha.size(); ++i)
        errors += std::abs(static_cast<int>(alpha_hat[i]) - static_cast<int>(alpha[i]));
    return static_cast<double>(errors) / static_cast<double>(alpha.size());
}

NmseResult compute_nmse(const DetectionResult& det, const Scenario& scen) {
    NmseResult out;
    if (scen.act.active_set.empty()) return out;  // undefined, flagged skipped
    double num = 0.0, den = 0.0;
    const std::size_t p_count = scen.channels.spatial.size();
    for (int u : scen.act.active_set) {
        const int b_star = scen.geom.nearest_ap(u);
        const auto it = std::find(det.ap_ids.begin(), det.ap_ids.end(), b_star);
        for (std::size_t p = 0; p < p_count; ++p) {
            const auto truth = scen.channels.spatial[p][b_star].row(u);
            den += truth.squaredNorm();
            if (it != det.ap_ids.end()) {
                const std::size_t a = static_cast<std::size_t>(it - det.ap_ids.begin());
                num += (det.h_hat[p][a].row(u) - truth).squaredNorm();
            } else {
                num += truth.squaredNorm();  // AP not covered: counts as a miss
            }
        }
    }
    if (!(den > 0.0)) return out;
    out.valid = true;
    out.db = std::max(10.0 * std::log10(num / den), -120.0);
    return out;
}

namespace {

DetectionResult dispatch_run(const RunSpec& run, const ExperimentConfig& cfg, const Scenario& scen,
                             const ObservationSet& obs, const RMatrix& tau, Rng rng) {
    SicConfig sic = cfg.sic;
    sic.t_sic = run.t_sic;
    sic.force_slm = run.force_slm;
    sic.low_res_quantize = cfg.q_bits >= 1 && cfg.q_bits <= cfg.low_res_q_max;

    if (run.kind == "multicell")
        return baseline_multicell(obs, scen.pilots, scen.geom, tau, sic, cfg.gamp, 0.5);

    ParadigmConfig pc;
    pc.method = run.method;
    pc.sic = sic;
    pc.gamp = cfg.gamp;
    if (run.kind == "edge") {
        pc.paradigm = Paradigm::Edge;
        std::vector<int> dpu_set = run.dpu_set;
        if (dpu_set.empty()) {
            dpu_set.resize(scen.geom.num_aps());
            std::iota(dpu_set.begin(), dpu_set.end(), 0);
        }
        const int n_co = run.n_co > 0 ? run.n_co : scen.geom.num_aps();
        pc.grouping = form_edge_groups(scen.geom, dpu_set, n_co);
    } else {
        pc.paradigm = Paradigm::Cloud;
    }
    return run_paradigm(pc, obs, scen.pilots, scen.geom, tau, scen.cfg, rng);
}

}  // namespace

std::vector<TrialRecord> run_monte_carlo(const ExperimentConfig& cfg) {
    cfg.validate();
    const int n_g = static_cast<int>(cfg.g_values.size());
    const int n_runs = static_cast<int>(cfg.runs.size());
    const int n_points = n_g * cfg.trials;
    std::vector<TrialRecord> records(static_cast<std::size_t>(n_points) * n_runs);
    if (records.empty()) return records;

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int item = next.fetch_add(1);
            if (item >= n_points) return;
            const int gi = item / cfg.trials;
            const int trial = item % cfg.trials;
            const int g = cfg.g_values[static_cast<std::size_t>(gi)];

            Rng trial_rng = Rng(cfg.seed).substream("trial", static_cast<std::uint64_t>(trial));
            const Scenario scen = make_scenario(cfg.scenario, g, trial_rng);
            const auto raw = synthesize_rx(scen.pilots, scen.channels, scen.noise_var,
                                           trial_rng.substream("noise", static_cast<std::uint64_t>(g)));
            const ObservationSet obs =
                cfg.q_bits >= 1 ? quantize_observations(raw, cfg.q_bits, scen.noise_var)
                                : passthrough_observations(raw, scen.noise_var);
            const RMatrix tau = build_prior_tau(scen.geom, scen.cfg);

            for (int ri = 0; ri < n_runs; ++ri) {
                const RunSpec& run = cfg.runs[static_cast<std::size_t>(ri)];
                TrialRecord rec;
                rec.run = run.name;
                rec.g = g;
                rec.q_bits = cfg.q_bits;
                rec.n_co = run.kind == "edge"
                               ? (run.n_co > 0 ? run.n_co : scen.geom.num_aps())
                               : 0;
                rec.trial = trial;
                rec.seed = cfg.seed;
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    const DetectionResult det =
                        dispatch_run(run, cfg, scen, obs, tau, trial_rng.substream(run.name));
                    rec.pe = compute_pe(det.alpha_hat, scen.act.alpha);
                    const NmseResult nm = compute_nmse(det, scen);
                    rec.nmse_db = nm.db;
                    rec.nmse_valid = nm.valid;
                    rec.aborted = det.aborted;
                } catch (const std::exception&) {
                    rec.failed = true;
                    rec.pe = 1.0;
                    rec.nmse_valid = false;
                }
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                records[static_cast<std::size_t>(item) * n_runs + ri] = std::move(rec);
            }
        }
    };

    int n_threads = cfg.threads > 0 ? cfg.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_points));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    return records;
}

std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& records) {
    std::vector<AggregateRow> rows;
    auto find_row = [&](const std::string& run, int g) -> AggregateRow& {
        for (AggregateRow& r : rows)
            if (r.run == run && r.g == g) return r;
        rows.push_back({run, g, 0, 0.0, 0.0, 0.0, 0});
        return rows.back();
    };
    for (const TrialRecord& rec : records) {
        AggregateRow& r = find_row(rec.run, rec.g);
        r.n += 1;
        r.mean_pe += rec.pe;
        if (rec.nmse_valid) {
            r.mean_nmse_db += rec.nmse_db;
            r.n_nmse += 1;
        }
    }
    for (AggregateRow& r : rows) {
        r.mean_pe /= r.n;
        if (r.n_nmse > 0) r.mean_nmse_db /= r.n_nmse;
    }
    // second pass for the standard error of the mean
    for (AggregateRow& r : rows) {
        double acc = 0.0;
        for (const TrialRecord& rec : records)
            if (rec.run == r.run && rec.g == r.g) acc += (rec.pe - r.mean_pe) * (rec.pe - r.mean_pe);
        r.stderr_pe = r.n > 1 ? std::sqrt(acc / (r.n - 1)) / std::sqrt(static_cast<double>(r.n)) : 0.0;
    }
    return rows;
}

std::string format_aggregate_table(const std::vector<AggregateRow>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s %6s %6s %12s %12s %12s %8s\n", "run", "G", "n",
                  "mean_Pe", "stderr_Pe", "NMSE_dB", "n_nmse");
    os << buf;
    for (const AggregateRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-24s %6d %6d %12.6f %12.6f %12.3f %8d\n", r.run.c_str(),
                      r.g, r.n, r.mean_pe, r.stderr_pe, r.n_nmse > 0 ? r.mean_nmse_db : 0.0,
                      r.n_nmse);
        os << buf;
    }
    return os.str();
}

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

constexpr const char* kCsvHeader =
    "run,g,q_bits,n_co,trial,seed,pe,nmse_db,nmse_valid,aborted,failed,wall_ms";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

json record_to_json(const TrialRecord& r) {
    return json{{"run", r.run},       {"g", r.g},
                {"q_bits", r.q_bits}, {"n_co", r.n_co},
                {"trial", r.trial},   {"seed", r.seed},
                {"pe", r.pe},         {"nmse_db", r.nmse_db},
                {"nmse_valid", r.nmse_valid}, {"aborted", r.aborted},
                {"failed", r.failed}, {"wall_ms", r.wall_ms}};
}

TrialRecord record_from_json(const json& j) {
    TrialRecord r;
    j.at("run").get_to(r.run);
    j.at("g").get_to(r.g);
    j.at("q_bits").get_to(r.q_bits);
    j.at("n_co").get_to(r.n_co);
    j.at("trial").get_to(r.trial);
    j.at("seed").get_to(r.seed);
    j.at("pe").get_to(r.pe);
    j.at("nmse_db").get_to(r.nmse_db);
    j.at("nmse_valid").get_to(r.nmse_valid);
    j.at("aborted").get_to(r.aborted);
    j.at("failed").get_to(r.failed);
    j.at("wall_ms").get_to(r.wall_ms);
    return r;
}

}  // namespace

void emit_results(const std::vector<TrialRecord>& records, const std::string& path,
                  ResultFormat format) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_results: cannot open " + path);
    if (format == ResultFormat::Csv) {
        out << kCsvHeader << "\r\n";
        for (const TrialRecord& r : records) {
            out << csv_quote(r.run) << ',' << r.g << ',' << r.q_bits << ',' << r.n_co << ','
                << r.trial << ',' << r.seed << ',' << fmt_double(r.pe) << ','
                << fmt_double(r.nmse_db) << ',' << (r.nmse_valid ? 1 : 0) << ','
                << (r.aborted ? 1 : 0) << ',' << (r.failed ? 1 : 0) << ','
                << fmt_double(r.wall_ms) << "\r\n";
        }
    } else {
        for (const TrialRecord& r : records) out << record_to_json(r).dump() << '\n';
    }
    if (!out) throw std::runtime_error("emit_results: write failure on " + path);
}

std::vector<TrialRecord> parse_results(const std::string& path, ResultFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_results: cannot open " + path);
    std::vector<TrialRecord> records;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (format == ResultFormat::Csv) {
            if (first) {
                first = false;
                continue;  // header
            }
            const auto f = split_csv_line(line);
            if (f.size() != 12) throw std::runtime_error("parse_results: malformed CSV row");
            TrialRecord r;
            r.run = f[0];
            r.g = std::stoi(f[1]);
            r.q_bits = std::stoi(f[2]);
            r.n_co = std::stoi(f[3]);
            r.trial = std::stoi(f[4]);
            r.seed = std::stoull(f[5]);
            r.pe = std::stod(f[6]);
            r.nmse_db = std::stod(f[7]);
            r.nmse_valid = f[8] == "1";
            r.aborted = f[9] == "1";
            r.failed = f[10] == "1";
            r.wall_ms = std::stod(f[11]);
            records.push_back(std::move(r));
        } else {
            records.push_back(record_from_json(json::parse(line)));
        }
    }
    return records;
}

namespace {

void scenario_cfg_from_json(const json& j, ScenarioConfig& c) {
    if (j.contains("num_ues")) j.at("num_ues").get_to(c.num_ues);
    if (j.contains("num_active")) j.at("num_active").get_to(c.num_active);
    if (j.contains("num_aps")) j.at("num_aps").get_to(c.num_aps);
    if (j.contains("antennas_per_ap")) j.at("antennas_per_ap").get_to(c.antennas_per_ap);
    if (j.contains("dft_size_pilot")) j.at("dft_size_pilot").get_to(c.dft_size_pilot);
    if (j.contains("num_pilot_subcarriers"))
        j.at("num_pilot_subcarriers").get_to(c.num_pilot_subcarriers);
    if (j.contains("pilot_subcarriers")) j.at("pilot_subcarriers").get_to(c.pilot_subcarriers);
    if (j.contains("bandwidth_hz")) j.at("bandwidth_hz").get_to(c.bandwidth_hz);
    if (j.contains("cp_length")) j.at("cp_length").get_to(c.cp_length);
    if (j.contains("dft_size_data")) j.at("dft_size_data").get_to(c.dft_size_data);
    if (j.contains("path_count_min")) j.at("path_count_min").get_to(c.path_count_min);
    if (j.contains("path_count_max")) j.at("path_count_max").get_to(c.path_count_max);
    if (j.contains("angular_spread_deg")) j.at("angular_spread_deg").get_to(c.angular_spread_deg);
    if (j.contains("tx_power_dbm")) j.at("tx_power_dbm").get_to(c.tx_power_dbm);
    if (j.contains("noise_psd_dbm_hz")) j.at("noise_psd_dbm_hz").get_to(c.noise_psd_dbm_hz);
    if (j.contains("coverage_radius_km")) j.at("coverage_radius_km").get_to(c.coverage_radius_km);
    if (j.contains("ap_spacing_km")) j.at("ap_spacing_km").get_to(c.ap_spacing_km);
    if (j.contains("guard_radius_km")) j.at("guard_radius_km").get_to(c.guard_radius_km);
}

}  // namespace

ExperimentConfig experiment_from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("profile")) {
        const std::string profile = j.at("profile").get<std::string>();
        if (profile == "desk") cfg = desk_profile();
        else if (profile == "table1") cfg = table1_profile();
        else throw InvalidArgument("experiment_from_json: unknown profile '" + profile + "'");
    }
    if (j.contains("scenario")) scenario_cfg_from_json(j.at("scenario"), cfg.scenario);
    if (j.contains("gamp")) {
        const json& g = j.at("gamp");
        if (g.contains("t_amp")) g.at("t_amp").get_to(cfg.gamp.t_amp);
        if (g.contains("t_tur")) g.at("t_tur").get_to(cfg.gamp.t_tur);
        if (g.contains("eta")) g.at("eta").get_to(cfg.gamp.eta);
        if (g.contains("rho_damp")) g.at("rho_damp").get_to(cfg.gamp.rho_damp);
        if (g.contains("gamma0")) g.at("gamma0").get_to(cfg.gamp.gamma0);
    }
    if (j.contains("sic")) {
        const json& s = j.at("sic");
        if (s.contains("p_det")) s.at("p_det").get_to(cfg.sic.p_det);
        if (s.contains("p_rel")) s.at("p_rel").get_to(cfg.sic.p_rel);
        if (s.contains("lambda_aus")) s.at("lambda_aus").get_to(cfg.sic.lambda_aus);
        if (s.contains("angular_gamma0")) s.at("angular_gamma0").get_to(cfg.sic.angular_gamma0);
    }
    if (j.contains("q_bits")) j.at("q_bits").get_to(cfg.q_bits);
    if (j.contains("low_res_q_max")) j.at("low_res_q_max").get_to(cfg.low_res_q_max);
    if (j.contains("g_values")) j.at("g_values").get_to(cfg.g_values);
    if (j.contains("trials")) j.at("trials").get_to(cfg.trials);
    if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
    if (j.contains("threads")) j.at("threads").get_to(cfg.threads);
    if (j.contains("runs")) {
        cfg.runs.clear();
        for (const json& r : j.at("runs")) {
            RunSpec spec;
            spec.name = r.at("name").get<std::string>();
            if (r.contains("kind")) r.at("kind").get_to(spec.kind);
            if (r.contains("method")) {
                const std::string m = r.at("method").get<std::string>();
                if (m == "sic") spec.method = Method::Sic;
                else if (m == "joint") spec.method = Method::Joint;
                else throw InvalidArgument("experiment_from_json: unknown method '" + m + "'");
            }
            if (r.contains("n_co")) r.at("n_co").get_to(spec.n_co);
            if (r.contains("dpu_set")) r.at("dpu_set").get_to(spec.dpu_set);
            if (r.contains("force_slm")) r.at("force_slm").get_to(spec.force_slm);
            if (r.contains("t_sic")) r.at("t_sic").get_to(spec.t_sic);
            cfg.runs.push_back(std::move(spec));
        }
    }
    cfg.validate();
    return cfg;
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
    json runs = json::array();
    for (const RunSpec& r : cfg.runs) {
        runs.push_back({{"name", r.name},
                        {"kind", r.kind},
                        {"method", r.method == Method::Sic ? "sic" : "joint"},
                        {"n_co", r.n_co},
                        {"dpu_set", r.dpu_set},
                        {"force_slm", r.force_slm},
                        {"t_sic", r.t_sic}});
    }
    json j;
    j["scenario"] = {{"num_ues", cfg.scenario.num_ues},
                     {"num_active", cfg.scenario.num_active},
                     {"num_aps", cfg.scenario.num_aps},
                     {"antennas_per_ap", cfg.scenario.antennas_per_ap},
                     {"dft_size_pilot", cfg.scenario.dft_size_pilot},
                     {"num_pilot_subcarriers", cfg.scenario.num_pilot_subcarriers},
                     {"bandwidth_hz", cfg.scenario.bandwidth_hz},
                     {"cp_length", cfg.scenario.cp_length},
                     {"dft_size_data", cfg.scenario.dft_size_data},
                     {"path_count_min", cfg.scenario.path_count_min},
                     {"path_count_max", cfg.scenario.path_count_max},
                     {"angular_spread_deg", cfg.scenario.angular_spread_deg},
                     {"tx_power_dbm", cfg.scenario.tx_power_dbm},
                     {"noise_psd_dbm_hz", cfg.scenario.noise_psd_dbm_hz},
                     {"coverage_radius_km", cfg.scenario.coverage_radius_km},
                     {"ap_spacing_km", cfg.scenario.ap_spacing_km},
                     {"guard_radius_km", cfg.scenario.guard_radius_km}};
    j["gamp"] = {{"t_amp", cfg.gamp.t_amp},
                 {"t_tur", cfg.gamp.t_tur},
                 {"eta", cfg.gamp.eta},
                 {"rho_damp", cfg.gamp.rho_damp},
                 {"gamma0", cfg.gamp.gamma0}};
    j["sic"] = {{"p_det", cfg.sic.p_det},
                {"p_rel", cfg.sic.p_rel},
                {"lambda_aus", cfg.sic.lambda_aus},
                {"angular_gamma0", cfg.sic.angular_gamma0}};
    j["q_bits"] = cfg.q_bits;
    j["low_res_q_max"] = cfg.low_res_q_max;
    j["g_values"] = cfg.g_values;
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["runs"] = runs;
    return j.dump(1);
}

}  // namespace cfma
