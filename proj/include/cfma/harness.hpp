#ifndef CFMA_HARNESS_HPP
#define CFMA_HARNESS_HPP

#include "cfma/paradigms.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cfma {

/// One algorithm/paradigm variant evaluated on every (G, trial) point.
struct RunSpec {
    std::string name;
    std::string kind = "cloud";  // cloud | edge | multicell
    Method method = Method::Sic;
    int n_co = 0;                // edge cooperation size (0 => all APs)
    std::vector<int> dpu_set;    // edge DPU-AP ids (empty => every AP)
    bool force_slm = false;      // baseline 3: SLM module only
    int t_sic = 3;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    GampConfig gamp;
    SicConfig sic;
    int q_bits = 10;        // 0 => unquantized observations
    int low_res_q_max = 6;  // quantization-aware processing when q_bits <= this
    std::vector<int> g_values;
    std::vector<RunSpec> runs;
    int trials = 200;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 => hardware concurrency

    void validate() const;
};

/// Desk-scale profile: minutes instead of hours, used for trend checks.
ExperimentConfig desk_profile();
/// Full-scale parameter set (K = 2800 and friends).
ExperimentConfig table1_profile();

struct TrialRecord {
    std::string run;
    int g = 0;
    int q_bits = 0;
    int n_co = 0;
    int trial = 0;
    std::uint64_t seed = 0;
    double pe = 0.0;
    double nmse_db = 0.0;
    bool nmse_valid = false;
    bool aborted = false;
    bool failed = false;
    double wall_ms = 0.0;

    bool operator==(const TrialRecord&) const = default;
};

double compute_pe(const std::vector<std::uint8_t>& alpha_hat,
                  const std::vector<std::uint8_t>& alpha);

struct NmseResult {
    double db = 0.0;
    bool valid = false;
};

/// NMSE over the true active set at each user's nearest AP; missed users
/// contribute their full channel energy. Perfect recovery reports the
/// -120 dB floor; an empty active set is flagged invalid.
NmseResult compute_nmse(const DetectionResult& det, const Scenario& scen);

std::vector<TrialRecord> run_monte_carlo(const ExperimentConfig& cfg);

struct AggregateRow {
    std::string run;
    int g = 0;
    int n = 0;
    double mean_pe = 0.0;
    double stderr_pe = 0.0;
    double mean_nmse_db = 0.0;
    int n_nmse = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& records);
std::string format_aggregate_table(const std::vector<AggregateRow>& rows);

enum class ResultFormat { Csv, JsonLines };

void emit_results(const std::vector<TrialRecord>& records, const std::string& path,
                  ResultFormat format);
std::vector<TrialRecord> parse_results(const std::string& path, ResultFormat format);

/// Experiment configuration file (JSON, documented in the README).
ExperimentConfig experiment_from_json(const std::string& text);
std::string experiment_to_json(const ExperimentConfig& cfg);

}  // namespace cfma

#endif
