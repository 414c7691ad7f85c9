#ifndef CFMA_PARADIGMS_HPP
#define CFMA_PARADIGMS_HPP

#include "cfma/observation.hpp"
#include "cfma/sic.hpp"

#include <cstdint>
#include <vector>

namespace cfma {

struct EdgeGroup {
    int dpu_ap = 0;
    std::vector<int> ap_set;  // dpu first, then by (distance, index)
};

struct EdgeGrouping {
    std::vector<EdgeGroup> groups;
    std::vector<int> ue_owner;  // group index per user
};

/// Each DPU-AP cooperates with itself plus its (n_co - 1) nearest APs
/// (ties to the lowest index); each user is owned by its nearest DPU-AP.
EdgeGrouping form_edge_groups(const NetworkGeometry& geom, const std::vector<int>& dpu_set,
                              int n_co);

enum class Paradigm { Cloud, Edge };
enum class Method { Sic, Joint };

struct ParadigmConfig {
    Paradigm paradigm = Paradigm::Cloud;
    Method method = Method::Sic;
    EdgeGrouping grouping;  // required for Paradigm::Edge
    SicConfig sic;
    GampConfig gamp;
    double joint_threshold = 0.5;
};

/// Cloud: one pipeline over the full observation set. Edge: one pipeline per
/// DPU group on the column-restricted system, then per-user resolution from
/// the owning group.
DetectionResult run_paradigm(const ParadigmConfig& cfg, const ObservationSet& obs,
                             const PilotBook& pilots, const NetworkGeometry& geom,
                             const RMatrix& tau_global, const ScenarioConfig& scfg, Rng rng);

/// Baseline: each AP independently detects/estimates only its own cell's
/// users (nearest-AP cells) and treats everything else as noise.
DetectionResult baseline_multicell(const ObservationSet& obs, const PilotBook& pilots,
                                   const NetworkGeometry& geom, const RMatrix& tau_global,
                                   const SicConfig& sic_cfg, const GampConfig& gcfg,
                                   double joint_threshold);

// --- complexity estimators ----------------------------------------------------

struct ComplexityParams {
    std::int64_t t_sic = 1, t_amp = 1, t_tur = 1;
    std::int64_t g = 1, k = 1, m = 1, p = 1, b = 1, m_c = 1, k_a = 1;
    std::int64_t k_i = 1, m_i = 1, n_co = 1, k_a_i = 1;  // edge-side quantities
};

std::int64_t complexity_cloud(const ComplexityParams& c);
std::int64_t complexity_edge(const ComplexityParams& c);

}  // namespace cfma

#endif
