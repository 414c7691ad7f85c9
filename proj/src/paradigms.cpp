#include "cfma/paradigms.hpp"

#include <algorithm>
#include <numeric>

namespace cfma {

EdgeGrouping form_edge_groups(const NetworkGeometry& geom, const std::vector<int>& dpu_set,
                              int n_co) {
    const int b = geom.num_aps();
    if (dpu_set.empty()) throw InvalidArgument("form_edge_groups: empty DPU set");
    if (n_co < 1 || n_co > b) throw InvalidArgument("form_edge_groups: n_co out of range");

    EdgeGrouping grouping;
    for (int dpu : dpu_set) {
        if (dpu < 0 || dpu >= b) throw InvalidArgument("form_edge_groups: DPU index out of range");
        std::vector<int> others;
        for (int a = 0; a < b; ++a)
            if (a != dpu) others.push_back(a);
        // Geometric ties (the hexagon ring is exactly equidistant) must break
        // by index, so distances within a relative epsilon compare equal.
        const double tol = 1e-9 * std::max(geom.ap_spacing_km, 1e-12);
        std::stable_sort(others.begin(), others.end(), [&](int lhs, int rhs) {
            const double dl = distance_km(geom.ap_positions[dpu], geom.ap_positions[lhs]);
            const double dr = distance_km(geom.ap_positions[dpu], geom.ap_positions[rhs]);
            if (dl < dr - tol) return true;
            if (dr < dl - tol) return false;
            return lhs < rhs;
        });
        EdgeGroup group;
        group.dpu_ap = dpu;
        group.ap_set.push_back(dpu);
        for (int i = 0; i < n_co - 1; ++i) group.ap_set.push_back(others[i]);
        grouping.groups.push_back(std::move(group));
    }

    grouping.ue_owner.resize(geom.num_ues());
    for (int u = 0; u < geom.num_ues(); ++u) {
        int best = 0;
        double best_d = geom.distance(u, grouping.groups[0].dpu_ap);
        for (std::size_t gi = 1; gi < grouping.groups.size(); ++gi) {
            const double d = geom.distance(u, grouping.groups[gi].dpu_ap);
            const int dpu = grouping.groups[gi].dpu_ap;
            const int best_dpu = grouping.groups[best].dpu_ap;
            if (d < best_d || (d == best_d && dpu < best_dpu)) {
                best_d = d;
                best = static_cast<int>(gi);
            }
        }
        grouping.ue_owner[u] = best;
    }
    return grouping;
}

namespace {

DetectionResult run_pipeline(const ParadigmConfig& cfg, const ObservationSet& obs,
                             const PilotBook& pilots, const NetworkGeometry& geom,
                             const RMatrix& tau_global, const ScenarioConfig& scfg, Rng rng) {
    if (cfg.method == Method::Sic)
        return sic_aud_ce(obs, pilots, geom, tau_global, scfg, cfg.sic, cfg.gamp, rng);

    // Joint AUD and CE: one spatial recovery, belief-indicator detection,
    // channel rows taken from the same run.
    const int k = static_cast<int>(pilots.s.front().cols());
    GampProblem sp;
    const bool quant_mode = obs.quantized && cfg.sic.low_res_quantize && !cfg.sic.force_slm;
    sp.mode = quant_mode ? GampMode::SpatialQuantized : GampMode::SpatialSlm;
    sp.obs = obs.y;
    sp.pilots = pilots.s;
    if (quant_mode) sp.qspecs = obs.specs;
    sp.noise_var = obs.noise_var;
    const std::size_t b_count = obs.ap_ids.size();
    sp.tau.resize(k, static_cast<Eigen::Index>(b_count));
    sp.dist.resize(k, static_cast<Eigen::Index>(b_count));
    for (std::size_t a = 0; a < b_count; ++a) {
        sp.tau.col(static_cast<Eigen::Index>(a)) = tau_global.col(obs.ap_ids[a]);
        for (int u = 0; u < k; ++u)
            sp.dist(u, static_cast<Eigen::Index>(a)) = geom.distance(u, obs.ap_ids[a]);
    }
    const GampResult spatial = ss_gamp(sp, cfg.gamp);

    DetectionResult res;
    res.ap_ids = obs.ap_ids;
    res.aborted = spatial.diverged;
    res.a_hat = bi_aue_detect(spatial.theta, obs.ap_ids, geom, cfg.joint_threshold);
    res.xi = res.a_hat;
    res.alpha_hat.assign(k, 0);
    for (int u : res.a_hat) res.alpha_hat[u] = 1;
    res.h_hat.assign(obs.y.size(), std::vector<CMatrix>(b_count));
    for (std::size_t p = 0; p < obs.y.size(); ++p) {
        for (std::size_t a = 0; a < b_count; ++a) {
            CMatrix h = CMatrix::Zero(k, obs.antennas_per_ap);
            for (int u : res.a_hat) h.row(u) = spatial.h_hat[p][a].row(u);
            res.h_hat[p][a] = std::move(h);
        }
    }
    SicIterationDiag diag;
    diag.a_hat_size = static_cast<int>(res.a_hat.size());
    diag.xi_size = diag.a_hat_size;
    diag.sigma_hat_spatial = spatial.sigma_hat;
    diag.spatial_diverged = spatial.diverged;
    res.diags.push_back(diag);
    return res;
}

}  // namespace

DetectionResult run_paradigm(const ParadigmConfig& cfg, const ObservationSet& obs,
                             const PilotBook& pilots, const NetworkGeometry& geom,
                             const RMatrix& tau_global, const ScenarioConfig& scfg, Rng rng) {
    // Cloud is the degenerate single-group case: one pipeline over all APs,
    // every user resolved by it. Sharing the resolution path keeps the
    // edge(N_co = B) equivalence exact.
    std::vector<EdgeGroup> groups;
    std::vector<int> ue_owner;
    if (cfg.paradigm == Paradigm::Cloud) {
        EdgeGroup all;
        all.dpu_ap = obs.ap_ids.front();
        all.ap_set = obs.ap_ids;
        groups.push_back(std::move(all));
        ue_owner.assign(geom.num_ues(), 0);
    } else {
        if (cfg.grouping.groups.empty()) throw InvalidArgument("run_paradigm: edge grouping missing");
        groups = cfg.grouping.groups;
        ue_owner = cfg.grouping.ue_owner;
    }

    const int k = geom.num_ues();
    std::vector<DetectionResult> group_results(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const ObservationSet group_obs = restrict_columns(obs, groups[gi].ap_set);
        group_results[gi] = run_pipeline(cfg, group_obs, pilots, geom, tau_global, scfg,
                                         rng.substream("pipeline", gi));
    }

    DetectionResult out;
    out.ap_ids = obs.ap_ids;
    out.alpha_hat.assign(k, 0);
    const std::size_t p_count = obs.y.size();
    out.h_hat.assign(p_count, std::vector<CMatrix>(obs.ap_ids.size(),
                                                   CMatrix::Zero(k, obs.antennas_per_ap)));
    for (int u = 0; u < k; ++u) {
        const DetectionResult& owner = group_results[static_cast<std::size_t>(ue_owner[u])];
        out.aborted = out.aborted || owner.aborted;
        if (owner.alpha_hat[u]) {
            out.alpha_hat[u] = 1;
            out.a_hat.push_back(u);
        }
        if (std::binary_search(owner.xi.begin(), owner.xi.end(), u)) out.xi.push_back(u);
        for (std::size_t p = 0; p < p_count; ++p) {
            for (std::size_t a = 0; a < owner.ap_ids.size(); ++a) {
                const auto it = std::find(obs.ap_ids.begin(), obs.ap_ids.end(), owner.ap_ids[a]);
                const std::size_t global_a = static_cast<std::size_t>(it - obs.ap_ids.begin());
                out.h_hat[p][global_a].row(u) = owner.h_hat[p][a].row(u);
            }
        }
    }
    for (const DetectionResult& gr : group_results)
        out.diags.insert(out.diags.end(), gr.diags.begin(), gr.diags.end());
    return out;
}

DetectionResult baseline_multicell(const ObservationSet& obs, const PilotBook& pilots,
                                   const NetworkGeometry& geom, const RMatrix& tau_global,
                                   const SicConfig& sic_cfg, const GampConfig& gcfg,
                                   double joint_threshold) {
    const int k = geom.num_ues();
    const std::size_t p_count = obs.y.size();
    const std::size_t b_count = obs.ap_ids.size();

    // Nearest-AP cells.
    std::vector<std::vector<int>> cells(b_count);
    for (int u = 0; u < k; ++u) {
        const int b_star = geom.nearest_ap_among(u, obs.ap_ids);
        const auto it = std::find(obs.ap_ids.begin(), obs.ap_ids.end(), b_star);
        cells[static_cast<std::size_t>(it - obs.ap_ids.begin())].push_back(u);
    }

    DetectionResult out;
    out.ap_ids = obs.ap_ids;
    out.alpha_hat.assign(k, 0);
    out.h_hat.assign(p_count,
                     std::vector<CMatrix>(b_count, CMatrix::Zero(k, obs.antennas_per_ap)));

    for (std::size_t a = 0; a < b_count; ++a) {
        const std::vector<int>& cell = cells[a];
        if (cell.empty()) continue;
        const Eigen::Index k_c = static_cast<Eigen::Index>(cell.size());

        GampProblem sp;
        const bool quant_mode = obs.quantized && sic_cfg.low_res_quantize && !sic_cfg.force_slm;
        sp.mode = quant_mode ? GampMode::SpatialQuantized : GampMode::SpatialSlm;
        sp.noise_var = obs.noise_var;
        sp.obs.assign(p_count, std::vector<CMatrix>{});
        sp.pilots.resize(p_count);
        for (std::size_t p = 0; p < p_count; ++p) {
            sp.obs[p].push_back(obs.y[p][a]);
            CMatrix s_c(pilots.s[p].rows(), k_c);
            for (Eigen::Index j = 0; j < k_c; ++j) s_c.col(j) = pilots.s[p].col(cell[j]);
            sp.pilots[p] = std::move(s_c);
        }
        if (quant_mode) sp.qspecs = {obs.specs[a]};
        sp.tau.resize(k_c, 1);
        sp.dist.resize(k_c, 1);
        for (Eigen::Index j = 0; j < k_c; ++j) {
            sp.tau(j, 0) = tau_global(cell[j], obs.ap_ids[a]);
            sp.dist(j, 0) = geom.distance(cell[j], obs.ap_ids[a]);
        }
        const GampResult res = ss_gamp(sp, gcfg);
        out.aborted = out.aborted || res.diverged;

        const std::vector<int> det = bi_aue_detect(res.theta, {obs.ap_ids[a]}, geom,
                                                   joint_threshold, cell);
        for (int u : det) {
            out.alpha_hat[u] = 1;
            out.a_hat.push_back(u);
        }
        for (std::size_t p = 0; p < p_count; ++p) {
            for (int u : det) {
                const auto it = std::find(cell.begin(), cell.end(), u);
                const Eigen::Index row = static_cast<Eigen::Index>(it - cell.begin());
                out.h_hat[p][a].row(u) = res.h_hat[p][0].row(row);
            }
        }
    }
    std::sort(out.a_hat.begin(), out.a_hat.end());
    out.xi = out.a_hat;
    return out;
}

std::int64_t complexity_cloud(const ComplexityParams& c) {
    const std::int64_t amp_core =
        4 * c.g * c.k * c.m * c.p + 3 * c.g * c.k * c.p + 16 * c.g * c.m * c.p +
        20 * c.k * c.m * c.p;
    const std::int64_t turbo = c.t_tur * (c.g * c.k * c.m * c.p + c.g * c.m * c.p);
    return c.t_sic *
           (2 * c.t_amp * amp_core + turbo + 2 * c.b * c.m_c * c.m_c * c.p + c.g * c.k_a * c.m * c.p);
}

std::int64_t complexity_edge(const ComplexityParams& c) {
    const std::int64_t amp_core =
        4 * c.g * c.k_i * c.m_i * c.p + 3 * c.g * c.k_i * c.p + 16 * c.g * c.m_i * c.p +
        20 * c.k_i * c.m_i * c.p;
    const std::int64_t turbo = c.t_tur * (c.g * c.k * c.m_i * c.p + c.g * c.m_i * c.p);
    return c.t_sic * (2 * c.t_amp * amp_core + turbo + 2 * c.n_co * c.m_c * c.m_c * c.p +
                      c.g * c.k_a_i * c.m * c.p);
}

}  // namespace cfma
