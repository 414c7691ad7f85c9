#include "cfma/sic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfma {

void SicConfig::validate() const {
    if (!(p_det >= 0.0 && p_det < p_rel && p_rel <= 1.0))
        throw InvalidArgument("SicConfig: need 0 <= p_det < p_rel <= 1");
    if (!(lambda_aus >= 0.0 && lambda_aus <= 1.0))
        throw InvalidArgument("SicConfig: lambda_aus must be in [0,1]");
    if (t_sic < 1) throw InvalidArgument("SicConfig: t_sic must be >= 1");
}

bool DetectionResult::operator==(const DetectionResult& other) const {
    if (alpha_hat != other.alpha_hat || a_hat != other.a_hat || xi != other.xi ||
        ap_ids != other.ap_ids || aborted != other.aborted)
        return false;
    if (h_hat.size() != other.h_hat.size()) return false;
    for (std::size_t p = 0; p < h_hat.size(); ++p) {
        if (h_hat[p].size() != other.h_hat[p].size()) return false;
        for (std::size_t a = 0; a < h_hat[p].size(); ++a) {
            const CMatrix& x = h_hat[p][a];
            const CMatrix& z = other.h_hat[p][a];
            if (x.rows() != z.rows() || x.cols() != z.cols()) return false;
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                for (Eigen::Index i = 0; i < x.rows(); ++i)
                    if (x(i, j) != z(i, j)) return false;
        }
    }
    return true;
}

std::vector<int> bi_aue_detect(const std::vector<std::vector<RMatrix>>& theta,
                               const std::vector<int>& ap_ids, const NetworkGeometry& geom,
                               double p_th, const std::vector<int>& user_ids) {
    const std::size_t p_count = theta.size();
    const Eigen::Index rows = theta.front().front().rows();
    const Eigen::Index m_c = theta.front().front().cols();
    std::vector<int> detected;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const int global = user_ids.empty() ? static_cast<int>(r) : user_ids[static_cast<std::size_t>(r)];
        const int b_star = geom.nearest_ap_among(global, ap_ids);
        const std::size_t a = static_cast<std::size_t>(
            std::find(ap_ids.begin(), ap_ids.end(), b_star) - ap_ids.begin());
        double acc = 0.0;
        for (std::size_t p = 0; p < p_count; ++p) acc += theta[p][a].row(r).sum();
        const double mean = acc / static_cast<double>(p_count * m_c);
        if (mean >= p_th) detected.push_back(global);
    }
    return detected;
}

AngularEstimate estimate_channels_angular(const std::vector<std::vector<CMatrix>>& obs_angular,
                                          const PilotBook& pilots, const std::vector<int>& a_hat,
                                          const RMatrix& tau_angular, double noise_var,
                                          const GampConfig& gcfg, double gamma0_restricted) {
    const std::size_t p_count = obs_angular.size();
    const std::size_t b_count = obs_angular.front().size();
    const Eigen::Index k = pilots.s.front().cols();
    const Eigen::Index m_c = obs_angular.front().front().cols();

    AngularEstimate est;
    est.w_hat.assign(p_count, std::vector<CMatrix>(b_count, CMatrix::Zero(k, m_c)));
    if (a_hat.empty()) {
        est.empty_input = true;
        return est;
    }

    const Eigen::Index k_r = static_cast<Eigen::Index>(a_hat.size());
    GampProblem prob;
    prob.mode = GampMode::AngularSlm;
    prob.obs = obs_angular;
    prob.pilots.resize(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
        CMatrix s_r(pilots.s[p].rows(), k_r);
        for (Eigen::Index j = 0; j < k_r; ++j) s_r.col(j) = pilots.s[p].col(a_hat[j]);
        prob.pilots[p] = std::move(s_r);
    }
    prob.tau.resize(k_r, static_cast<Eigen::Index>(b_count));
    for (Eigen::Index j = 0; j < k_r; ++j) prob.tau.row(j) = tau_angular.row(a_hat[j]);
    prob.noise_var = noise_var;

    GampConfig cfg = gcfg;
    cfg.gamma0 = gamma0_restricted;
    const GampResult res = ss_gamp(prob, cfg);
    est.diverged = res.diverged;
    for (std::size_t p = 0; p < p_count; ++p)
        for (std::size_t a = 0; a < b_count; ++a)
            for (Eigen::Index j = 0; j < k_r; ++j)
                est.w_hat[p][a].row(a_hat[j]) = res.h_hat[p][a].row(j);
    return est;
}

std::vector<int> select_cancellation_set(const std::vector<int>& xi, double lambda_aus, Rng rng) {
    if (!(lambda_aus >= 0.0 && lambda_aus <= 1.0))
        throw InvalidArgument("select_cancellation_set: lambda out of range");
    const int n = static_cast<int>(std::floor(lambda_aus * static_cast<double>(xi.size())));
    std::vector<int> pool = xi;
    for (int i = 0; i < n; ++i) {
        const int j = static_cast<int>(rng.next_int(i, static_cast<int>(pool.size()) - 1));
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + n);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<CMatrix>> cancel_identified(const ObservationSet& obs,
                                                    const std::vector<std::vector<CMatrix>>& h_hat,
                                                    const std::vector<int>& gamma_set,
                                                    const PilotBook& pilots, bool requantize) {
    std::vector<std::vector<CMatrix>> residual = obs.y;
    if (gamma_set.empty()) return residual;
    for (int p = 0; p < obs.num_subcarriers(); ++p) {
        CMatrix s_g(pilots.s[p].rows(), static_cast<Eigen::Index>(gamma_set.size()));
        for (std::size_t j = 0; j < gamma_set.size(); ++j) s_g.col(static_cast<Eigen::Index>(j)) = pilots.s[p].col(gamma_set[j]);
        for (int a = 0; a < obs.num_blocks(); ++a) {
            CMatrix h_g(static_cast<Eigen::Index>(gamma_set.size()), h_hat[p][a].cols());
            for (std::size_t j = 0; j < gamma_set.size(); ++j)
                h_g.row(static_cast<Eigen::Index>(j)) = h_hat[p][a].row(gamma_set[j]);
            CMatrix contrib = s_g * h_g;
            if (requantize && obs.quantized) contrib = quantize(contrib, obs.specs[a]);
            residual[p][a] -= contrib;
        }
    }
    return residual;
}

RMatrix build_prior_tau(const NetworkGeometry& geom, const ScenarioConfig& cfg) {
    const int k = geom.num_ues();
    const int b = geom.num_aps();
    const double l_mean = 0.5 * (cfg.path_count_min + cfg.path_count_max);
    const double p_tx = cfg.tx_power_w();
    RMatrix tau(k, b);
    for (int u = 0; u < k; ++u) {
        for (int a = 0; a < b; ++a) {
            const double rho = path_loss_gain(geom.distance(u, a));
            tau(u, a) = p_tx * rho * rho * l_mean;
        }
    }
    return tau;
}

RMatrix build_prior_tau_angular(const NetworkGeometry& geom, const ScenarioConfig& cfg) {
    const double spread_rad = cfg.angular_spread_deg * M_PI / 180.0;
    int support = static_cast<int>(std::ceil(cfg.antennas_per_ap * spread_rad));
    support = std::min(std::max(support, 1), cfg.antennas_per_ap);
    const double factor = static_cast<double>(cfg.antennas_per_ap) / support;
    return build_prior_tau(geom, cfg) * factor;
}

DetectionResult sic_aud_ce(const ObservationSet& obs, const PilotBook& pilots,
                           const NetworkGeometry& geom, const RMatrix& tau_global,
                           const ScenarioConfig& scfg, const SicConfig& cfg,
                           const GampConfig& gcfg, Rng rng) {
    cfg.validate();
    const int k = static_cast<int>(pilots.s.front().cols());
    const std::size_t p_count = obs.y.size();
    const std::size_t b_count = obs.ap_ids.size();
    const Eigen::Index m_c = obs.antennas_per_ap;

    RMatrix tau_sys(k, static_cast<Eigen::Index>(b_count));
    RMatrix dist_sys(k, static_cast<Eigen::Index>(b_count));
    for (std::size_t a = 0; a < b_count; ++a) {
        tau_sys.col(static_cast<Eigen::Index>(a)) = tau_global.col(obs.ap_ids[a]);
        for (int u = 0; u < k; ++u) dist_sys(u, static_cast<Eigen::Index>(a)) = geom.distance(u, obs.ap_ids[a]);
    }
    const RMatrix tau_ang_global = build_prior_tau_angular(geom, scfg);
    RMatrix tau_ang(k, static_cast<Eigen::Index>(b_count));
    for (std::size_t a = 0; a < b_count; ++a)
        tau_ang.col(static_cast<Eigen::Index>(a)) = tau_ang_global.col(obs.ap_ids[a]);

    const CMatrix a_r = dft_unitary(m_c);
    // Angular CE always runs on the original observations; the accumulated
    // detected set is re-estimated in full each iteration.
    std::vector<std::vector<CMatrix>> obs_angular(p_count, std::vector<CMatrix>(b_count));
    for (std::size_t p = 0; p < p_count; ++p)
        for (std::size_t a = 0; a < b_count; ++a)
            obs_angular[p][a] = spatial_to_angular(obs.y[p][a], a_r);

    const bool quant_mode = obs.quantized && cfg.low_res_quantize && !cfg.force_slm;
    const bool requant_cancel = obs.quantized && cfg.low_res_quantize;

    DetectionResult res;
    res.alpha_hat.assign(k, 0);
    res.ap_ids = obs.ap_ids;
    res.h_hat.assign(p_count, std::vector<CMatrix>(b_count, CMatrix::Zero(k, m_c)));

    std::vector<int> xi;  // accumulates across SIC iterations
    std::vector<std::vector<CMatrix>> residual = obs.y;
    DetectionResult last_consistent = res;

    for (int j = 1; j <= cfg.t_sic; ++j) {
        SicIterationDiag diag;

        GampProblem sp;
        sp.mode = quant_mode ? GampMode::SpatialQuantized : GampMode::SpatialSlm;
        sp.obs = residual;
        sp.pilots = pilots.s;
        if (quant_mode) sp.qspecs = obs.specs;
        sp.tau = tau_sys;
        sp.dist = dist_sys;
        sp.noise_var = obs.noise_var;
        const GampResult spatial = ss_gamp(sp, gcfg);
        diag.sigma_hat_spatial = spatial.sigma_hat;
        diag.spatial_diverged = spatial.diverged;
        if (spatial.diverged) {
            last_consistent.aborted = true;
            last_consistent.diags.push_back(diag);
            return last_consistent;
        }

        const std::vector<int> det = bi_aue_detect(spatial.theta, obs.ap_ids, geom, cfg.p_det);
        const std::vector<int> rel = bi_aue_detect(spatial.theta, obs.ap_ids, geom, cfg.p_rel);

        std::vector<int> a_hat = det;
        a_hat.insert(a_hat.end(), xi.begin(), xi.end());
        std::sort(a_hat.begin(), a_hat.end());
        a_hat.erase(std::unique(a_hat.begin(), a_hat.end()), a_hat.end());

        std::vector<int> xi_next = xi;
        xi_next.insert(xi_next.end(), rel.begin(), rel.end());
        std::sort(xi_next.begin(), xi_next.end());
        xi_next.erase(std::unique(xi_next.begin(), xi_next.end()), xi_next.end());
        xi = std::move(xi_next);

        const AngularEstimate ang = estimate_channels_angular(
            obs_angular, pilots, a_hat, tau_ang, obs.noise_var, gcfg, cfg.angular_gamma0);
        diag.angular_diverged = ang.diverged;
        if (ang.diverged) {
            last_consistent.aborted = true;
            last_consistent.diags.push_back(diag);
            return last_consistent;
        }

        for (std::size_t p = 0; p < p_count; ++p)
            for (std::size_t a = 0; a < b_count; ++a)
                res.h_hat[p][a] = angular_to_spatial(ang.w_hat[p][a], a_r);

        res.a_hat = a_hat;
        res.xi = xi;
        res.alpha_hat.assign(k, 0);
        for (int u : a_hat) res.alpha_hat[u] = 1;

        const std::vector<int> gamma_set =
            select_cancellation_set(xi, cfg.lambda_aus, rng.substream("cancel-set", j));
        if (j < cfg.t_sic) {
            residual = cancel_identified(obs, res.h_hat, gamma_set, pilots, requant_cancel);
        }

        diag.a_hat_size = static_cast<int>(a_hat.size());
        diag.xi_size = static_cast<int>(xi.size());
        diag.gamma_size = static_cast<int>(gamma_set.size());
        diag.a_hat_set = a_hat;
        diag.xi_set = xi;
        double energy = 0.0;
        for (const auto& row : residual)
            for (const CMatrix& m : row) energy += m.squaredNorm();
        diag.residual_energy = energy;
        res.diags.push_back(diag);
        last_consistent = res;
    }
    return res;
}

}  // namespace cfma
