#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfma/sic.hpp"

#include <algorithm>
#include <cmath>

using namespace cfma;

namespace {

ScenarioConfig tiny_cfg(int k, int k_a, int b, int m_c, int p_tilde = 1) {
    ScenarioConfig cfg;
    cfg.num_ues = k;
    cfg.num_active = k_a;
    cfg.num_aps = b;
    cfg.antennas_per_ap = m_c;
    cfg.num_pilot_subcarriers = p_tilde;
    return cfg;
}

struct Instance {
    Scenario scen;
    ObservationSet obs;
    RMatrix tau;
};

Instance make_instance(const ScenarioConfig& cfg, int g, int seed, double noise_scale = 1.0,
                       int q_bits = 0) {
    Instance inst{make_scenario(cfg, g, Rng(static_cast<std::uint64_t>(seed))), {}, {}};
    const double nv = inst.scen.noise_var * noise_scale;
    const auto raw = synthesize_rx(inst.scen.pilots, inst.scen.channels, nv,
                                   Rng(static_cast<std::uint64_t>(seed)).substream("noise"));
    inst.obs = q_bits >= 1 ? quantize_observations(raw, q_bits, nv)
                           : passthrough_observations(raw, nv);
    inst.tau = build_prior_tau(inst.scen.geom, inst.scen.cfg);
    return inst;
}

}  // namespace

TEST_CASE("sic config validation") {
    SicConfig bad;
    bad.p_det = 0.9;
    bad.p_rel = 0.1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = SicConfig{};
    bad.lambda_aus = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_NOTHROW(SicConfig{}.validate());
}

TEST_CASE("belief-indicator detector") {
    NetworkGeometry geom = layout_hex(7, std::sqrt(3.0));
    geom.coverage_radius_km = 2.65;
    place_users(geom, 12, 0.03, Rng(3).substream("placement"));
    std::vector<int> ap_ids = {0, 1, 2, 3, 4, 5, 6};

    const std::vector<int> actives = {1, 4, 7};
    std::vector<std::vector<RMatrix>> theta(2, std::vector<RMatrix>(7, RMatrix::Constant(12, 3, 0.02)));
    for (std::size_t p = 0; p < 2; ++p)
        for (int a = 0; a < 7; ++a)
            for (int u : actives) theta[p][a].row(u).setConstant(0.95);

    CHECK(bi_aue_detect(theta, ap_ids, geom, 0.5) == actives);
    CHECK(static_cast<int>(bi_aue_detect(theta, ap_ids, geom, 0.0).size()) == 12);
    CHECK(bi_aue_detect(theta, ap_ids, geom, 1.5).empty());
}

TEST_CASE("angular estimation on the true support") {
    const Instance inst = make_instance(tiny_cfg(8, 2, 1, 4), 8, 11, 0.0);
    const CMatrix a_r = dft_unitary(4);
    std::vector<std::vector<CMatrix>> r(1);
    r[0] = {spatial_to_angular(inst.obs.y[0][0], a_r)};
    const RMatrix tau_ang = build_prior_tau_angular(inst.scen.geom, inst.scen.cfg);

    GampConfig gcfg;
    const AngularEstimate est = estimate_channels_angular(r, inst.scen.pilots,
                                                          inst.scen.act.active_set, tau_ang, 0.0,
                                                          gcfg, 0.2);
    REQUIRE_FALSE(est.empty_input);

    // reference: least squares on the known support (noiseless: exact)
    const std::vector<int>& supp = inst.scen.act.active_set;
    CMatrix s_t(8, 2);
    for (int j = 0; j < 2; ++j) s_t.col(j) = inst.scen.pilots.s[0].col(supp[j]);
    const CMatrix w_ls = s_t.colPivHouseholderQr().solve(r[0][0]);

    double num = 0.0, den = 0.0, num_ls = 0.0;
    const CMatrix w_true = spatial_to_angular(inst.scen.channels.spatial[0][0], a_r);
    for (int j = 0; j < 2; ++j) {
        num += (est.w_hat[0][0].row(supp[j]) - w_true.row(supp[j])).squaredNorm();
        num_ls += (w_ls.row(j) - w_true.row(supp[j])).squaredNorm();
        den += w_true.row(supp[j]).squaredNorm();
    }
    CHECK(10.0 * std::log10(num_ls / den) < -100.0);  // oracle is exact here
    CHECK(10.0 * std::log10(num / den) < -30.0);

    // rows outside the support stay zero
    for (int u = 0; u < 8; ++u)
        if (!inst.scen.act.alpha[u]) CHECK(est.w_hat[0][0].row(u).norm() == 0.0);
}

TEST_CASE("angular estimation with a false alarm keeps its row small") {
    const Instance inst = make_instance(tiny_cfg(8, 2, 1, 4), 8, 13, 0.0);
    const CMatrix a_r = dft_unitary(4);
    std::vector<std::vector<CMatrix>> r(1);
    r[0] = {spatial_to_angular(inst.obs.y[0][0], a_r)};
    const RMatrix tau_ang = build_prior_tau_angular(inst.scen.geom, inst.scen.cfg);

    std::vector<int> a_hat = inst.scen.act.active_set;
    int false_alarm = 0;
    while (inst.scen.act.alpha[false_alarm]) ++false_alarm;
    a_hat.push_back(false_alarm);
    std::sort(a_hat.begin(), a_hat.end());

    GampConfig gcfg;
    const AngularEstimate est = estimate_channels_angular(r, inst.scen.pilots, a_hat, tau_ang, 0.0,
                                                          gcfg, 0.2);
    const CMatrix w_true = spatial_to_angular(inst.scen.channels.spatial[0][0], a_r);
    double true_energy = 0.0;
    for (int u : inst.scen.act.active_set) true_energy += w_true.row(u).squaredNorm();
    true_energy /= inst.scen.act.active_set.size();
    CHECK(est.w_hat[0][0].row(false_alarm).squaredNorm() < 0.01 * true_energy);
}

TEST_CASE("angular estimation with empty support") {
    const Instance inst = make_instance(tiny_cfg(8, 2, 1, 4), 8, 15, 0.0);
    const CMatrix a_r = dft_unitary(4);
    std::vector<std::vector<CMatrix>> r(1);
    r[0] = {spatial_to_angular(inst.obs.y[0][0], a_r)};
    const AngularEstimate est = estimate_channels_angular(
        r, inst.scen.pilots, {}, build_prior_tau_angular(inst.scen.geom, inst.scen.cfg), 0.0,
        GampConfig{}, 0.2);
    CHECK(est.empty_input);
    CHECK(est.w_hat[0][0].norm() == 0.0);
}

TEST_CASE("cancellation-set selection") {
    const std::vector<int> xi = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    CHECK(select_cancellation_set(xi, 1.0, Rng(1)) == xi);
    CHECK(select_cancellation_set(xi, 0.0, Rng(1)).empty());
    const auto g = select_cancellation_set(xi, 0.8, Rng(2));
    CHECK(static_cast<int>(g.size()) == 8);
    for (int u : g) CHECK(std::binary_search(xi.begin(), xi.end(), u));
    // deterministic per seed
    CHECK(select_cancellation_set(xi, 0.8, Rng(2)) == g);
    CHECK_THROWS_AS(select_cancellation_set(xi, 1.5, Rng(1)), InvalidArgument);
}

TEST_CASE("cancellation of identified users") {
    const Instance inst = make_instance(tiny_cfg(10, 3, 7, 4), 12, 17, 0.0);
    // empty set: residual equals the input
    const auto same = cancel_identified(inst.obs, inst.scen.channels.spatial, {},
                                        inst.scen.pilots, false);
    for (std::size_t p = 0; p < same.size(); ++p)
        for (std::size_t a = 0; a < same[p].size(); ++a)
            CHECK((same[p][a] - inst.obs.y[p][a]).norm() == 0.0);

    // exact channel knowledge, noiseless, unquantized: the cancelled users
    // vanish and the residual is exactly the remaining users' contribution
    const std::vector<int>& act = inst.scen.act.active_set;
    const std::vector<int> gamma(act.begin(), act.begin() + 2);
    const auto resid = cancel_identified(inst.obs, inst.scen.channels.spatial, gamma,
                                         inst.scen.pilots, false);
    for (std::size_t p = 0; p < resid.size(); ++p) {
        for (std::size_t a = 0; a < resid[p].size(); ++a) {
            CMatrix remaining = inst.scen.channels.spatial[p][a];
            for (int u : gamma) remaining.row(u).setZero();
            CHECK((resid[p][a] - inst.scen.pilots.s[p] * remaining).norm() < 1e-20);
        }
    }

    // low-resolution path: re-quantized contribution, finite entries, and a
    // seeded instance where cancellation removes energy
    const Instance lr = make_instance(tiny_cfg(10, 3, 7, 4), 12, 19, 1.0, 3);
    const auto resid_q = cancel_identified(lr.obs, lr.scen.channels.spatial,
                                           lr.scen.act.active_set, lr.scen.pilots, true);
    double in_energy = 0.0, out_energy = 0.0;
    for (std::size_t p = 0; p < resid_q.size(); ++p) {
        for (std::size_t a = 0; a < resid_q[p].size(); ++a) {
            CHECK(resid_q[p][a].allFinite());
            in_energy += lr.obs.y[p][a].squaredNorm();
            out_energy += resid_q[p][a].squaredNorm();
        }
    }
    CHECK(out_energy < in_energy);
}

TEST_CASE("prior construction") {
    const Scenario scen = make_scenario(tiny_cfg(6, 2, 7, 4), 8, Rng(23));
    const RMatrix tau = build_prior_tau(scen.geom, scen.cfg);
    CHECK(tau.minCoeff() > 0.0);
    // decreasing in distance per user
    for (int u = 0; u < 6; ++u) {
        for (int a = 0; a < 7; ++a) {
            for (int b = 0; b < 7; ++b) {
                if (scen.geom.distance(u, a) < scen.geom.distance(u, b))
                    CHECK(tau(u, a) > tau(u, b));
            }
        }
    }
    const RMatrix tau_ang = build_prior_tau_angular(scen.geom, scen.cfg);
    CHECK((tau_ang.array() >= tau.array()).all());  // concentration factor >= 1
}

TEST_CASE("sic pipeline with a single iteration equals detect + estimate") {
    const Instance inst = make_instance(tiny_cfg(12, 3, 7, 4), 14, 29);
    SicConfig cfg;
    cfg.t_sic = 1;
    GampConfig gcfg;
    const DetectionResult res = sic_aud_ce(inst.obs, inst.scen.pilots, inst.scen.geom, inst.tau,
                                           inst.scen.cfg, cfg, gcfg, Rng(101));

    // manual composition of one spatial pass + one angular pass
    GampProblem sp;
    sp.mode = GampMode::SpatialSlm;
    sp.obs = inst.obs.y;
    sp.pilots = inst.scen.pilots.s;
    sp.noise_var = inst.obs.noise_var;
    const int k = 12;
    sp.tau = inst.tau;
    sp.dist.resize(k, 7);
    for (int u = 0; u < k; ++u)
        for (int a = 0; a < 7; ++a) sp.dist(u, a) = inst.scen.geom.distance(u, a);
    const GampResult spatial = ss_gamp(sp, gcfg);
    const std::vector<int> a_hat =
        bi_aue_detect(spatial.theta, inst.obs.ap_ids, inst.scen.geom, cfg.p_det);
    CHECK(res.a_hat == a_hat);

    const CMatrix a_r = dft_unitary(4);
    std::vector<std::vector<CMatrix>> r(inst.obs.y.size());
    for (std::size_t p = 0; p < r.size(); ++p)
        for (const CMatrix& y : inst.obs.y[p]) r[p].push_back(spatial_to_angular(y, a_r));
    const AngularEstimate ang = estimate_channels_angular(
        r, inst.scen.pilots, a_hat, build_prior_tau_angular(inst.scen.geom, inst.scen.cfg),
        inst.obs.noise_var, gcfg, cfg.angular_gamma0);
    for (std::size_t p = 0; p < r.size(); ++p)
        for (std::size_t a = 0; a < 7; ++a)
            CHECK((res.h_hat[p][a] - angular_to_spatial(ang.w_hat[p][a], a_r)).norm() == 0.0);
}

TEST_CASE("sic pipeline invariants and determinism") {
    const Instance inst = make_instance(tiny_cfg(24, 4, 7, 4), 16, 31);
    SicConfig cfg;
    cfg.t_sic = 3;
    GampConfig gcfg;
    const DetectionResult res = sic_aud_ce(inst.obs, inst.scen.pilots, inst.scen.geom, inst.tau,
                                           inst.scen.cfg, cfg, gcfg, Rng(202));

    REQUIRE(res.diags.size() == 3);
    for (std::size_t j = 0; j < res.diags.size(); ++j) {
        const SicIterationDiag& d = res.diags[j];
        // reliable set is contained in the detected set
        for (int u : d.xi_set) CHECK(std::binary_search(d.a_hat_set.begin(), d.a_hat_set.end(), u));
        // reliable set only accumulates
        if (j > 0) {
            const auto& prev = res.diags[j - 1].xi_set;
            for (int u : prev) CHECK(std::binary_search(d.xi_set.begin(), d.xi_set.end(), u));
        }
        CHECK(d.gamma_size <= d.xi_size);
    }

    const DetectionResult res2 = sic_aud_ce(inst.obs, inst.scen.pilots, inst.scen.geom, inst.tau,
                                            inst.scen.cfg, cfg, gcfg, Rng(202));
    CHECK(res == res2);

    // easy instance: perfect detection
    std::vector<std::uint8_t> truth(inst.scen.act.alpha.begin(), inst.scen.act.alpha.end());
    CHECK(res.alpha_hat == truth);
}
