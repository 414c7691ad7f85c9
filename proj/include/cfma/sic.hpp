#ifndef CFMA_SIC_HPP
#define CFMA_SIC_HPP

#include "cfma/gamp.hpp"
#include "cfma/observation.hpp"
#include "cfma/scenario.hpp"

#include <vector>

namespace cfma {

struct SicConfig {
    int t_sic = 3;
    double p_det = 0.1;
    double p_rel = 0.9;
    double lambda_aus = 0.8;
    bool low_res_quantize = false;  // quantization-aware detection + re-quantized cancellation
    bool force_slm = false;         // SLM module only, even on coarse quantization
    double angular_gamma0 = 0.2;

    void validate() const;
};

struct SicIterationDiag {
    int a_hat_size = 0;
    int xi_size = 0;
    int gamma_size = 0;
    double residual_energy = 0.0;
    double sigma_hat_spatial = 0.0;
    bool spatial_diverged = false;
    bool angular_diverged = false;
    std::vector<int> a_hat_set;  // sorted snapshots, for invariant checks
    std::vector<int> xi_set;
};

struct DetectionResult {
    std::vector<std::uint8_t> alpha_hat;      // length K (global)
    std::vector<int> a_hat;                   // sorted global ids
    std::vector<int> xi;                      // reliable set, sorted
    std::vector<int> ap_ids;                  // APs covered by h_hat blocks
    std::vector<std::vector<CMatrix>> h_hat;  // [p][a]: K x M_c spatial estimates
    std::vector<SicIterationDiag> diags;
    bool aborted = false;

    bool operator==(const DetectionResult& other) const;
};

/// Average belief indicator at each user's nearest AP, thresholded at p_th.
/// theta blocks are [p][a] with rows indexed by user_ids (defaults to
/// identity); returns sorted global user ids.
std::vector<int> bi_aue_detect(const std::vector<std::vector<RMatrix>>& theta,
                               const std::vector<int>& ap_ids, const NetworkGeometry& geom,
                               double p_th, const std::vector<int>& user_ids = {});

struct AngularEstimate {
    std::vector<std::vector<CMatrix>> w_hat;  // [p][a]: K x M_c, zero outside a_hat
    bool empty_input = false;
    bool diverged = false;
};

/// SLM-module recovery of the angular rows of the identified users from the
/// rotated observations R = Y * conj(A_R).
AngularEstimate estimate_channels_angular(const std::vector<std::vector<CMatrix>>& obs_angular,
                                          const PilotBook& pilots, const std::vector<int>& a_hat,
                                          const RMatrix& tau_angular, double noise_var,
                                          const GampConfig& gcfg, double gamma0_restricted);

/// Uniformly random subset of xi with floor(lambda * |xi|) elements.
std::vector<int> select_cancellation_set(const std::vector<int>& xi, double lambda_aus, Rng rng);

/// Residual observations after removing the reconstructed contribution of
/// the users in gamma_set; re-quantized with the original per-AP codebooks
/// when requested.
std::vector<std::vector<CMatrix>> cancel_identified(const ObservationSet& obs,
                                                    const std::vector<std::vector<CMatrix>>& h_hat,
                                                    const std::vector<int>& gamma_set,
                                                    const PilotBook& pilots, bool requantize);

/// Prior variance of each (user, AP) channel coefficient from path loss,
/// transmit power, and the mean multipath count.
RMatrix build_prior_tau(const NetworkGeometry& geom, const ScenarioConfig& cfg);

/// Angular-domain prior: spatial tau boosted by the angular concentration
/// factor M_c / ceil(M_c * spread).
RMatrix build_prior_tau_angular(const NetworkGeometry& geom, const ScenarioConfig& cfg);

/// Alternating spatial detection, angular estimation, and cancellation.
DetectionResult sic_aud_ce(const ObservationSet& obs, const PilotBook& pilots,
                           const NetworkGeometry& geom, const RMatrix& tau_global,
                           const ScenarioConfig& scfg, const SicConfig& cfg,
                           const GampConfig& gcfg, Rng rng);

}  // namespace cfma

#endif
