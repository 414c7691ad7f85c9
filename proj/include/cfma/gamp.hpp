#ifndef CFMA_GAMP_HPP
#define CFMA_GAMP_HPP

#include "cfma/core.hpp"
#include "cfma/quantizer.hpp"

#include <iosfwd>
#include <vector>

namespace cfma {

enum class GampMode {
    SpatialQuantized,  // turbo loop: quantization denoiser + SLM module
    SpatialSlm,        // SLM module only, quantization error treated as noise
    AngularSlm,        // SLM module on angular-domain observations
};

inline bool mode_is_quantized(GampMode m) { return m == GampMode::SpatialQuantized; }
inline bool mode_is_spatial(GampMode m) { return m != GampMode::AngularSlm; }

struct GampConfig {
    int t_amp = 20;
    int t_tur = 10;
    double eta = 1e-5;
    double rho_damp = 0.3;
    double gamma0 = -1.0;  // < 0: min(0.5, G / (K ln(K/G)))
    double var_floor = 1e-15;
    double gamma_floor = 1e-12;
    int divergence_streak = 5;
    std::ostream* trace = nullptr;
};

double default_gamma0(int g, int k);

/// One joint recovery problem over all (subcarrier, AP-block) pairs.
/// obs[p][a] is G x M_c; pilots[p] is G x K. In SpatialQuantized mode qspecs
/// holds one codebook per AP block; noise_var is the receiver-known AWGN
/// variance entering the quantization denoiser.
struct GampProblem {
    std::vector<std::vector<CMatrix>> obs;
    std::vector<CMatrix> pilots;
    std::vector<QuantizerSpec> qspecs;
    RMatrix tau;   // K x B_sys prior variance per (user, AP block)
    RMatrix dist;  // K x B_sys UE-AP distance (spatial refinement weights)
    double noise_var = 0.0;
    GampMode mode = GampMode::SpatialSlm;
};

struct GampResult {
    std::vector<std::vector<CMatrix>> h_hat;  // [p][a] K x M_c
    std::vector<std::vector<RMatrix>> theta;  // [p][a] K x M_c, in [0,1]
    double sigma_hat = 0.0;
    int amp_iterations = 0;
    int turbo_iterations = 0;
    double final_residual = 0.0;
    bool converged = false;
    bool diverged = false;
    bool ext_clamped = false;
};

GampResult ss_gamp(const GampProblem& problem, const GampConfig& cfg);

// --- pieces of the engine, exposed for direct testing ----------------------

struct DenoisedPart {
    double y_post;
    double v_post;
};

/// Posterior mean/variance of the real part of the pre-quantization signal
/// component given that the noisy value fell inside [lo, hi]. v_pri is the
/// complex prior variance (v_pri/2 per part), sigma the complex AWGN variance.
DenoisedPart denoise_bin(double y_pri, double v_pri, double lo, double hi, double sigma);

/// Same, with the bin derived from the codebook around the quantized value
/// y_bar (outer bins extend to +-infinity).
DenoisedPart denoise_quantized(double y_pri, double v_pri, double y_bar, const QuantizerSpec& spec,
                               double sigma);

struct ExtrinsicMessage {
    double y_hat;
    double sigma_ext;
    bool clamped;
};

/// Turbo extrinsic of the nonlinear module: sigma_ext = vp*vq/(vq - vp),
/// y_hat = sigma_ext (y_post/v_post - y_pri/v_pri). Variance-ordering
/// violations are clamped to (1 - 1e-9) v_pri and flagged.
ExtrinsicMessage ext_nonlinear(double y_post, double v_post, double y_pri, double v_pri);

struct SpikeSlabResult {
    cplx h_hat;
    double v;
    double theta;
};

/// Spike-and-slab scalar denoiser: gaussian slab CN(mu, tau) with weight
/// gamma against a point mass at zero, under pseudo-measurement CN(a, b).
SpikeSlabResult spike_slab_denoise(cplx a, double b, double gamma, cplx mu, double tau);

/// Per-(p,b) message state of the SLM module.
struct GampBlockState {
    CMatrix a;       // K x M pseudo-measurement mean
    RMatrix b;       // K x M pseudo-measurement variance
    RMatrix c;       // G x M output variance (post-damping)
    CMatrix d;       // G x M Onsager-corrected output mean (post-damping)
    RMatrix c_prev;  // previous damped values, for Onsager and ext_slm
    CMatrix d_prev;
    CMatrix h_hat;   // K x M posterior mean
    RMatrix v;       // K x M posterior variance
    RMatrix theta;   // K x M belief indicators
    RMatrix gamma;   // K x M sparsity ratios
};

GampBlockState init_block_state(const CMatrix& y_eff, Eigen::Index k, double gamma0,
                                const Eigen::VectorXd& tau);

/// One AMP pass over a block: output messages C/D (with Onsager term and
/// damping), input messages B/A, then the spike-and-slab posterior.
void amp_iteration(GampBlockState& st, const CMatrix& y_eff, const CMatrix& s, const RMatrix& s2,
                   const Eigen::VectorXd& tau, double sigma, double rho_damp, double var_floor);

/// EM noise-variance update for one block (Eq.-style residual + variance term).
double em_sigma_block(const CMatrix& y_eff, const RMatrix& c, const CMatrix& d, double sigma_prev);

/// Distance-weighted pooling of belief indicators: per-user mean over
/// (subcarrier, antenna) within each AP, then 1/d-weighted combination
/// across APs. Returns one ratio per user.
Eigen::VectorXd refine_sparsity_spatial(const std::vector<std::vector<RMatrix>>& theta,
                                        const RMatrix& dist);

/// Neighborhood mean over {(p-1), (p+1), (m-1), (m+1)}; out-of-range
/// neighbors are dropped and the mean is over the survivors.
std::vector<std::vector<RMatrix>> refine_sparsity_angular(
    const std::vector<std::vector<RMatrix>>& theta);

struct SlmExtrinsic {
    CMatrix y_pri;
    double v_pri;
};

/// Extrinsic of the SLM module for one block.
SlmExtrinsic ext_slm(const GampBlockState& st, const CMatrix& s, const CMatrix& y_eff, double sigma);

}  // namespace cfma

#endif
