#ifndef CFMA_CORE_HPP
#define CFMA_CORE_HPP

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace cfma {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

/// Thrown on dimension or parameter violations in the numeric kernels.
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Counter-based RNG (Philox4x32-10).
//
// A generator is identified by (seed, stream). Streams partition the counter
// space, so substreams derived per (trial, purpose) never overlap and the
// draw sequence of one stream is independent of how many values other
// streams consumed. Same seed + stream => bit-identical sequence.
// ---------------------------------------------------------------------------

std::array<std::uint32_t, 4> philox4x32_10(const std::array<std::uint32_t, 4>& ctr,
                                           const std::array<std::uint32_t, 2>& key);

/// 64-bit mix used for deriving stream ids from strings/indices.
std::uint64_t hash_combine64(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_str64(std::string_view s);

class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    /// Derive an independent generator for a named purpose.
    Rng substream(std::string_view purpose) const {
        return Rng(seed_, hash_combine64(stream_, hash_str64(purpose)));
    }
    Rng substream(std::string_view purpose, std::uint64_t index) const {
        return Rng(seed_, hash_combine64(hash_combine64(stream_, hash_str64(purpose)), index));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double next_double();

    /// Uniform integer in [lo, hi] inclusive (rejection sampled, unbiased).
    std::int64_t next_int(std::int64_t lo, std::int64_t hi);

    /// Standard normal via Box-Muller (second value of each pair is cached).
    double next_gaussian();

    /// CN(mean, var): real/imag parts independent N(., var/2).
    cplx next_cgaussian(cplx mean, double var);

  private:
    std::array<std::uint32_t, 4> block(std::uint64_t counter) const;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;  // empty
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_ = false;
};

// ---------------------------------------------------------------------------
// Unitary angular transform
// ---------------------------------------------------------------------------

/// Unitary DFT matrix A with A(a,b) = exp(-i 2 pi a b / m) / sqrt(m).
CMatrix dft_unitary(Eigen::Index m);

/// W = H * conj(A); columns move from antenna index to angular bins.
CMatrix spatial_to_angular(const CMatrix& h_block, const CMatrix& a_r);

/// Inverse of spatial_to_angular: H = W * A^T.
CMatrix angular_to_spatial(const CMatrix& w_block, const CMatrix& a_r);

// ---------------------------------------------------------------------------
// Standard-normal helpers
// ---------------------------------------------------------------------------

double std_normal_pdf(double x);
double std_normal_cdf(double x);  // via erfc, accurate in both tails

/// exp(x^2) * erfc(x) without overflow for large nonnegative x.
double erfcx(double x);

/// Mean and variance of N(mu, sd^2) truncated to [lo, hi].
/// lo may be -inf and hi may be +inf. Stable in far tails.
struct TruncNormMoments {
    double mean;
    double var;
};
TruncNormMoments trunc_norm_moments(double mu, double sd, double lo, double hi);

}  // namespace cfma

#endif
