#include "cfma/core.hpp"

#include <cmath>
#include <limits>

namespace cfma {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr double kSqrt2Pi = 2.5066282746310005024;
constexpr double kSqrtPi = 1.7724538509055160273;

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(const std::array<std::uint32_t, 4>& ctr,
                                           const std::array<std::uint32_t, 2>& key) {
    std::array<std::uint32_t, 4> x = ctr;
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, x[0], hi0, lo0);
        mulhilo(kPhiloxM1, x[2], hi1, lo1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return x;
}

std::uint64_t hash_combine64(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 12) + (a >> 4)));
}

std::uint64_t hash_str64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return splitmix64(h);
}

std::array<std::uint32_t, 4> Rng::block(std::uint64_t counter) const {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter),
        static_cast<std::uint32_t>(counter >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32),
    };
    const std::array<std::uint32_t, 2> key = {
        static_cast<std::uint32_t>(seed_),
        static_cast<std::uint32_t>(seed_ >> 32),
    };
    return philox4x32_10(ctr, key);
}

std::uint32_t Rng::next_u32() {
    if (buf_pos_ >= 4) {
        buf_ = block(counter_++);
        buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::next_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw InvalidArgument("next_int: lo > hi");
    const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    const std::uint64_t bound = range * (std::numeric_limits<std::uint64_t>::max() / range);
    std::uint64_t x = next_u64();
    while (x >= bound) x = next_u64();
    return lo + static_cast<std::int64_t>(x % range);
}

double Rng::next_gaussian() {
    if (has_cached_gauss_) {
        has_cached_gauss_ = false;
        return cached_gauss_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    cached_gauss_ = r * std::sin(t);
    has_cached_gauss_ = true;
    return r * std::cos(t);
}

cplx Rng::next_cgaussian(cplx mean, double var) {
    if (var < 0.0) throw InvalidArgument("next_cgaussian: negative variance");
    if (var == 0.0) return mean;
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-std::log(u1) * var);  // sqrt(var/2) * sqrt(-2 ln u1)
    const double t = 2.0 * M_PI * u2;
    return mean + cplx(r * std::cos(t), r * std::sin(t));
}

CMatrix dft_unitary(Eigen::Index m) {
    if (m < 1) throw InvalidArgument("dft_unitary: dimension must be >= 1");
    CMatrix a(m, m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index c = 0; c < m; ++c) {
            const double phase = -2.0 * M_PI * static_cast<double>(r) * static_cast<double>(c) /
                                 static_cast<double>(m);
            a(r, c) = scale * cplx(std::cos(phase), std::sin(phase));
        }
    }
    return a;
}

CMatrix spatial_to_angular(const CMatrix& h_block, const CMatrix& a_r) {
    if (h_block.cols() != a_r.rows()) throw InvalidArgument("spatial_to_angular: dimension mismatch");
    return h_block * a_r.conjugate();
}

CMatrix angular_to_spatial(const CMatrix& w_block, const CMatrix& a_r) {
    if (w_block.cols() != a_r.cols()) throw InvalidArgument("angular_to_spatial: dimension mismatch");
    return w_block * a_r.transpose();
}

double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / kSqrt2Pi;
}

double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x * M_SQRT1_2);
}

double erfcx(double x) {
    if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
    if (x <= 25.0) return std::exp(x * x) * std::erfc(x);
    // Asymptotic series; relative error < 1e-13 for x > 25.
    const double ix2 = 1.0 / (x * x);
    const double series =
        1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
    return series / (x * kSqrtPi);
}

namespace {

// Moments for the case where both standardized edges are nonnegative
// (alpha >= 0), expressed through erfcx so the e^{-a^2} factors cancel.
TruncNormMoments tail_moments(double mu, double sd, double alpha, double beta) {
    const double a = alpha * M_SQRT1_2;
    const double ea = erfcx(a);
    double t = 0.0, eb = 0.0, beta_t = 0.0;
    if (std::isfinite(beta)) {
        const double b = beta * M_SQRT1_2;
        t = std::exp(-0.5 * (beta - alpha) * (beta + alpha));
        eb = erfcx(b);
        beta_t = beta * t;
    }
    const double z_scaled = 0.5 * (ea - eb * t);  // Z = e^{-a^2} * z_scaled
    if (!(z_scaled > 0.0)) {
        // Mass numerically vanished; collapse onto the nearer edge.
        const double edge = std::isfinite(beta) ? 0.5 * (alpha + beta) : alpha;
        return {mu + sd * edge, 0.0};
    }
    const double r1 = (1.0 - t) / (kSqrt2Pi * z_scaled);
    const double r2 = (alpha - beta_t) / (kSqrt2Pi * z_scaled);
    const double mean = mu + sd * r1;
    double var = sd * sd * (1.0 + r2 - r1 * r1);
    if (!(var >= 0.0)) var = 0.0;  // cancellation guard in extreme tails
    return {mean, var};
}

}  // namespace

TruncNormMoments trunc_norm_moments(double mu, double sd, double lo, double hi) {
    if (!(hi >= lo)) throw InvalidArgument("trunc_norm_moments: hi < lo");
    if (sd <= 0.0) {
        const double m = std::min(std::max(mu, lo), hi);
        return {m, 0.0};
    }
    if (lo == hi) return {lo, 0.0};

    const double alpha = std::isinf(lo) ? -std::numeric_limits<double>::infinity() : (lo - mu) / sd;
    const double beta = std::isinf(hi) ? std::numeric_limits<double>::infinity() : (hi - mu) / sd;

    if (std::isinf(alpha) && std::isinf(beta)) return {mu, sd * sd};

    // Reflect so that the upper edge is positive; avoids left-tail cases.
    if (beta <= 0.0) {
        TruncNormMoments m = trunc_norm_moments(-mu, sd, std::isinf(hi) ? -std::numeric_limits<double>::infinity() : -hi,
                                                std::isinf(lo) ? std::numeric_limits<double>::infinity() : -lo);
        return {-m.mean, m.var};
    }

    if (alpha >= 0.0) return tail_moments(mu, sd, alpha, beta);

    // Straddling bin: direct evaluation is well conditioned.
    const double phi_a = std::isinf(alpha) ? 0.0 : std_normal_pdf(alpha);
    const double phi_b = std::isinf(beta) ? 0.0 : std_normal_pdf(beta);
    const double z = std_normal_cdf(std::isinf(beta) ? 40.0 : beta) -
                     std_normal_cdf(std::isinf(alpha) ? -40.0 : alpha);
    if (!(z > 0.0)) {
        const double mid = 0.5 * (std::max(lo, mu - 40.0 * sd) + std::min(hi, mu + 40.0 * sd));
        return {mid, 0.0};
    }
    const double a_term = std::isinf(alpha) ? 0.0 : alpha * phi_a;
    const double b_term = std::isinf(beta) ? 0.0 : beta * phi_b;
    const double r1 = (phi_a - phi_b) / z;
    const double r2 = (a_term - b_term) / z;
    const double mean = mu + sd * r1;
    double var = sd * sd * (1.0 + r2 - r1 * r1);
    if (!(var >= 0.0)) var = 0.0;
    return {mean, var};
}

}  // namespace cfma
