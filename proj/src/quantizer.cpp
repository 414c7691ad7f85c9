#include "cfma/quantizer.hpp"

#include <cmath>
#include <limits>

namespace cfma {

double QuantizerSpec::level(int i) const {
    return (static_cast<double>(i) - 0.5 * (num_levels() - 1)) * delta;
}

std::vector<double> QuantizerSpec::codebook() const {
    std::vector<double> out(num_levels());
    for (int i = 0; i < num_levels(); ++i) out[i] = level(i);
    return out;
}

void QuantizerSpec::bin_edges(int i, double& lo, double& hi) const {
    const double c = level(i);
    lo = (i == 0) ? -std::numeric_limits<double>::infinity() : c - 0.5 * delta;
    hi = (i == num_levels() - 1) ? std::numeric_limits<double>::infinity() : c + 0.5 * delta;
}

int QuantizerSpec::level_index(double value) const {
    const int n = num_levels();
    if (degenerate || delta <= 0.0) return 0;
    const double u = value / delta + 0.5 * (n - 1);
    int lo = static_cast<int>(std::floor(u));
    int hi = lo + 1;
    lo = std::min(std::max(lo, 0), n - 1);
    hi = std::min(std::max(hi, 0), n - 1);
    if (lo == hi) return lo;
    const double d_lo = std::abs(value - level(lo));
    const double d_hi = std::abs(value - level(hi));
    if (d_lo < d_hi) return lo;
    if (d_hi < d_lo) return hi;
    // Exact midpoint: prefer the level nearer zero; a double tie can only
    // happen at value == 0, where the nonnegative level is taken.
    const double a_lo = std::abs(level(lo));
    const double a_hi = std::abs(level(hi));
    if (a_lo < a_hi) return lo;
    if (a_hi < a_lo) return hi;
    return level(hi) >= 0.0 ? hi : lo;
}

QuantizerSpec build_codebook(const std::vector<CMatrix>& observations, int q_bits) {
    if (q_bits < 1) throw InvalidArgument("build_codebook: q_bits must be >= 1");
    if (observations.empty()) throw InvalidArgument("build_codebook: no observations");
    double y_max = -std::numeric_limits<double>::infinity();
    double y_min = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const CMatrix& m : observations) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                const cplx v = m(i, j);
                y_max = std::max({y_max, v.real(), v.imag()});
                y_min = std::min({y_min, v.real(), v.imag()});
                any = true;
            }
        }
    }
    if (!any) throw InvalidArgument("build_codebook: empty matrices");
    QuantizerSpec spec;
    spec.q_bits = q_bits;
    spec.y_max = y_max;
    spec.y_min = y_min;
    spec.delta = (y_max - y_min) / static_cast<double>(spec.num_levels());
    spec.degenerate = !(spec.delta > 0.0);
    if (spec.degenerate) spec.delta = 0.0;
    return spec;
}

CMatrix quantize(const CMatrix& y, const QuantizerSpec& spec) {
    if (spec.degenerate) return CMatrix::Zero(y.rows(), y.cols());
    CMatrix out(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const cplx v = y(i, j);
            out(i, j) = cplx(spec.level(spec.level_index(v.real())),
                             spec.level(spec.level_index(v.imag())));
        }
    }
    return out;
}

}  // namespace cfma
