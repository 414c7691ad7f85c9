#ifndef CFMA_QUANTIZER_HPP
#define CFMA_QUANTIZER_HPP

#include "cfma/core.hpp"

#include <vector>

namespace cfma {

/// Per-AP uniform scalar quantizer: 2^Q levels at odd multiples of delta/2,
/// symmetric about zero and shared by real and imaginary parts.
struct QuantizerSpec {
    int q_bits = 0;
    double delta = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;
    bool degenerate = false;  // all-zero input, delta == 0

    int num_levels() const { return 1 << q_bits; }
    double level(int i) const;          // i in [0, 2^Q)
    std::vector<double> codebook() const;
    /// Bin edges of level i; the outermost bins extend to +-infinity.
    void bin_edges(int i, double& lo, double& hi) const;
    int level_index(double value) const;  // nearest level, ties toward zero
};

/// Build the codebook from the observed dynamic range of all matrices of one
/// AP (max/min over real and imaginary parts jointly).
QuantizerSpec build_codebook(const std::vector<CMatrix>& observations, int q_bits);

/// Element-wise quantization; real and imaginary parts mapped separately to
/// the nearest codebook level. Out-of-range values saturate.
CMatrix quantize(const CMatrix& y, const QuantizerSpec& spec);

}  // namespace cfma

#endif
