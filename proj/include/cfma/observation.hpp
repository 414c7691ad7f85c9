#ifndef CFMA_OBSERVATION_HPP
#define CFMA_OBSERVATION_HPP

#include "cfma/core.hpp"
#include "cfma/quantizer.hpp"

#include <vector>

namespace cfma {

/// What the processing unit sees: per-(subcarrier, AP) observation blocks,
/// the per-AP quantizer side information, and the mapping of each block's
/// antenna columns into the concatenated M = B * M_c layout.
struct ObservationSet {
    std::vector<int> ap_ids;              // global AP indices, ascending
    std::vector<QuantizerSpec> specs;     // per listed AP (empty if !quantized)
    std::vector<std::vector<CMatrix>> y;  // [p][a]: G x M_c
    double noise_var = 0.0;               // receiver-known AWGN variance
    bool quantized = true;
    int antennas_per_ap = 0;

    int num_subcarriers() const { return static_cast<int>(y.size()); }
    int num_blocks() const { return static_cast<int>(ap_ids.size()); }
    int pilot_len() const { return y.empty() || y[0].empty() ? 0 : static_cast<int>(y[0][0].rows()); }

    /// Global column indices of block a in the concatenated layout.
    std::vector<int> global_columns(int a) const;

    /// Horizontal concatenation [Y_{p,b1} ... Y_{p,bn}] in listed AP order.
    CMatrix concatenated(int p) const;

    /// Recover one AP's block from the set (inverse of concatenation).
    const CMatrix& block(int p, int global_ap) const;
};

/// Cloud assembly from per-AP quantized blocks (blocks[p][b]).
ObservationSet assemble_cloud(std::vector<std::vector<CMatrix>> blocks,
                              std::vector<QuantizerSpec> specs, double noise_var,
                              bool quantized = true);

/// Quantize raw per-AP observations with a per-AP codebook built from the
/// AP's own dynamic range across all its subcarrier matrices.
ObservationSet quantize_observations(const std::vector<std::vector<CMatrix>>& raw, int q_bits,
                                     double noise_var);

/// Keep raw observations (infinite-resolution processing).
ObservationSet passthrough_observations(std::vector<std::vector<CMatrix>> raw, double noise_var);

/// Column restriction to a subset of APs (edge groups); the subset is stored
/// in ascending global order.
ObservationSet restrict_columns(const ObservationSet& obs, const std::vector<int>& ap_subset);

}  // namespace cfma

#endif
