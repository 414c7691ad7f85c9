#include "cfma/observation.hpp"

#include <algorithm>

namespace cfma {

std::vector<int> ObservationSet::global_columns(int a) const {
    std::vector<int> cols(antennas_per_ap);
    const int base = ap_ids.at(a) * antennas_per_ap;
    for (int j = 0; j < antennas_per_ap; ++j) cols[j] = base + j;
    return cols;
}

CMatrix ObservationSet::concatenated(int p) const {
    const int g = pilot_len();
    CMatrix out(g, static_cast<Eigen::Index>(num_blocks()) * antennas_per_ap);
    for (int a = 0; a < num_blocks(); ++a)
        out.middleCols(static_cast<Eigen::Index>(a) * antennas_per_ap, antennas_per_ap) = y[p][a];
    return out;
}

const CMatrix& ObservationSet::block(int p, int global_ap) const {
    const auto it = std::find(ap_ids.begin(), ap_ids.end(), global_ap);
    if (it == ap_ids.end()) throw InvalidArgument("ObservationSet::block: AP not in set");
    return y[p][static_cast<std::size_t>(it - ap_ids.begin())];
}

ObservationSet assemble_cloud(std::vector<std::vector<CMatrix>> blocks,
                              std::vector<QuantizerSpec> specs, double noise_var, bool quantized) {
    if (blocks.empty() || blocks[0].empty()) throw InvalidArgument("assemble_cloud: no blocks");
    const std::size_t b_count = blocks[0].size();
    const Eigen::Index g = blocks[0][0].rows();
    const Eigen::Index m_c = blocks[0][0].cols();
    for (const auto& row : blocks) {
        if (row.size() != b_count) throw InvalidArgument("assemble_cloud: inconsistent AP count");
        for (const CMatrix& m : row)
            if (m.rows() != g || m.cols() != m_c)
                throw InvalidArgument("assemble_cloud: inconsistent block dimensions");
    }
    if (quantized && specs.size() != b_count)
        throw InvalidArgument("assemble_cloud: one quantizer spec per AP required");
    ObservationSet obs;
    obs.ap_ids.resize(b_count);
    for (std::size_t b = 0; b < b_count; ++b) obs.ap_ids[b] = static_cast<int>(b);
    obs.specs = std::move(specs);
    obs.y = std::move(blocks);
    obs.noise_var = noise_var;
    obs.quantized = quantized;
    obs.antennas_per_ap = static_cast<int>(m_c);
    return obs;
}

ObservationSet quantize_observations(const std::vector<std::vector<CMatrix>>& raw, int q_bits,
                                     double noise_var) {
    if (raw.empty() || raw[0].empty()) throw InvalidArgument("quantize_observations: no blocks");
    const std::size_t p_count = raw.size();
    const std::size_t b_count = raw[0].size();
    std::vector<QuantizerSpec> specs(b_count);
    for (std::size_t b = 0; b < b_count; ++b) {
        std::vector<CMatrix> per_ap;
        per_ap.reserve(p_count);
        for (std::size_t p = 0; p < p_count; ++p) per_ap.push_back(raw[p][b]);
        specs[b] = build_codebook(per_ap, q_bits);
    }
    std::vector<std::vector<CMatrix>> blocks(p_count, std::vector<CMatrix>(b_count));
    for (std::size_t p = 0; p < p_count; ++p)
        for (std::size_t b = 0; b < b_count; ++b) blocks[p][b] = quantize(raw[p][b], specs[b]);
    return assemble_cloud(std::move(blocks), std::move(specs), noise_var, true);
}

ObservationSet passthrough_observations(std::vector<std::vector<CMatrix>> raw, double noise_var) {
    return assemble_cloud(std::move(raw), {}, noise_var, false);
}

ObservationSet restrict_columns(const ObservationSet& obs, const std::vector<int>& ap_subset) {
    std::vector<int> subset = ap_subset;
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
    ObservationSet out;
    out.noise_var = obs.noise_var;
    out.quantized = obs.quantized;
    out.antennas_per_ap = obs.antennas_per_ap;
    out.ap_ids = subset;
    out.y.assign(obs.y.size(), {});
    for (int ap : subset) {
        const auto it = std::find(obs.ap_ids.begin(), obs.ap_ids.end(), ap);
        if (it == obs.ap_ids.end()) throw InvalidArgument("restrict_columns: AP not in set");
        const std::size_t a = static_cast<std::size_t>(it - obs.ap_ids.begin());
        if (obs.quantized) out.specs.push_back(obs.specs[a]);
        for (std::size_t p = 0; p < obs.y.size(); ++p) out.y[p].push_back(obs.y[p][a]);
    }
    return out;
}

}  // namespace cfma
