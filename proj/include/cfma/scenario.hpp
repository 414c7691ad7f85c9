#ifndef CFMA_SCENARIO_HPP
#define CFMA_SCENARIO_HPP

#include "cfma/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cfma {

struct Point2 {
    double x = 0.0;  // km
    double y = 0.0;  // km
};

double distance_km(const Point2& a, const Point2& b);

struct NetworkGeometry {
    std::vector<Point2> ap_positions;
    std::vector<Point2> ue_positions;
    double coverage_radius_km = 0.0;
    double ap_spacing_km = 0.0;

    int num_aps() const { return static_cast<int>(ap_positions.size()); }
    int num_ues() const { return static_cast<int>(ue_positions.size()); }
    double distance(int ue, int ap) const;
    /// Nearest AP of a user, optionally restricted to a subset; ties break to
    /// the lowest AP index.
    int nearest_ap(int ue) const;
    int nearest_ap_among(int ue, const std::vector<int>& aps) const;
};

struct ActivityPattern {
    std::vector<std::uint8_t> alpha;  // length K
    std::vector<int> active_set;      // sorted
    int k_a = 0;
};

struct PathComponent {
    cplx gain;            // beta ~ CN(0,1)
    double delay_s = 0.0;
    double spatial_freq = 0.0;  // 0.5 * sin(aoa)
};

/// Small-scale + large-scale parameters of one (UE, AP) link.
struct LinkParams {
    double rho = 0.0;  // linear amplitude gain from path loss
    std::vector<PathComponent> paths;
};

struct MultipathParams {
    // links[k][b] is populated only for active users; inactive users have
    // empty rows (their channel rows are identically zero).
    std::vector<std::vector<LinkParams>> links;
    std::vector<double> tx_power_w;  // per user
};

struct ScenarioConfig {
    int num_ues = 2800;            // K
    int num_active = 140;          // K_a
    int num_aps = 7;               // B
    int antennas_per_ap = 16;      // M_c
    int dft_size_pilot = 64;       // P
    int num_pilot_subcarriers = 1; // P-tilde
    std::vector<int> pilot_subcarriers;  // 1-based; empty => 1..P_tilde
    double bandwidth_hz = 10e6;    // B_s
    int cp_length = 64;            // N_cp
    int dft_size_data = 2048;      // N
    int path_count_min = 40;
    int path_count_max = 100;
    double angular_spread_deg = 10.0;
    double tx_power_dbm = 23.0;
    double noise_psd_dbm_hz = -174.0;
    double coverage_radius_km = 2.65;
    double ap_spacing_km = 1.7320508075688772;  // sqrt(3)
    double guard_radius_km = 0.03;

    std::vector<int> effective_pilot_subcarriers() const;
    double tx_power_w() const;
    double noise_variance_w() const;  // per pilot-subcarrier sample
    double subcarrier_freq_hz(int p_one_based) const;
};

struct ChannelTensor {
    // spatial[p][b]: K x M_c, p indexes the selected pilot subcarriers.
    std::vector<std::vector<CMatrix>> spatial;
    MultipathParams params;

    CMatrix angular(int p, int b, const CMatrix& a_r) const {
        return spatial_to_angular(spatial[p][b], a_r);
    }
};

struct PilotBook {
    std::vector<CMatrix> s;       // per selected subcarrier: G x K
    int g = 0;                    // pilot length
    std::vector<double> freqs_hz; // f_p of each selected subcarrier
};

struct Scenario {
    ScenarioConfig cfg;
    NetworkGeometry geom;
    ActivityPattern act;
    ChannelTensor channels;
    PilotBook pilots;
    double noise_var = 0.0;
    // Identity of the generator that produced this scenario, kept so a dump
    // can replay the pilot/noise substreams exactly.
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

// --- geometry -------------------------------------------------------------

/// b = 1: single AP at the origin. b = 7: center AP plus a regular hexagon
/// ring at circumradius `spacing` (so ring side length equals `spacing`).
NetworkGeometry layout_hex(int b, double spacing_km);

/// Uniform placement over the coverage disk, rejecting positions within the
/// guard radius of any AP.
void place_users(NetworkGeometry& geom, int k, double guard_radius_km, Rng rng);

// --- activity & propagation ------------------------------------------------

ActivityPattern draw_activity(int k, int k_a, Rng rng);

double path_loss_db(double d_km);
inline double path_loss_gain(double d_km) { return std::pow(10.0, -path_loss_db(d_km) / 20.0); }

// --- channel / pilot / observation synthesis -------------------------------

MultipathParams draw_multipath(const NetworkGeometry& geom, const ActivityPattern& act,
                               const ScenarioConfig& cfg, Rng rng);

/// Deterministic assembly of the spatial tensors from stored parameters
/// (also used for replay from a scenario dump).
ChannelTensor assemble_channels(const NetworkGeometry& geom, const ActivityPattern& act,
                                const ScenarioConfig& cfg, MultipathParams params);

ChannelTensor gen_channels(const NetworkGeometry& geom, const ActivityPattern& act,
                           const ScenarioConfig& cfg, Rng rng);

PilotBook gen_pilots(int g, int k, const ScenarioConfig& cfg, Rng rng);

/// Y[p][b] = S_p * H[p][b] + N, with N entries iid CN(0, noise_var).
std::vector<std::vector<CMatrix>> synthesize_rx(const PilotBook& pilots, const ChannelTensor& ch,
                                                double noise_var, Rng rng);

Scenario make_scenario(const ScenarioConfig& cfg, int g, Rng rng);

// --- frame timing ------------------------------------------------------------

double pilot_latency_s(int g, int n_cp, int dft_len, double b_s);
double latency_reduction(int n_cp, int p, int n);

// --- dump / load -------------------------------------------------------------

/// Structured-text (JSON) dump of geometry, seeds, activity, and multipath
/// parameters; load reproduces the scenario exactly.
std::string scenario_to_json(const Scenario& scen);
Scenario scenario_from_json(const std::string& text);

}  // namespace cfma

#endif
