#include "cfma/scenario.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfma {

using json = nlohmann::json;

double distance_km(const Point2& a, const Point2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

double NetworkGeometry::distance(int ue, int ap) const {
    return distance_km(ue_positions.at(ue), ap_positions.at(ap));
}

int NetworkGeometry::nearest_ap(int ue) const {
    int best = 0;
    double best_d = distance(ue, 0);
    for (int b = 1; b < num_aps(); ++b) {
        const double d = distance(ue, b);
        if (d < best_d) {
            best_d = d;
            best = b;
        }
    }
    return best;
}

int NetworkGeometry::nearest_ap_among(int ue, const std::vector<int>& aps) const {
    int best = -1;
    double best_d = 0.0;
    for (int b : aps) {
        const double d = distance(ue, b);
        if (best < 0 || d < best_d || (d == best_d && b < best)) {
            best_d = d;
            best = b;
        }
    }
    if (best < 0) throw InvalidArgument("nearest_ap_among: empty AP set");
    return best;
}

std::vector<int> ScenarioConfig::effective_pilot_subcarriers() const {
    if (!pilot_subcarriers.empty()) return pilot_subcarriers;
    std::vector<int> out(num_pilot_subcarriers);
    std::iota(out.begin(), out.end(), 1);
    return out;
}

double ScenarioConfig::tx_power_w() const {
    return std::pow(10.0, (tx_power_dbm - 30.0) / 10.0);
}

double ScenarioConfig::noise_variance_w() const {
    const double psd_w_hz = std::pow(10.0, (noise_psd_dbm_hz - 30.0) / 10.0);
    return psd_w_hz * bandwidth_hz / static_cast<double>(dft_size_pilot);
}

double ScenarioConfig::subcarrier_freq_hz(int p_one_based) const {
    return -bandwidth_hz / 2.0 +
           bandwidth_hz * static_cast<double>(p_one_based) / static_cast<double>(dft_size_pilot);
}

NetworkGeometry layout_hex(int b, double spacing_km) {
    if (spacing_km <= 0.0) throw InvalidArgument("layout_hex: spacing must be positive");
    NetworkGeometry geom;
    geom.ap_spacing_km = spacing_km;
    if (b == 1) {
        geom.ap_positions = {{0.0, 0.0}};
    } else if (b == 7) {
        geom.ap_positions.push_back({0.0, 0.0});
        for (int i = 0; i < 6; ++i) {
            const double ang = M_PI / 3.0 * i;
            geom.ap_positions.push_back({spacing_km * std::cos(ang), spacing_km * std::sin(ang)});
        }
    } else {
        throw InvalidArgument("layout_hex: unsupported AP count (use 1 or 7)");
    }
    return geom;
}

void place_users(NetworkGeometry& geom, int k, double guard_radius_km, Rng rng) {
    geom.ue_positions.clear();
    geom.ue_positions.reserve(k);
    const double r_cov = geom.coverage_radius_km;
    while (static_cast<int>(geom.ue_positions.size()) < k) {
        const double r = r_cov * std::sqrt(rng.next_double());
        const double t = 2.0 * M_PI * rng.next_double();
        const Point2 pos{r * std::cos(t), r * std::sin(t)};
        bool ok = true;
        for (const Point2& ap : geom.ap_positions) {
            if (distance_km(pos, ap) < guard_radius_km) {
                ok = false;
                break;
            }
        }
        if (ok) geom.ue_positions.push_back(pos);
    }
}

ActivityPattern draw_activity(int k, int k_a, Rng rng) {
    if (k_a < 0 || k_a > k) throw InvalidArgument("draw_activity: k_a out of range");
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k_a; ++i) {
        const int j = static_cast<int>(rng.next_int(i, k - 1));
        std::swap(idx[i], idx[j]);
    }
    ActivityPattern act;
    act.k_a = k_a;
    act.active_set.assign(idx.begin(), idx.begin() + k_a);
    std::sort(act.active_set.begin(), act.active_set.end());
    act.alpha.assign(k, 0);
    for (int a : act.active_set) act.alpha[a] = 1;
    return act;
}

double path_loss_db(double d_km) {
    if (d_km <= 0.0) throw InvalidArgument("path_loss_db: distance must be positive");
    return 128.1 + 37.6 * std::log10(d_km);
}

MultipathParams draw_multipath(const NetworkGeometry& geom, const ActivityPattern& act,
                               const ScenarioConfig& cfg, Rng rng) {
    const int k = cfg.num_ues;
    const int b_count = geom.num_aps();
    const double spread_rad = cfg.angular_spread_deg * M_PI / 180.0;
    const double delay_max = static_cast<double>(cfg.cp_length) / cfg.bandwidth_hz;

    MultipathParams mp;
    mp.links.assign(k, std::vector<LinkParams>(b_count));
    mp.tx_power_w.assign(k, cfg.tx_power_w());

    for (int ue : act.active_set) {
        for (int b = 0; b < b_count; ++b) {
            Rng link_rng = rng.substream("link", static_cast<std::uint64_t>(ue) * b_count + b);
            LinkParams& lp = mp.links[ue][b];
            lp.rho = path_loss_gain(geom.distance(ue, b));
            const int n_paths = static_cast<int>(link_rng.next_int(cfg.path_count_min, cfg.path_count_max));
            const double nominal_aoa = (link_rng.next_double() - 0.5) * M_PI;
            lp.paths.resize(n_paths);
            for (PathComponent& pc : lp.paths) {
                pc.gain = link_rng.next_cgaussian(cplx(0.0, 0.0), 1.0);
                pc.delay_s = link_rng.next_double() * delay_max;
                const double aoa = nominal_aoa + (link_rng.next_double() * 2.0 - 1.0) * spread_rad;
                pc.spatial_freq = 0.5 * std::sin(aoa);
            }
        }
    }
    return mp;
}

ChannelTensor assemble_channels(const NetworkGeometry& geom, const ActivityPattern& act,
                                const ScenarioConfig& cfg, MultipathParams params) {
    const int k = cfg.num_ues;
    const int b_count = geom.num_aps();
    const int m_c = cfg.antennas_per_ap;
    const std::vector<int> subcarriers = cfg.effective_pilot_subcarriers();

    ChannelTensor ch;
    ch.spatial.resize(subcarriers.size());
    for (std::size_t pi = 0; pi < subcarriers.size(); ++pi) {
        const double f_p = cfg.subcarrier_freq_hz(subcarriers[pi]);
        ch.spatial[pi].assign(b_count, CMatrix::Zero(k, m_c));
        for (int b = 0; b < b_count; ++b) {
            CMatrix& h = ch.spatial[pi][b];
            for (int ue : act.active_set) {
                const LinkParams& lp = params.links[ue][b];
                const double amp = std::sqrt(params.tx_power_w[ue]) * lp.rho;
                for (const PathComponent& pc : lp.paths) {
                    const double delay_phase = -2.0 * M_PI * pc.delay_s * f_p;
                    cplx c = pc.gain * cplx(std::cos(delay_phase), std::sin(delay_phase));
                    const double w = -2.0 * M_PI * pc.spatial_freq;
                    const cplx step(std::cos(w), std::sin(w));
                    for (int m = 0; m < m_c; ++m) {
                        h(ue, m) += amp * c;
                        c *= step;
                    }
                }
            }
        }
    }
    ch.params = std::move(params);
    return ch;
}

ChannelTensor gen_channels(const NetworkGeometry& geom, const ActivityPattern& act,
                           const ScenarioConfig& cfg, Rng rng) {
    return assemble_channels(geom, act, cfg, draw_multipath(geom, act, cfg, rng));
}

PilotBook gen_pilots(int g, int k, const ScenarioConfig& cfg, Rng rng) {
    if (g < 1) throw InvalidArgument("gen_pilots: pilot length must be >= 1");
    const std::vector<int> subcarriers = cfg.effective_pilot_subcarriers();
    PilotBook book;
    book.g = g;
    book.s.resize(subcarriers.size());
    book.freqs_hz.resize(subcarriers.size());
    for (std::size_t pi = 0; pi < subcarriers.size(); ++pi) {
        Rng pr = rng.substream("pilot", pi);
        CMatrix& s = book.s[pi];
        s.resize(g, k);
        for (int col = 0; col < k; ++col)
            for (int row = 0; row < g; ++row) s(row, col) = pr.next_cgaussian(cplx(0.0, 0.0), 1.0);
        book.freqs_hz[pi] = cfg.subcarrier_freq_hz(subcarriers[pi]);
    }
    return book;
}

std::vector<std::vector<CMatrix>> synthesize_rx(const PilotBook& pilots, const ChannelTensor& ch,
                                                double noise_var, Rng rng) {
    if (noise_var < 0.0) throw InvalidArgument("synthesize_rx: negative noise variance");
    const std::size_t p_count = ch.spatial.size();
    if (pilots.s.size() != p_count) throw InvalidArgument("synthesize_rx: pilot/channel subcarrier mismatch");
    std::vector<std::vector<CMatrix>> y(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
        const std::size_t b_count = ch.spatial[p].size();
        y[p].resize(b_count);
        for (std::size_t b = 0; b < b_count; ++b) {
            if (pilots.s[p].cols() != ch.spatial[p][b].rows())
                throw InvalidArgument("synthesize_rx: dimension mismatch");
            CMatrix out = pilots.s[p] * ch.spatial[p][b];
            if (noise_var > 0.0) {
                Rng nr = rng.substream("awgn", p * b_count + b);
                for (Eigen::Index j = 0; j < out.cols(); ++j)
                    for (Eigen::Index i = 0; i < out.rows(); ++i)
                        out(i, j) += nr.next_cgaussian(cplx(0.0, 0.0), noise_var);
            }
            y[p][b] = std::move(out);
        }
    }
    return y;
}

Scenario make_scenario(const ScenarioConfig& cfg, int g, Rng rng) {
    Scenario scen;
    scen.cfg = cfg;
    scen.seed = rng.seed();
    scen.stream = rng.stream();
    scen.geom = layout_hex(cfg.num_aps, cfg.ap_spacing_km);
    scen.geom.coverage_radius_km = cfg.coverage_radius_km;
    place_users(scen.geom, cfg.num_ues, cfg.guard_radius_km, rng.substream("placement"));
    scen.act = draw_activity(cfg.num_ues, cfg.num_active, rng.substream("activity"));
    scen.channels = gen_channels(scen.geom, scen.act, cfg, rng.substream("channels"));
    scen.pilots = gen_pilots(g, cfg.num_ues, cfg, rng.substream("pilots"));
    scen.noise_var = cfg.noise_variance_w();
    return scen;
}

double pilot_latency_s(int g, int n_cp, int dft_len, double b_s) {
    if (g <= 0 || n_cp <= 0 || dft_len <= 0 || b_s <= 0.0)
        throw InvalidArgument("pilot_latency_s: all arguments must be positive");
    return static_cast<double>(g) * (n_cp + dft_len) / b_s;
}

double latency_reduction(int n_cp, int p, int n) {
    if (n_cp <= 0 || p <= 0 || n <= 0) throw InvalidArgument("latency_reduction: arguments must be positive");
    return 1.0 - static_cast<double>(n_cp + p) / static_cast<double>(n_cp + n);
}

namespace {

json config_to_json(const ScenarioConfig& c) {
    return json{{"num_ues", c.num_ues},
                {"num_active", c.num_active},
                {"num_aps", c.num_aps},
                {"antennas_per_ap", c.antennas_per_ap},
                {"dft_size_pilot", c.dft_size_pilot},
                {"num_pilot_subcarriers", c.num_pilot_subcarriers},
                {"pilot_subcarriers", c.pilot_subcarriers},
                {"bandwidth_hz", c.bandwidth_hz},
                {"cp_length", c.cp_length},
                {"dft_size_data", c.dft_size_data},
                {"path_count_min", c.path_count_min},
                {"path_count_max", c.path_count_max},
                {"angular_spread_deg", c.angular_spread_deg},
                {"tx_power_dbm", c.tx_power_dbm},
                {"noise_psd_dbm_hz", c.noise_psd_dbm_hz},
                {"coverage_radius_km", c.coverage_radius_km},
                {"ap_spacing_km", c.ap_spacing_km},
                {"guard_radius_km", c.guard_radius_km}};
}

ScenarioConfig config_from_json(const json& j) {
    ScenarioConfig c;
    j.at("num_ues").get_to(c.num_ues);
    j.at("num_active").get_to(c.num_active);
    j.at("num_aps").get_to(c.num_aps);
    j.at("antennas_per_ap").get_to(c.antennas_per_ap);
    j.at("dft_size_pilot").get_to(c.dft_size_pilot);
    j.at("num_pilot_subcarriers").get_to(c.num_pilot_subcarriers);
    j.at("pilot_subcarriers").get_to(c.pilot_subcarriers);
    j.at("bandwidth_hz").get_to(c.bandwidth_hz);
    j.at("cp_length").get_to(c.cp_length);
    j.at("dft_size_data").get_to(c.dft_size_data);
    j.at("path_count_min").get_to(c.path_count_min);
    j.at("path_count_max").get_to(c.path_count_max);
    j.at("angular_spread_deg").get_to(c.angular_spread_deg);
    j.at("tx_power_dbm").get_to(c.tx_power_dbm);
    j.at("noise_psd_dbm_hz").get_to(c.noise_psd_dbm_hz);
    j.at("coverage_radius_km").get_to(c.coverage_radius_km);
    j.at("ap_spacing_km").get_to(c.ap_spacing_km);
    j.at("guard_radius_km").get_to(c.guard_radius_km);
    return c;
}

}  // namespace

std::string scenario_to_json(const Scenario& scen) {
    json j;
    j["format"] = "cfma-scenario-v1";
    j["seed"] = scen.seed;
    j["stream"] = scen.stream;
    j["pilot_length"] = scen.pilots.g;
    j["config"] = config_to_json(scen.cfg);

    json aps = json::array();
    for (const Point2& p : scen.geom.ap_positions) aps.push_back({p.x, p.y});
    json ues = json::array();
    for (const Point2& p : scen.geom.ue_positions) ues.push_back({p.x, p.y});
    j["geometry"] = {{"aps", aps},
                     {"ues", ues},
                     {"coverage_radius_km", scen.geom.coverage_radius_km},
                     {"ap_spacing_km", scen.geom.ap_spacing_km}};
    j["active_set"] = scen.act.active_set;
    j["tx_power_w"] = scen.channels.params.tx_power_w;

    json links = json::array();
    for (int ue : scen.act.active_set) {
        for (std::size_t b = 0; b < scen.channels.params.links[ue].size(); ++b) {
            const LinkParams& lp = scen.channels.params.links[ue][b];
            json paths = json::array();
            for (const PathComponent& pc : lp.paths)
                paths.push_back({pc.gain.real(), pc.gain.imag(), pc.delay_s, pc.spatial_freq});
            links.push_back({{"ue", ue}, {"ap", b}, {"rho", lp.rho}, {"paths", paths}});
        }
    }
    j["links"] = links;
    return j.dump(1);
}

Scenario scenario_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "cfma-scenario-v1")
        throw InvalidArgument("scenario_from_json: unknown format");

    Scenario scen;
    scen.cfg = config_from_json(j.at("config"));
    scen.seed = j.at("seed").get<std::uint64_t>();
    scen.stream = j.at("stream").get<std::uint64_t>();

    const json& geom = j.at("geometry");
    for (const auto& p : geom.at("aps")) scen.geom.ap_positions.push_back({p.at(0), p.at(1)});
    for (const auto& p : geom.at("ues")) scen.geom.ue_positions.push_back({p.at(0), p.at(1)});
    scen.geom.coverage_radius_km = geom.at("coverage_radius_km");
    scen.geom.ap_spacing_km = geom.at("ap_spacing_km");

    scen.act.active_set = j.at("active_set").get<std::vector<int>>();
    scen.act.k_a = static_cast<int>(scen.act.active_set.size());
    scen.act.alpha.assign(scen.cfg.num_ues, 0);
    for (int a : scen.act.active_set) scen.act.alpha[a] = 1;

    MultipathParams mp;
    mp.links.assign(scen.cfg.num_ues, std::vector<LinkParams>(scen.geom.num_aps()));
    mp.tx_power_w = j.at("tx_power_w").get<std::vector<double>>();
    for (const auto& l : j.at("links")) {
        const int ue = l.at("ue");
        const int ap = l.at("ap");
        LinkParams& lp = mp.links[ue][ap];
        lp.rho = l.at("rho");
        for (const auto& pc : l.at("paths"))
            lp.paths.push_back({cplx(pc.at(0), pc.at(1)), pc.at(2), pc.at(3)});
    }
    scen.channels = assemble_channels(scen.geom, scen.act, scen.cfg, std::move(mp));

    Rng rng(scen.seed, scen.stream);
    scen.pilots = gen_pilots(j.at("pilot_length").get<int>(), scen.cfg.num_ues, scen.cfg,
                             rng.substream("pilots"));
    scen.noise_var = scen.cfg.noise_variance_w();
    return scen;
}

}  // namespace cfma
