#include "subnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subnet/util.hpp"

namespace subnet {

using nlohmann::json;

int EnvConfig::off_power_index() const {
    for (size_t k = 0; k < tx_power_levels_dbm.size(); ++k)
        if (tx_power_levels_dbm[k] == noise_dbm) return int(k);
    return -1;
}

double EnvConfig::noise_mw() const { return db_to_linear(noise_dbm); }

double EnvConfig::payload(int i) const {
    if (payload_bits.size() == 1) return payload_bits[0];
    return payload_bits.at(size_t(i));
}

double EnvConfig::max_power_dbm() const {
    return *std::max_element(tx_power_levels_dbm.begin(), tx_power_levels_dbm.end());
}

double EnvConfig::rho() const {
    if (fading_correlation >= 0.0) return fading_correlation;
    const double mean_speed = 0.5 * (speed_min_mps + speed_max_mps);
    const double doppler_hz = mean_speed * carrier_hz / 299792458.0;
    const double rho = std::cyl_bessel_j(0.0, 2.0 * M_PI * doppler_hz * tti_s());
    return std::clamp(rho, 0.0, 0.999999);
}

double EnvConfig::eta(int i) const {
    const double pl = pathloss_ref_db +
                      10.0 * pathloss_exponent * std::log10(std::max(intra_link_distance_m, 0.1));
    const double gain = db_to_linear(tx_gain_dbi + rx_gain_dbi - pl);
    const double snr = db_to_linear(max_power_dbm()) * gain * double(n_subcarriers) / noise_mw();
    const double max_rate_bps = channel_bandwidth_hz * std::log2(1.0 + snr);
    return completion_reward_margin * max_rate_bps * tti_s() / payload(i);
}

void EnvConfig::validate() const {
    std::vector<std::string> errs;
    auto req = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    req(n_subnetworks >= 1, "env.n_subnetworks must be >= 1");
    req(n_channels >= 1, "env.n_channels must be >= 1");
    req(n_subcarriers >= 1, "env.n_subcarriers must be >= 1");
    req(area_w_m > 0 && area_h_m > 0, "env.area_m must be positive");
    req(min_separation_m >= 0, "env.min_separation_m must be >= 0");
    req(speed_min_mps <= speed_max_mps, "env.speed_range_mps must be ordered (min <= max)");
    req(speed_min_mps >= 0, "env.speed_range_mps must be non-negative");
    req(std::abs(p_straight + p_left + p_right - 1.0) < 1e-9, "env.turn_probs must sum to 1");
    req(p_straight >= 0 && p_left >= 0 && p_right >= 0, "env.turn_probs must be non-negative");
    req(tti_ms > 0, "env.tti_ms must be > 0");
    req(episode_ttis >= 1, "env.episode_ttis must be >= 1");
    req(channel_bandwidth_hz > 0, "env.channel_bandwidth_hz must be > 0");
    req(!tx_power_levels_dbm.empty(), "env.tx_power_levels_dbm must be non-empty");
    {
        const int n_off = int(std::count(tx_power_levels_dbm.begin(), tx_power_levels_dbm.end(),
                                         noise_dbm));
        req(n_off == 1,
            "env.tx_power_levels_dbm must contain exactly one off level equal to env.noise_dbm");
    }
    req(!payload_bits.empty(), "env.payload_bits is required");
    if (!payload_bits.empty()) {
        req(payload_bits.size() == 1 || payload_bits.size() == size_t(std::max(n_subnetworks, 0)),
            "env.payload_bits must be a scalar or one entry per subnetwork");
        for (const double b : payload_bits) req(b > 0, "env.payload_bits entries must be > 0");
    }
    req(fading_correlation < 1.0, "env.fading_correlation must be < 1");
    req(intra_link_distance_m > 0, "env.intra_link_distance_m must be > 0");
    req(corridor_spacing_m > 0, "env.corridor_spacing_m must be > 0");
    req(corridor_spacing_m <= std::max(area_w_m, area_h_m),
        "env.corridor_spacing_m must fit inside the area");
    req(obs_rssi_scale_db > 0, "env.obs_rssi_scale_db must be > 0");
    req(completion_reward_margin > 1.0, "env.completion_reward_margin must be > 1");
    if (!fixed_positions.empty())
        req(fixed_positions.size() == size_t(std::max(n_subnetworks, 0)),
            "env.fixed_positions must list one (x, y) per subnetwork");
    if (!errs.empty()) {
        std::ostringstream ss;
        ss << "invalid environment config (" << errs.size() << " violation(s)):";
        for (const auto& e : errs) ss << "\n  - " << e;
        throw ConfigError(ss.str());
    }
}

void TrainerConfig::validate() const {
    std::vector<std::string> errs;
    auto req = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    req(lr_actor > 0 && lr_actor <= 1, "trainer.lr_actor must be in (0, 1]");
    req(lr_critic > 0 && lr_critic <= 1, "trainer.lr_critic must be in (0, 1]");
    req(gamma >= 0 && gamma < 1, "trainer.gamma must be in [0, 1)");
    req(alpha >= 0, "trainer.alpha must be >= 0");
    req(tau >= 0 && tau <= 1, "trainer.tau must be in [0, 1]");
    req(batch_size >= 1, "trainer.batch_size must be >= 1");
    req(buffer_capacity >= batch_size, "trainer.buffer_capacity must be >= batch_size");
    req(episodes >= 1, "trainer.episodes must be >= 1");
    req(updates_per_step >= 0, "trainer.updates_per_step must be >= 0");
    req(warmup_transitions >= 0, "trainer.warmup_transitions must be >= 0");
    req(k_hist >= 1, "trainer.k_hist must be >= 1");
    req(enc_hidden >= 1 && enc_out >= 1 && gru_hidden >= 1 && hard_hidden >= 1,
        "trainer network widths must be >= 1");
    req(attn_heads >= 1 && attn_qk_dim >= 1 && attn_head_dim >= 1,
        "trainer attention dims must be >= 1");
    req(gumbel_temperature > 0, "trainer.gumbel_temperature must be > 0");
    static const char* kVariants[] = {"ganet_full", "ganet_no_hard", "ganet_no_attn",
                                      "independent_ac", "maddpg"};
    req(std::find(std::begin(kVariants), std::end(kVariants), variant) != std::end(kVariants),
        "trainer.variant must be one of ganet_full|ganet_no_hard|ganet_no_attn|independent_ac|maddpg");
    req(eval_every >= 0, "trainer.eval_every must be >= 0");
    req(eval_episodes >= 1, "trainer.eval_episodes must be >= 1");
    if (!errs.empty()) {
        std::ostringstream ss;
        ss << "invalid trainer config (" << errs.size() << " violation(s)):";
        for (const auto& e : errs) ss << "\n  - " << e;
        throw ConfigError(ss.str());
    }
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void require_known_keys(const json& j, std::initializer_list<const char*> known,
                        const char* section) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok)
            throw ConfigError(std::string("unknown key in ") + section +
                              " config: " + item.key());
    }
}

void read_pair(const json& j, const char* key, double& a, double& b) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
        throw ConfigError(std::string("field '") + key + "' must be a [lo, hi] pair");
    a = v[0].get<double>();
    b = v[1].get<double>();
}

}  // namespace

EnvConfig env_config_from_json(const json& j) {
    EnvConfig c;
    require_known_keys(j,
                       {"n_subnetworks", "n_channels", "n_subcarriers", "area_m",
                        "min_separation_m", "speed_range_mps", "turn_probs", "tti_ms",
                        "episode_ttis", "channel_bandwidth_hz", "noise_dbm",
                        "tx_power_levels_dbm", "tx_gain_dbi", "rx_gain_dbi",
                        "rx_noise_figure_db", "payload_bits", "carrier_hz",
                        "fading_correlation", "fading_enabled", "intra_link_distance_m",
                        "corridor_spacing_m", "pathloss_ref_db", "pathloss_exponent",
                        "obs_rssi_shift_db", "obs_rssi_scale_db", "completion_reward_margin",
                        "fixed_positions", "seed"},
                       "env");
    if (!j.contains("n_subnetworks")) throw ConfigError("missing required field: env.n_subnetworks");
    if (!j.contains("n_channels")) throw ConfigError("missing required field: env.n_channels");
    if (!j.contains("payload_bits")) throw ConfigError("missing required field: env.payload_bits");
    read_field(j, "n_subnetworks", c.n_subnetworks);
    read_field(j, "n_channels", c.n_channels);
    read_field(j, "n_subcarriers", c.n_subcarriers);
    read_pair(j, "area_m", c.area_w_m, c.area_h_m);
    read_field(j, "min_separation_m", c.min_separation_m);
    read_pair(j, "speed_range_mps", c.speed_min_mps, c.speed_max_mps);
    if (j.contains("turn_probs")) {
        const auto& v = j.at("turn_probs");
        if (!v.is_array() || v.size() != 3)
            throw ConfigError("env.turn_probs must be [straight, left, right]");
        c.p_straight = v[0].get<double>();
        c.p_left = v[1].get<double>();
        c.p_right = v[2].get<double>();
    }
    read_field(j, "tti_ms", c.tti_ms);
    read_field(j, "episode_ttis", c.episode_ttis);
    read_field(j, "channel_bandwidth_hz", c.channel_bandwidth_hz);
    read_field(j, "noise_dbm", c.noise_dbm);
    read_field(j, "tx_power_levels_dbm", c.tx_power_levels_dbm);
    read_field(j, "tx_gain_dbi", c.tx_gain_dbi);
    read_field(j, "rx_gain_dbi", c.rx_gain_dbi);
    read_field(j, "rx_noise_figure_db", c.rx_noise_figure_db);
    if (j.contains("payload_bits")) {
        const auto& v = j.at("payload_bits");
        if (v.is_number())
            c.payload_bits = {v.get<double>()};
        else
            v.get_to(c.payload_bits);
    }
    read_field(j, "carrier_hz", c.carrier_hz);
    if (j.contains("fading_correlation")) {
        const auto& v = j.at("fading_correlation");
        c.fading_correlation = v.is_string() ? -1.0 : v.get<double>();  // "auto"
    }
    read_field(j, "fading_enabled", c.fading_enabled);
    read_field(j, "intra_link_distance_m", c.intra_link_distance_m);
    read_field(j, "corridor_spacing_m", c.corridor_spacing_m);
    read_field(j, "pathloss_ref_db", c.pathloss_ref_db);
    read_field(j, "pathloss_exponent", c.pathloss_exponent);
    read_field(j, "obs_rssi_shift_db", c.obs_rssi_shift_db);
    read_field(j, "obs_rssi_scale_db", c.obs_rssi_scale_db);
    read_field(j, "completion_reward_margin", c.completion_reward_margin);
    if (j.contains("fixed_positions")) {
        for (const auto& p : j.at("fixed_positions"))
            c.fixed_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    read_field(j, "seed", c.seed);
    return c;
}

TrainerConfig trainer_config_from_json(const json& j) {
    TrainerConfig c;
    require_known_keys(j,
                       {"lr_actor", "lr_critic", "gamma", "alpha", "tau", "batch_size",
                        "buffer_capacity", "episodes", "updates_per_step",
                        "warmup_transitions", "k_hist", "enc_hidden", "enc_out",
                        "gru_hidden", "hard_hidden", "attn_heads", "attn_qk_dim",
                        "attn_head_dim", "gumbel_temperature", "exact_expectation",
                        "bootstrap_on_done", "variant", "eval_every", "eval_episodes",
                        "seed"},
                       "trainer");
    read_field(j, "lr_actor", c.lr_actor);
    read_field(j, "lr_critic", c.lr_critic);
    read_field(j, "gamma", c.gamma);
    read_field(j, "alpha", c.alpha);
    read_field(j, "tau", c.tau);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "buffer_capacity", c.buffer_capacity);
    read_field(j, "episodes", c.episodes);
    read_field(j, "updates_per_step", c.updates_per_step);
    read_field(j, "warmup_transitions", c.warmup_transitions);
    read_field(j, "k_hist", c.k_hist);
    read_field(j, "enc_hidden", c.enc_hidden);
    read_field(j, "enc_out", c.enc_out);
    read_field(j, "gru_hidden", c.gru_hidden);
    read_field(j, "hard_hidden", c.hard_hidden);
    read_field(j, "attn_heads", c.attn_heads);
    read_field(j, "attn_qk_dim", c.attn_qk_dim);
    read_field(j, "attn_head_dim", c.attn_head_dim);
    read_field(j, "gumbel_temperature", c.gumbel_temperature);
    read_field(j, "exact_expectation", c.exact_expectation);
    read_field(j, "bootstrap_on_done", c.bootstrap_on_done);
    read_field(j, "variant", c.variant);
    read_field(j, "eval_every", c.eval_every);
    read_field(j, "eval_episodes", c.eval_episodes);
    read_field(j, "seed", c.seed);
    return c;
}

json env_config_to_json(const EnvConfig& c) {
    json j;
    j["n_subnetworks"] = c.n_subnetworks;
    j["n_channels"] = c.n_channels;
    j["n_subcarriers"] = c.n_subcarriers;
    j["area_m"] = {c.area_w_m, c.area_h_m};
    j["min_separation_m"] = c.min_separation_m;
    j["speed_range_mps"] = {c.speed_min_mps, c.speed_max_mps};
    j["turn_probs"] = {c.p_straight, c.p_left, c.p_right};
    j["tti_ms"] = c.tti_ms;
    j["episode_ttis"] = c.episode_ttis;
    j["channel_bandwidth_hz"] = c.channel_bandwidth_hz;
    j["noise_dbm"] = c.noise_dbm;
    j["tx_power_levels_dbm"] = c.tx_power_levels_dbm;
    j["tx_gain_dbi"] = c.tx_gain_dbi;
    j["rx_gain_dbi"] = c.rx_gain_dbi;
    j["rx_noise_figure_db"] = c.rx_noise_figure_db;
    j["payload_bits"] = c.payload_bits;
    j["carrier_hz"] = c.carrier_hz;
    j["fading_correlation"] = c.fading_correlation;
    j["fading_enabled"] = c.fading_enabled;
    j["intra_link_distance_m"] = c.intra_link_distance_m;
    j["corridor_spacing_m"] = c.corridor_spacing_m;
    j["pathloss_ref_db"] = c.pathloss_ref_db;
    j["pathloss_exponent"] = c.pathloss_exponent;
    j["obs_rssi_shift_db"] = c.obs_rssi_shift_db;
    j["obs_rssi_scale_db"] = c.obs_rssi_scale_db;
    j["completion_reward_margin"] = c.completion_reward_margin;
    if (!c.fixed_positions.empty()) {
        json fp = json::array();
        for (const auto& p : c.fixed_positions) fp.push_back({p[0], p[1]});
        j["fixed_positions"] = fp;
    }
    j["seed"] = c.seed;
    return j;
}

json trainer_config_to_json(const TrainerConfig& c) {
    json j;
    j["lr_actor"] = c.lr_actor;
    j["lr_critic"] = c.lr_critic;
    j["gamma"] = c.gamma;
    j["alpha"] = c.alpha;
    j["tau"] = c.tau;
    j["batch_size"] = c.batch_size;
    j["buffer_capacity"] = c.buffer_capacity;
    j["episodes"] = c.episodes;
    j["updates_per_step"] = c.updates_per_step;
    j["warmup_transitions"] = c.warmup_transitions;
    j["k_hist"] = c.k_hist;
    j["enc_hidden"] = c.enc_hidden;
    j["enc_out"] = c.enc_out;
    j["gru_hidden"] = c.gru_hidden;
    j["hard_hidden"] = c.hard_hidden;
    j["attn_heads"] = c.attn_heads;
    j["attn_qk_dim"] = c.attn_qk_dim;
    j["attn_head_dim"] = c.attn_head_dim;
    j["gumbel_temperature"] = c.gumbel_temperature;
    j["exact_expectation"] = c.exact_expectation;
    j["bootstrap_on_done"] = c.bootstrap_on_done;
    j["variant"] = c.variant;
    j["eval_every"] = c.eval_every;
    j["eval_episodes"] = c.eval_episodes;
    j["seed"] = c.seed;
    return j;
}

void apply_override(json& doc, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value, got: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);

    json* node = &doc;
    size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("override has an empty path segment: " + spec);
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig run_config_from_json(json j, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) apply_override(j, ov);
    RunConfig rc;
    if (!j.contains("env")) throw ConfigError("missing required section: env");
    rc.env = env_config_from_json(j.at("env"));
    rc.trainer = j.contains("trainer") ? trainer_config_from_json(j.at("trainer")) : TrainerConfig{};
    rc.env.validate();
    rc.trainer.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return run_config_from_json(std::move(j), overrides);
}

uint64_t env_fingerprint(const EnvConfig& cfg) {
    return fnv1a64(env_config_to_json(cfg).dump());
}

}  // namespace subnet
