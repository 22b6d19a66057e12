#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace subnet {

// All physical and scenario parameters of one run. Defaults follow the
// reference indoor scenario; desk-scale configs override a handful of them.
struct EnvConfig {
    int n_subnetworks = 0;  // N, required
    int n_channels = 0;     // M, required
    int n_subcarriers = 1;  // K sensors/actuators per subnetwork

    double area_w_m = 259.8;
    double area_h_m = 150.0;
    double min_separation_m = 1.5;
    double speed_min_mps = 2.0;
    double speed_max_mps = 3.0;
    double p_straight = 0.5;
    double p_left = 0.25;
    double p_right = 0.25;
    double tti_ms = 1.0;
    int episode_ttis = 100;  // T

    double channel_bandwidth_hz = 100e3;  // aggregate K*W per channel
    double noise_dbm = -114.0;            // effective noise floor sigma^2
    std::vector<double> tx_power_levels_dbm = {10.0, 0.0, -114.0};
    double tx_gain_dbi = 4.0;
    double rx_gain_dbi = 4.0;
    double rx_noise_figure_db = 5.0;  // informational; noise_dbm already is the floor

    std::vector<double> payload_bits;  // per subnetwork; single entry broadcasts

    double carrier_hz = 6e9;
    double fading_correlation = -1.0;  // <0: derive from Jakes Doppler
    bool fading_enabled = true;
    double intra_link_distance_m = 1.0;
    double corridor_spacing_m = 10.0;
    double pathloss_ref_db = 32.9;   // PL at 1 m
    double pathloss_exponent = 3.19;

    double obs_rssi_shift_db = 114.0;  // network input: (rssi_dbm + shift) / scale
    double obs_rssi_scale_db = 40.0;
    double completion_reward_margin = 1.25;  // eta = margin * max normalized rate

    // Optional pinned placement for constructed scenarios; empty = random.
    std::vector<std::array<double, 2>> fixed_positions;

    uint64_t seed = 1;

    int beta() const { return int(tx_power_levels_dbm.size()); }
    int action_count() const { return n_channels * beta(); }
    int off_power_index() const;
    double tti_s() const { return tti_ms * 1e-3; }
    double noise_mw() const;
    double payload(int i) const;
    double max_power_dbm() const;
    // Resolved AR(1) fading coefficient (Jakes J0 at the mean speed when auto).
    double rho() const;
    // Completion reward for agent i (constant once payload is delivered).
    double eta(int i) const;
    int obs_dim() const { return action_count() + 2 + n_channels; }

    // Throws ConfigError listing every violated invariant.
    void validate() const;
};

// Optimizer / algorithm parameters shared by all trainable variants.
struct TrainerConfig {
    double lr_actor = 1e-4;
    double lr_critic = 1e-3;
    double gamma = 0.9;
    double alpha = 0.05;  // entropy temperature
    double tau = 0.995;   // target update: theta_bar = tau*theta_bar + (1-tau)*theta
    int batch_size = 64;
    int buffer_capacity = 100000;
    int episodes = 2000;
    int updates_per_step = 1;
    int warmup_transitions = 1000;

    int k_hist = 5;      // observation history length fed to the critic GRU
    int enc_hidden = 64;
    int enc_out = 32;    // state-code width
    int gru_hidden = 32; // history code width (e_i)
    int hard_hidden = 32;  // BiGRU hidden width per direction
    int attn_heads = 4;
    int attn_qk_dim = 32;
    int attn_head_dim = 8;
    double gumbel_temperature = 1.0;

    bool exact_expectation = true;  // per-agent enumeration in targets/baseline
    bool bootstrap_on_done = true;  // treat episode end as time-limit truncation

    std::string variant = "ganet_full";
    int eval_every = 100;     // 0 disables periodic evaluation
    int eval_episodes = 20;
    uint64_t seed = 1;

    void validate() const;
};

struct RunConfig {
    EnvConfig env;
    TrainerConfig trainer;
};

EnvConfig env_config_from_json(const nlohmann::json& j);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);
nlohmann::json env_config_to_json(const EnvConfig& cfg);
nlohmann::json trainer_config_to_json(const TrainerConfig& cfg);

// Loads {"env": {...}, "trainer": {...}} and applies dotted-path overrides
// ("env.noise_dbm=-60") before parsing. Validates both sections.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig run_config_from_json(nlohmann::json j, const std::vector<std::string>& overrides);

// Stable hash of the resolved environment config; stored in checkpoints and
// manifests so evaluation can refuse mismatched pairs.
uint64_t env_fingerprint(const EnvConfig& cfg);

// Applies one "a.b.c=value" override to a JSON document (value parsed as JSON
// when possible, else kept as string). Throws ConfigError on bad syntax.
void apply_override(nlohmann::json& doc, const std::string& spec);

}  // namespace subnet
