#include "subnet/env.hpp"

#include <cmath>
#include <stdexcept>

#include "subnet/util.hpp"

namespace subnet {

ChannelOccupation occupation_from_actions(const std::vector<Action>& actions,
                                          const EnvConfig& cfg) {
    ChannelOccupation occ;
    occ.theta = Eigen::MatrixXi::Zero(cfg.n_subnetworks, cfg.n_channels);
    for (int i = 0; i < cfg.n_subnetworks; ++i) occ.theta(i, actions[size_t(i)].channel) = 1;
    return occ;
}

Eigen::VectorXd Observation::to_input(const EnvConfig& cfg) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(cfg.obs_dim());
    v(prev_action.flat(cfg)) = 1.0;
    v(cfg.action_count()) = remaining_payload_norm;
    v(cfg.action_count() + 1) = remaining_budget_norm;
    for (int m = 0; m < cfg.n_channels; ++m)
        v(cfg.action_count() + 2 + m) = (rssi_dbm(m) + cfg.obs_rssi_shift_db) / cfg.obs_rssi_scale_db;
    return v;
}

double power_mw(int power_level, const EnvConfig& cfg) {
    if (power_level == cfg.off_power_index()) return 0.0;
    return db_to_linear(cfg.tx_power_levels_dbm[size_t(power_level)]);
}

double own_signal_mw(const GainSnapshot& gains, const Action& action, int agent,
                     const EnvConfig& cfg) {
    const double p = power_mw(action.power_level, cfg);
    if (p == 0.0) return 0.0;
    double g = 0.0;
    for (int k = 0; k < cfg.n_subcarriers; ++k) g += gains.intra(agent, k);
    return p * g;
}

Eigen::MatrixXd compute_rssi(const GainSnapshot& gains, const std::vector<Action>& actions,
                             const EnvConfig& cfg) {
    const int n = cfg.n_subnetworks;
    const int m = cfg.n_channels;
    Eigen::MatrixXd rssi = Eigen::MatrixXd::Constant(n, m, cfg.noise_mw());
    for (int i = 0; i < n; ++i) {
        const auto& ai = actions[size_t(i)];
        rssi(i, ai.channel) += own_signal_mw(gains, ai, i, cfg);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto& aj = actions[size_t(j)];
            const double pj = power_mw(aj.power_level, cfg);
            if (pj == 0.0) continue;
            rssi(i, aj.channel) += pj * gains.cross(i, j);
        }
    }
    return rssi;
}

double sinr_from_rssi(double rssi_linear, double own_signal_linear) {
    if (own_signal_linear <= 0.0) return 0.0;
    if (own_signal_linear >= rssi_linear)
        throw std::domain_error("own signal power must stay below total RSSI");
    return own_signal_linear / (rssi_linear - own_signal_linear);
}

double capacity_bps(double sinr, const EnvConfig& cfg) {
    return cfg.channel_bandwidth_hz * std::log2(1.0 + sinr);
}

double reward(double delivered_normalized, double remaining_payload_bits, int agent,
              const EnvConfig& cfg) {
    if (remaining_payload_bits > 0.0) return delivered_normalized;
    return cfg.eta(agent);
}

Env::Env(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<Observation> Env::reset(uint64_t seed) {
    Rng base(seed);
    rng_mob_ = base.derive("mobility");
    rng_fade_ = base.derive("fading");

    world_ = WorldState{};
    world_.mobility = init_mobility(cfg_, rng_mob_);
    world_.fading = sample_fading(nullptr, cfg_, rng_fade_);
    world_.gains = compute_gains(world_.mobility, world_.fading, cfg_);
    world_.gains.tti = 0;
    world_.remaining_bits.resize(size_t(cfg_.n_subnetworks));
    for (int i = 0; i < cfg_.n_subnetworks; ++i) world_.remaining_bits[size_t(i)] = cfg_.payload(i);
    world_.remaining_ttis = cfg_.episode_ttis;
    world_.prev_actions.assign(size_t(cfg_.n_subnetworks), Action{0, cfg_.off_power_index()});
    world_.tti = 0;
    world_.done = false;

    const Eigen::MatrixXd rssi =
        Eigen::MatrixXd::Constant(cfg_.n_subnetworks, cfg_.n_channels, cfg_.noise_mw());
    return make_observations(rssi);
}

StepResult Env::step(const std::vector<Action>& actions) {
    if (world_.done) throw std::logic_error("step() called on a finished episode");
    if (int(actions.size()) != cfg_.n_subnetworks)
        throw std::logic_error("step() needs one action per subnetwork");

    world_.mobility = step_mobility(world_.mobility, cfg_, rng_mob_);
    world_.fading = sample_fading(&world_.fading, cfg_, rng_fade_);
    world_.gains = compute_gains(world_.mobility, world_.fading, cfg_);
    world_.gains.tti = world_.tti + 1;

    const Eigen::MatrixXd rssi = compute_rssi(world_.gains, actions, cfg_);

    StepResult out;
    const int n = cfg_.n_subnetworks;
    out.rewards.resize(size_t(n));
    out.selected_capacity_bps.resize(size_t(n));
    out.info.resize(size_t(n));
    bool all_delivered = true;
    for (int i = 0; i < n; ++i) {
        const auto& a = actions[size_t(i)];
        const double s = own_signal_mw(world_.gains, a, i, cfg_);
        const double xi = sinr_from_rssi(rssi(i, a.channel), s);
        const double cap = capacity_bps(xi, cfg_);
        const double pushed = cap * cfg_.tti_s();
        const double before = world_.remaining_bits[size_t(i)];
        const double after = std::max(0.0, before - pushed);
        world_.remaining_bits[size_t(i)] = after;
        out.rewards[size_t(i)] = reward(pushed / cfg_.payload(i), before, i, cfg_);
        out.selected_capacity_bps[size_t(i)] = cap;
        out.info[size_t(i)].sinr = xi;
        out.info[size_t(i)].delivered_bits = before - after;
        if (after > 0.0) all_delivered = false;
    }

    world_.remaining_ttis -= 1;
    world_.tti += 1;
    world_.prev_actions = actions;
    world_.done = world_.remaining_ttis <= 0 || all_delivered;

    out.observations = make_observations(rssi);
    out.done = world_.done;
    return out;
}

std::vector<Observation> Env::make_observations(const Eigen::MatrixXd& rssi_mw) const {
    std::vector<Observation> obs(size_t(cfg_.n_subnetworks));
    for (int i = 0; i < cfg_.n_subnetworks; ++i) {
        auto& o = obs[size_t(i)];
        o.prev_action = world_.prev_actions[size_t(i)];
        o.remaining_payload_norm = world_.remaining_bits[size_t(i)] / cfg_.payload(i);
        o.remaining_budget_norm = double(world_.remaining_ttis) / double(cfg_.episode_ttis);
        o.rssi_dbm.resize(cfg_.n_channels);
        for (int m = 0; m < cfg_.n_channels; ++m) o.rssi_dbm(m) = linear_to_db(rssi_mw(i, m));
    }
    return obs;
}

}  // namespace subnet
