#pragma once

#include <vector>

#include <Eigen/Dense>

#include "subnet/config.hpp"
#include "subnet/rng.hpp"
#include "subnet/simcore.hpp"

namespace subnet {

struct Action {
    int channel = 0;
    int power_level = 0;

    int flat(const EnvConfig& cfg) const { return channel * cfg.beta() + power_level; }
    static Action from_flat(int idx, const EnvConfig& cfg) {
        return {idx / cfg.beta(), idx % cfg.beta()};
    }
    bool operator==(const Action& o) const {
        return channel == o.channel && power_level == o.power_level;
    }
};

// theta(i, m) = 1 iff agent i selected channel m; rows sum to exactly 1
// whatever the power level.
struct ChannelOccupation {
    Eigen::MatrixXi theta;
};

ChannelOccupation occupation_from_actions(const std::vector<Action>& actions,
                                          const EnvConfig& cfg);

struct Observation {
    Action prev_action;
    double remaining_payload_norm = 1.0;
    double remaining_budget_norm = 1.0;
    Eigen::VectorXd rssi_dbm;  // length M

    // Flat network input: one-hot previous action, the two normalized
    // scalars, then (rssi_dbm + shift) / scale per channel.
    Eigen::VectorXd to_input(const EnvConfig& cfg) const;
};

struct AgentStepInfo {
    double sinr = 0.0;
    double delivered_bits = 0.0;
};

struct StepResult {
    std::vector<Observation> observations;
    std::vector<double> rewards;
    std::vector<double> selected_capacity_bps;  // C_i on the selected channel
    bool done = false;
    std::vector<AgentStepInfo> info;
};

struct WorldState {
    MobilityState mobility;
    FadingState fading;
    GainSnapshot gains;
    std::vector<double> remaining_bits;
    int remaining_ttis = 0;
    std::vector<Action> prev_actions;
    int tti = 0;
    bool done = false;
};

// Linear transmit power in mW; the off level is exactly zero.
double power_mw(int power_level, const EnvConfig& cfg);

// Total received power per (receiver, channel) in linear mW:
// own signal on the selected channel, cross interference from every
// transmitter occupying the channel, plus the noise floor. Sensing covers
// every channel, not only the selected one.
Eigen::MatrixXd compute_rssi(const GainSnapshot& gains, const std::vector<Action>& actions,
                             const EnvConfig& cfg);

// Aggregate own received power over subcarriers for agent i at its chosen
// power level (channel-independent; appears in RSSI only on the selection).
double own_signal_mw(const GainSnapshot& gains, const Action& action, int agent,
                     const EnvConfig& cfg);

// xi = S / (rssi - S), identical to S / (I + sigma^2). Throws
// std::domain_error when S >= rssi with S > 0 (a bookkeeping bug upstream).
double sinr_from_rssi(double rssi_linear, double own_signal_linear);

// Shannon rate over the aggregate channel bandwidth.
double capacity_bps(double sinr, const EnvConfig& cfg);

// Normalized-rate branch while the payload was unfinished at TTI start,
// constant completion reward eta afterwards.
double reward(double delivered_normalized, double remaining_payload_bits, int agent,
              const EnvConfig& cfg);

class Env {
  public:
    explicit Env(EnvConfig cfg);

    // Fresh placement, fading, and payloads; previous action is the null
    // (channel 0, off) convention and initial RSSI is the noise floor.
    std::vector<Observation> reset(uint64_t seed);

    // One TTI: mobility, fading, gains, transmission, payload accounting,
    // rewards, next observations. Throws std::logic_error once done.
    StepResult step(const std::vector<Action>& actions);

    const WorldState& world() const { return world_; }
    const EnvConfig& config() const { return cfg_; }

  private:
    std::vector<Observation> make_observations(const Eigen::MatrixXd& rssi_mw) const;

    EnvConfig cfg_;
    WorldState world_;
    Rng rng_mob_{1};
    Rng rng_fade_{1};
};

}  // namespace subnet
