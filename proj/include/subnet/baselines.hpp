#pragma once

#include <memory>
#include <vector>

#include "subnet/masac.hpp"

namespace subnet {

// Uniform over the full discrete action space every TTI.
class RandomPolicy : public AgentPolicy {
  public:
    Action act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) override;
};

// Greedy dynamic channel allocation: switch to the channel with the lowest
// sensed RSSI (ties to the lowest index), always at maximum power.
class DgaPolicy : public AgentPolicy {
  public:
    Action act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) override;
};

// Fully scripted policy for constructed scenarios: a fixed action per agent.
class ScriptedPolicy : public AgentPolicy {
  public:
    explicit ScriptedPolicy(std::vector<Action> actions) : actions_(std::move(actions)) {}
    Action act(int agent, const Observation&, const EnvConfig&, Rng&) override {
        return actions_[static_cast<size_t>(agent)];
    }

  private:
    std::vector<Action> actions_;
};

// Routes each agent to its own sub-policy (e.g. managed agents plus a
// scripted interferer). Does not own the sub-policies.
class CompositePolicy : public AgentPolicy {
  public:
    explicit CompositePolicy(std::vector<AgentPolicy*> per_agent) : per_agent_(std::move(per_agent)) {}
    void begin_episode() override {
        for (size_t i = 0; i < per_agent_.size(); ++i) {
            bool seen = false;
            for (size_t j = 0; j < i; ++j) seen = seen || per_agent_[j] == per_agent_[i];
            if (!seen) per_agent_[i]->begin_episode();
        }
    }
    Action act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) override {
        return per_agent_[static_cast<size_t>(agent)]->act(agent, obs, cfg, rng);
    }

  private:
    std::vector<AgentPolicy*> per_agent_;
};

// Per-agent value head over the agent's own current observation and action
// only; no history, no cross-agent inputs.
class IndependentCritic : public CriticModel {
  public:
    IndependentCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg, uint64_t seed);

    void begin(nn::Tape& t, const BatchHist& hist, Rng& rng, bool training) override;
    nn::Ref q_all(nn::Tape& t, int agent,
                  const std::vector<std::vector<int>>& joint_flat) override;
    std::vector<nn::Param*> params() const override { return store_.all(); }

  private:
    EnvConfig ecfg_;
    nn::ParamStore store_;
    std::vector<nn::MLP> nets_;  // per agent: obs + A -> hidden -> hidden2 -> 1
    std::vector<nn::Ref> cur_;   // current-frame observation constants
};

// Centralized MLP critic over the concatenation of every agent's current
// observation and one-hot action; the own action can enter as a
// differentiable node for the relaxed policy pass.
class MaddpgCritic : public CriticModel {
  public:
    MaddpgCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg, uint64_t seed);

    void begin(nn::Tape& t, const BatchHist& hist, Rng& rng, bool training) override;
    nn::Ref q_all(nn::Tape& t, int agent,
                  const std::vector<std::vector<int>>& joint_flat) override;
    nn::Ref q_action_node(nn::Tape& t, int agent, const nn::Ref& own_onehot,
                          const std::vector<std::vector<int>>& joint_flat) override;
    std::vector<nn::Param*> params() const override { return store_.all(); }

    int input_dim() const { return input_dim_; }

  private:
    nn::Ref forward_one(nn::Tape& t, int agent, const std::vector<nn::Ref>& action_blocks);

    EnvConfig ecfg_;
    int input_dim_ = 0;
    nn::ParamStore store_;
    std::vector<nn::MLP> nets_;  // per agent: N*(obs + A) -> hidden -> hidden2 -> 1
    std::vector<nn::Ref> cur_;   // per agent current-frame observation constants
    int batch_rows_ = 0;
};

// Critic for tcfg.variant: ganet_full / ganet_no_hard / ganet_no_attn /
// independent_ac / maddpg. Throws ConfigError on an unknown variant.
std::unique_ptr<CriticModel> make_critic(const EnvConfig& ecfg, const TrainerConfig& tcfg,
                                         uint64_t seed);

}  // namespace subnet
