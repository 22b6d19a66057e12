#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "subnet/checkpoint.hpp"
#include "subnet/config.hpp"
#include "subnet/env.hpp"
#include "subnet/ganet.hpp"
#include "subnet/rng.hpp"

namespace subnet {

// One environment step. window[agent] holds k_hist + 1 network inputs, oldest
// first: the first k_hist frames are the history ending at s, the last k_hist
// frames the history ending at s'. Right after a reset the missing past is
// padded by repeating the first observation.
struct Transition {
    std::vector<std::vector<Eigen::VectorXd>> window;
    std::vector<int> actions;  // flat, per agent
    std::vector<double> rewards;
    bool done = false;
};

// Fixed-capacity ring; once full, new entries overwrite the oldest.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(int capacity);

    void push(Transition tr);
    int size() const { return static_cast<int>(data_.size()); }
    int capacity() const { return capacity_; }
    const Transition& at(int i) const { return data_[static_cast<size_t>(i)]; }

    // Uniform sample of distinct entries; batch must not exceed size().
    std::vector<const Transition*> sample(int batch, Rng& rng) const;

  private:
    int capacity_;
    int next_ = 0;
    std::vector<Transition> data_;
};

// Soft value backup per agent and batch row:
//   y[b] = r[b] + gamma * sum_a pi_bar(b,a) * (q_bar(b,a) - alpha*log pi_bar(b,a))
// with the bootstrap term suppressed on terminal rows unless bootstrap_on_done.
std::vector<Eigen::VectorXd> critic_targets(const std::vector<Eigen::VectorXd>& rewards,
                                            const std::vector<uint8_t>& done,
                                            const std::vector<Eigen::MatrixXd>& q_bar,
                                            const std::vector<Eigen::MatrixXd>& pi_bar,
                                            double alpha, double gamma,
                                            bool bootstrap_on_done);

// b = sum_a pi(a) * q(a); the advantage Q(a~) - b has zero mean under a~ ~ pi.
double counterfactual_baseline(const Eigen::VectorXd& pi, const Eigen::VectorXd& q_row);

// Scalar loss sum_i mean_b [ -log pi_i(a_ib | o_ib) * w_ib ] with fixed
// weights, the gradient surface of the sampled policy objective.
nn::Ref policy_objective(nn::Tape& t, const ActorSet& actors,
                         const std::vector<Eigen::MatrixXd>& obs,
                         const std::vector<std::vector<int>>& joint,
                         const std::vector<Eigen::VectorXd>& weights);

// Decision rule interface for evaluation rollouts.
class AgentPolicy {
  public:
    virtual ~AgentPolicy() = default;
    virtual void begin_episode() {}
    virtual Action act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) = 0;
};

// Trained actors, greedy by default (evaluation), optionally sampling.
class ActorPolicy : public AgentPolicy {
  public:
    explicit ActorPolicy(const ActorSet& actors, bool greedy = true)
        : actors_(actors), greedy_(greedy) {}
    Action act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) override;

  private:
    const ActorSet& actors_;
    bool greedy_;
};

struct EpisodeTrace {
    uint64_t env_seed = 0;
    std::vector<std::vector<int>> channel;         // [tti][agent]
    std::vector<std::vector<int>> power_level;     // [tti][agent]
    std::vector<std::vector<double>> remaining;    // [tti][agent], bits after the TTI
    std::vector<std::vector<double>> rewards;      // [tti][agent]
    std::vector<bool> delivered;                   // per agent
};

struct EvalResult {
    int episodes = 0;
    int n_agents = 0;
    double mean_episode_reward = 0.0;  // per-agent average of summed rewards
    double outage = 0.0;               // undelivered agent-episodes / total
    std::array<double, 2> outage_ci95{0.0, 0.0};
    std::vector<double> per_agent_outage;
    std::vector<double> per_agent_success;
};

// Normal-approximation binomial interval, clamped to [0, 1].
std::array<double, 2> binomial_ci95(int failures, int trials);

EvalResult evaluate_policy(const EnvConfig& cfg, AgentPolicy& policy, int episodes,
                           uint64_t seed, std::vector<EpisodeTrace>* traces = nullptr);

struct PolicyStepDiag {
    double loss = 0.0;
    double entropy = 0.0;  // mean policy entropy over agents and rows
};

struct TrainResult {
    int episodes = 0;
    int transitions = 0;
    int updates = 0;
    double final_critic_loss = 0.0;
    EvalResult final_eval;
};

// Centralized-critic soft actor-critic over the mobile subnetwork game.
// One gradient update per environment step once the replay buffer has
// warmup_transitions entries; Polyak-averaged target networks; variants
// select the critic architecture (GA-Net, ablations, independent, MADDPG).
class Trainer {
  public:
    Trainer(EnvConfig ecfg, TrainerConfig tcfg);

    // out_dir empty: train in memory only. Otherwise writes metrics.jsonl,
    // checkpoint.bin and checkpoint_actor.bin (refreshed at every evaluation
    // point), and abort.json if the run dies. sink also receives every
    // metrics row when provided.
    TrainResult train(const std::string& out_dir = {},
                      const std::function<void(const nlohmann::json&)>& sink = {});

    struct Batch {
        BatchHist hist_s, hist_s2;
        std::vector<Eigen::MatrixXd> obs_s, obs_s2;  // [agent], B x obs_dim
        std::vector<std::vector<int>> actions;       // [row][agent]
        std::vector<Eigen::VectorXd> rewards;        // [agent], length B
        std::vector<uint8_t> done;                   // length B
    };

    // Update machinery, exposed so tests can drive single steps.
    Batch assemble(const std::vector<const Transition*>& sample) const;
    std::vector<Eigen::VectorXd> compute_targets(const Batch& b);
    double update_critic(const Batch& b, const std::vector<Eigen::VectorXd>& y);
    PolicyStepDiag update_policy(const Batch& b);
    void update_target_nets();

    ActorSet& actor_set() { return *actors_; }
    CriticModel& critic_model() { return *critic_; }
    CriticModel& target_critic_model() { return *critic_target_; }
    ActorSet& target_actor_set() { return *actors_target_; }
    ReplayBuffer& buffer() { return buffer_; }
    const TrainerConfig& trainer_config() const { return tcfg_; }

    Checkpoint make_checkpoint(CheckpointKind kind) const;

  private:
    void check_finite(double v, const char* what) const;

    EnvConfig ecfg_;
    TrainerConfig tcfg_;
    bool maddpg_ = false;

    std::unique_ptr<CriticModel> critic_, critic_target_;
    std::unique_ptr<ActorSet> actors_, actors_target_;
    std::unique_ptr<nn::Adam> critic_opt_, actor_opt_;
    ReplayBuffer buffer_;

    Rng rng_env_seeds_, rng_explore_, rng_replay_, rng_gumbel_, rng_target_, rng_policy_;

    int updates_ = 0;
    int episode_ = 0;
    double last_critic_loss_ = 0.0;
    double last_actor_loss_ = 0.0;
    double last_entropy_ = 0.0;
};

// Greedy rollout of a stored policy. Throws ConfigError when the checkpoint
// was trained against a different environment fingerprint.
EvalResult execute_checkpoint(const std::string& path, const EnvConfig& cfg, int episodes,
                              uint64_t seed, std::vector<EpisodeTrace>* traces = nullptr);

}  // namespace subnet
