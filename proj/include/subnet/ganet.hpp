#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subnet/config.hpp"
#include "subnet/env.hpp"
#include "subnet/nn.hpp"
#include "subnet/rng.hpp"

namespace subnet {

enum class AttentionMode {
    full,     // learned hard mask gating multi-head soft attention
    no_hard,  // every neighbor admitted, soft attention intact
    no_attn,  // unweighted mean of the neighbors' value projections
};

// [agent][k] = B x obs_dim input rows, k ascending in time; back() is the
// current observation. Shorter histories are padded by repeating the oldest
// entry before they reach this layer.
using BatchHist = std::vector<std::vector<Eigen::MatrixXd>>;

// Single-joint-state snapshot of the attention structure (evaluation mode).
struct AttentionGraph {
    Eigen::MatrixXd hard_mask;                  // N x N in {0,1}, zero diagonal
    std::vector<Eigen::MatrixXd> soft_weights;  // per head, N x N, zero diagonal
};

// Critic interface shared by every trainable variant: a per-batch trunk pass
// followed by per-agent Q rows enumerated over the agent's own actions, the
// other agents' actions pinned per row.
class CriticModel {
  public:
    virtual ~CriticModel() = default;

    // Runs the shared per-batch computation on the tape; must precede q_all.
    virtual void begin(nn::Tape& t, const BatchHist& hist, Rng& rng, bool training) = 0;

    // B x A: column a is Q_i with agent i playing flat action a and agent
    // j != i playing joint_flat[row][j].
    virtual nn::Ref q_all(nn::Tape& t, int agent,
                          const std::vector<std::vector<int>>& joint_flat) = 0;

    // Q with the agent's own one-hot action supplied as a differentiable
    // node (B x A). Only critics with action-input gradients support it.
    virtual nn::Ref q_action_node(nn::Tape& t, int agent, const nn::Ref& own_onehot,
                                  const std::vector<std::vector<int>>& joint_flat);

    virtual std::vector<nn::Param*> params() const = 0;
};

// Centralized critic: shared observation encoder and history GRU produce one
// temporal code per agent; a BiGRU scores each (i, j) pair into a sampled
// binary mask (straight-through Gumbel); masked multi-head scaled dot-product
// attention over the neighbors' codes yields the contribution vector that the
// per-agent value heads consume together with the agent's own state/action
// embedding.
class GaNetCritic : public CriticModel {
  public:
    GaNetCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg, AttentionMode mode,
                uint64_t seed);

    struct Trunk {
        std::vector<nn::Ref> s_cur;                // per agent, B x enc_out
        std::vector<nn::Ref> e;                    // per agent, B x gru_hidden
        std::vector<nn::Ref> h_hat;                // per agent, B x heads*head_dim
        std::vector<std::vector<nn::Ref>> mask;    // [i][p], B x 1, p over j != i asc
        std::vector<std::vector<nn::Ref>> logits;  // [i][p], B x 2 pre-sampling scores
        std::vector<std::vector<nn::Ref>> soft_w;  // [head][i], B x (N-1)
    };

    // forced_mask (N x N, row i read at columns j != i) replaces the sampled
    // hard mask; used by structural tests and ablation probes.
    Trunk forward_trunk(nn::Tape& t, const BatchHist& hist, Rng& rng, bool sample_hard,
                        const Eigen::MatrixXd* forced_mask = nullptr) const;
    nn::Ref q_all_actions(nn::Tape& t, const Trunk& tr, int agent) const;

    // CriticModel: joint actions are irrelevant to this architecture (other
    // agents enter through their observation histories only).
    void begin(nn::Tape& t, const BatchHist& hist, Rng& rng, bool training) override;
    nn::Ref q_all(nn::Tape& t, int agent,
                  const std::vector<std::vector<int>>& joint_flat) override;
    std::vector<nn::Param*> params() const override { return store_.all(); }

    // Building blocks, exposed for direct probing.
    nn::Ref encode_observation(nn::Tape& t, const nn::Ref& obs) const;
    nn::Ref fuse_history(nn::Tape& t, const std::vector<nn::Ref>& codes) const;

    // Single-joint-state helpers (batch of one, gradients off).
    AttentionGraph attention_eval(const BatchHist& hist, Rng& rng, bool sample) const;
    Eigen::MatrixXd h_hat_eval(const BatchHist& hist, Rng& rng, bool sample,
                               const Eigen::MatrixXd* forced_mask = nullptr) const;
    // Q over agent i's own actions at one joint state.
    Eigen::VectorXd q_eval(const BatchHist& hist, int agent, Rng& rng) const;

    AttentionMode mode() const { return mode_; }
    const EnvConfig& env_config() const { return ecfg_; }
    const TrainerConfig& trainer_config() const { return tcfg_; }

  private:
    EnvConfig ecfg_;
    TrainerConfig tcfg_;
    AttentionMode mode_;

    nn::ParamStore store_;
    nn::MLP encoder_;       // obs_dim -> enc_hidden -> enc_out, ReLU output
    nn::GRUCell hist_gru_;  // enc_out -> gru_hidden
    nn::GRUCell pair_fwd_, pair_bwd_;  // 2*gru_hidden -> hard_hidden each way
    nn::Linear pair_fc_;    // 2*hard_hidden -> 2 (keep / drop logits)
    std::vector<nn::Param*> wq_, wk_, wv_;  // per head
    std::vector<nn::MLP> f_;  // per agent, (enc_out + A) -> 64 -> 32, ReLU output
    std::vector<nn::MLP> h_;  // per agent, (32 + heads*head_dim) -> 64 -> 32 -> 1

    Trunk trunk_;  // populated by begin(), consumed by q_all()
};

// Decentralized actors: one feedforward policy head per agent over the local
// observation only.
class ActorSet {
  public:
    ActorSet(const EnvConfig& ecfg, const TrainerConfig& tcfg, uint64_t seed);

    nn::Ref logits(nn::Tape& t, int agent, const nn::Ref& obs) const;
    Eigen::VectorXd probs_eval(int agent, const Eigen::VectorXd& obs_input) const;
    Action act_sample(int agent, const Eigen::VectorXd& obs_input, Rng& rng) const;
    Action act_greedy(int agent, const Eigen::VectorXd& obs_input) const;

    std::vector<nn::Param*> params() const { return store_.all(); }
    const EnvConfig& env_config() const { return ecfg_; }

  private:
    EnvConfig ecfg_;
    nn::ParamStore store_;
    std::vector<nn::MLP> nets_;
};

AttentionMode attention_mode_from_variant(const std::string& variant);

}  // namespace subnet
