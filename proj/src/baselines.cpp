#include "subnet/baselines.hpp"

#include <cmath>

#include "subnet/util.hpp"

namespace subnet {

Action RandomPolicy::act(int, const Observation&, const EnvConfig& cfg, Rng& rng) {
    return Action::from_flat(rng.uniform_int(cfg.action_count()), cfg);
}

Action DgaPolicy::act(int, const Observation& obs, const EnvConfig& cfg, Rng&) {
    int best = 0;
    for (int m = 1; m < cfg.n_channels; ++m)
        if (obs.rssi_dbm(m) < obs.rssi_dbm(best)) best = m;
    int strongest = 0;
    for (int k = 1; k < cfg.beta(); ++k)
        if (cfg.tx_power_levels_dbm[static_cast<size_t>(k)] >
            cfg.tx_power_levels_dbm[static_cast<size_t>(strongest)])
            strongest = k;
    return Action{best, strongest};
}

IndependentCritic::IndependentCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg,
                                     uint64_t seed)
    : ecfg_(ecfg) {
    Rng rng{Rng(seed).derive("independent")};
    const int in = ecfg.obs_dim() + ecfg.action_count();
    nets_.reserve(static_cast<size_t>(ecfg.n_subnetworks));
    for (int i = 0; i < ecfg.n_subnetworks; ++i)
        nets_.emplace_back(store_, "q" + std::to_string(i),
                           std::vector<int>{in, tcfg.enc_hidden, tcfg.enc_out, 1}, rng);
}

void IndependentCritic::begin(nn::Tape& t, const BatchHist& hist, Rng&, bool) {
    cur_.clear();
    for (const auto& frames : hist) cur_.push_back(t.constant(frames.back()));
}

nn::Ref IndependentCritic::q_all(nn::Tape& t, int agent, const std::vector<std::vector<int>>&) {
    const auto& obs = cur_[static_cast<size_t>(agent)];
    const auto B = obs->value.rows();
    const int A = ecfg_.action_count();
    std::vector<nn::Ref> cols;
    cols.reserve(static_cast<size_t>(A));
    for (int a = 0; a < A; ++a) {
        Eigen::MatrixXd oh = Eigen::MatrixXd::Zero(B, A);
        oh.col(a).setOnes();
        auto in = t.concat_cols({obs, t.constant(std::move(oh))});
        cols.push_back(nets_[static_cast<size_t>(agent)].forward(t, in));
    }
    return t.concat_cols(cols);
}

MaddpgCritic::MaddpgCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg, uint64_t seed)
    : ecfg_(ecfg) {
    Rng rng{Rng(seed).derive("maddpg")};
    input_dim_ = ecfg.n_subnetworks * (ecfg.obs_dim() + ecfg.action_count());
    nets_.reserve(static_cast<size_t>(ecfg.n_subnetworks));
    for (int i = 0; i < ecfg.n_subnetworks; ++i)
        nets_.emplace_back(store_, "q" + std::to_string(i),
                           std::vector<int>{input_dim_, tcfg.enc_hidden, tcfg.enc_out, 1}, rng);
}

void MaddpgCritic::begin(nn::Tape& t, const BatchHist& hist, Rng&, bool) {
    cur_.clear();
    for (const auto& frames : hist) cur_.push_back(t.constant(frames.back()));
    batch_rows_ = static_cast<int>(cur_.front()->value.rows());
}

nn::Ref MaddpgCritic::forward_one(nn::Tape& t, int agent,
                                  const std::vector<nn::Ref>& action_blocks) {
    std::vector<nn::Ref> parts = cur_;
    parts.insert(parts.end(), action_blocks.begin(), action_blocks.end());
    return nets_[static_cast<size_t>(agent)].forward(t, t.concat_cols(parts));
}

nn::Ref MaddpgCritic::q_all(nn::Tape& t, int agent,
                            const std::vector<std::vector<int>>& joint_flat) {
    const int n = ecfg_.n_subnetworks;
    const int A = ecfg_.action_count();
    const int B = batch_rows_;

    // The other agents' one-hot blocks are fixed per row across the own-action
    // enumeration.
    std::vector<nn::Ref> blocks(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        if (j == agent) continue;
        Eigen::MatrixXd oh = Eigen::MatrixXd::Zero(B, A);
        for (int r = 0; r < B; ++r) oh(r, joint_flat[static_cast<size_t>(r)][static_cast<size_t>(j)]) = 1.0;
        blocks[static_cast<size_t>(j)] = t.constant(std::move(oh));
    }

    std::vector<nn::Ref> cols;
    cols.reserve(static_cast<size_t>(A));
    for (int a = 0; a < A; ++a) {
        Eigen::MatrixXd oh = Eigen::MatrixXd::Zero(B, A);
        oh.col(a).setOnes();
        blocks[static_cast<size_t>(agent)] = t.constant(std::move(oh));
        cols.push_back(forward_one(t, agent, blocks));
    }
    return t.concat_cols(cols);
}

nn::Ref MaddpgCritic::q_action_node(nn::Tape& t, int agent, const nn::Ref& own_onehot,
                                    const std::vector<std::vector<int>>& joint_flat) {
    const int n = ecfg_.n_subnetworks;
    const int A = ecfg_.action_count();
    const int B = batch_rows_;
    std::vector<nn::Ref> blocks(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        if (j == agent) {
            blocks[static_cast<size_t>(j)] = own_onehot;
            continue;
        }
        Eigen::MatrixXd oh = Eigen::MatrixXd::Zero(B, A);
        for (int r = 0; r < B; ++r) oh(r, joint_flat[static_cast<size_t>(r)][static_cast<size_t>(j)]) = 1.0;
        blocks[static_cast<size_t>(j)] = t.constant(std::move(oh));
    }
    return forward_one(t, agent, blocks);
}

std::unique_ptr<CriticModel> make_critic(const EnvConfig& ecfg, const TrainerConfig& tcfg,
                                         uint64_t seed) {
    const std::string& v = tcfg.variant;
    if (v == "ganet_full" || v == "ganet_no_hard" || v == "ganet_no_attn")
        return std::make_unique<GaNetCritic>(ecfg, tcfg, attention_mode_from_variant(v), seed);
    if (v == "independent_ac") return std::make_unique<IndependentCritic>(ecfg, tcfg, seed);
    if (v == "maddpg") return std::make_unique<MaddpgCritic>(ecfg, tcfg, seed);
    throw ConfigError("unknown trainer variant: " + v);
}

}  // namespace subnet
