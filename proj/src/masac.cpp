#include "subnet/masac.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "subnet/baselines.hpp"
#include "subnet/util.hpp"

namespace subnet {

namespace {

Eigen::MatrixXd softmax_rows_value(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    return out;
}

double mean_entropy(const std::vector<Eigen::MatrixXd>& probs) {
    double acc = 0.0;
    long rows = 0;
    for (const auto& p : probs) {
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            for (Eigen::Index c = 0; c < p.cols(); ++c)
                if (p(r, c) > 0.0) acc -= p(r, c) * std::log(p(r, c));
        rows += p.rows();
    }
    return rows > 0 ? acc / double(rows) : 0.0;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity <= 0) throw ConfigError("replay capacity must be positive");
    data_.reserve(static_cast<size_t>(std::min(capacity, 1 << 16)));
}

void ReplayBuffer::push(Transition tr) {
    if (size() < capacity_) {
        data_.push_back(std::move(tr));
    } else {
        data_[static_cast<size_t>(next_)] = std::move(tr);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(int batch, Rng& rng) const {
    if (batch > size()) throw std::logic_error("replay sample larger than buffer");
    // Partial Fisher-Yates over an index array: each distinct subset is
    // equally likely and the draw count is fixed at `batch`.
    std::vector<int> idx(static_cast<size_t>(size()));
    for (int i = 0; i < size(); ++i) idx[static_cast<size_t>(i)] = i;
    std::vector<const Transition*> out;
    out.reserve(static_cast<size_t>(batch));
    for (int k = 0; k < batch; ++k) {
        const int j = k + rng.uniform_int(size() - k);
        std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(j)]);
        out.push_back(&data_[static_cast<size_t>(idx[static_cast<size_t>(k)])]);
    }
    return out;
}

std::vector<Eigen::VectorXd> critic_targets(const std::vector<Eigen::VectorXd>& rewards,
                                            const std::vector<uint8_t>& done,
                                            const std::vector<Eigen::MatrixXd>& q_bar,
                                            const std::vector<Eigen::MatrixXd>& pi_bar,
                                            double alpha, double gamma,
                                            bool bootstrap_on_done) {
    const size_t n = rewards.size();
    std::vector<Eigen::VectorXd> y(n);
    for (size_t i = 0; i < n; ++i) {
        const auto B = rewards[i].size();
        y[i].resize(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            double v = 0.0;
            if (!done[static_cast<size_t>(b)] || bootstrap_on_done) {
                for (Eigen::Index a = 0; a < pi_bar[i].cols(); ++a) {
                    const double p = pi_bar[i](b, a);
                    if (p > 0.0) v += p * (q_bar[i](b, a) - alpha * std::log(p));
                }
            }
            y[i](b) = rewards[i](b) + gamma * v;
        }
    }
    return y;
}

double counterfactual_baseline(const Eigen::VectorXd& pi, const Eigen::VectorXd& q_row) {
    return pi.dot(q_row);
}

nn::Ref policy_objective(nn::Tape& t, const ActorSet& actors,
                         const std::vector<Eigen::MatrixXd>& obs,
                         const std::vector<std::vector<int>>& joint,
                         const std::vector<Eigen::VectorXd>& weights) {
    const size_t n = obs.size();
    nn::Ref loss;
    for (size_t i = 0; i < n; ++i) {
        const auto B = obs[i].rows();
        std::vector<int> own(static_cast<size_t>(B));
        for (Eigen::Index b = 0; b < B; ++b) own[static_cast<size_t>(b)] = joint[static_cast<size_t>(b)][i];
        auto lg = actors.logits(t, static_cast<int>(i), t.constant(obs[i]));
        auto lp = t.gather_cols(t.log_softmax_rows(lg), own);
        auto li = t.mean_all(t.mul(lp, t.constant(-weights[i])));
        loss = loss ? t.add(loss, li) : li;
    }
    return loss;
}

Action ActorPolicy::act(int agent, const Observation& obs, const EnvConfig& cfg, Rng& rng) {
    const Eigen::VectorXd input = obs.to_input(cfg);
    return greedy_ ? actors_.act_greedy(agent, input) : actors_.act_sample(agent, input, rng);
}

std::array<double, 2> binomial_ci95(int failures, int trials) {
    if (trials <= 0) return {0.0, 0.0};
    const double p = double(failures) / double(trials);
    const double half = 1.959963984540054 * std::sqrt(p * (1.0 - p) / double(trials));
    return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

EvalResult evaluate_policy(const EnvConfig& cfg, AgentPolicy& policy, int episodes,
                           uint64_t seed, std::vector<EpisodeTrace>* traces) {
    const int n = cfg.n_subnetworks;
    Rng root(seed);
    Rng seed_stream = root.derive("episodes");
    Rng policy_rng = root.derive("policy");

    Env env(cfg);
    EvalResult res;
    res.episodes = episodes;
    res.n_agents = n;
    std::vector<int> failures(static_cast<size_t>(n), 0);
    double reward_acc = 0.0;

    for (int ep = 0; ep < episodes; ++ep) {
        const uint64_t ep_seed = seed_stream.next_u64();
        auto obs = env.reset(ep_seed);
        policy.begin_episode();

        EpisodeTrace trace;
        trace.env_seed = ep_seed;
        std::vector<double> ep_reward(static_cast<size_t>(n), 0.0);

        bool done = false;
        while (!done) {
            std::vector<Action> actions(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i)
                actions[static_cast<size_t>(i)] = policy.act(i, obs[static_cast<size_t>(i)], cfg, policy_rng);
            auto sr = env.step(actions);
            for (int i = 0; i < n; ++i) ep_reward[static_cast<size_t>(i)] += sr.rewards[static_cast<size_t>(i)];
            if (traces) {
                std::vector<int> ch(static_cast<size_t>(n)), pw(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) {
                    ch[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].channel;
                    pw[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].power_level;
                }
                trace.channel.push_back(std::move(ch));
                trace.power_level.push_back(std::move(pw));
                trace.remaining.push_back(env.world().remaining_bits);
                trace.rewards.push_back(sr.rewards);
            }
            obs = sr.observations;
            done = sr.done;
        }

        for (int i = 0; i < n; ++i) {
            const bool delivered = env.world().remaining_bits[static_cast<size_t>(i)] <= 0.0;
            if (!delivered) ++failures[static_cast<size_t>(i)];
            if (traces) trace.delivered.push_back(delivered);
            reward_acc += ep_reward[static_cast<size_t>(i)] / double(n);
        }
        if (traces) traces->push_back(std::move(trace));
    }

    int total_failures = 0;
    res.per_agent_outage.resize(static_cast<size_t>(n));
    res.per_agent_success.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        total_failures += failures[static_cast<size_t>(i)];
        res.per_agent_outage[static_cast<size_t>(i)] = episodes > 0 ? double(failures[static_cast<size_t>(i)]) / episodes : 0.0;
        res.per_agent_success[static_cast<size_t>(i)] = 1.0 - res.per_agent_outage[static_cast<size_t>(i)];
    }
    const int trials = n * episodes;
    res.outage = trials > 0 ? double(total_failures) / trials : 0.0;
    res.outage_ci95 = binomial_ci95(total_failures, trials);
    res.mean_episode_reward = episodes > 0 ? reward_acc / episodes : 0.0;
    return res;
}

Trainer::Trainer(EnvConfig ecfg, TrainerConfig tcfg)
    : ecfg_(std::move(ecfg)),
      tcfg_(std::move(tcfg)),
      buffer_(tcfg_.buffer_capacity),
      rng_env_seeds_(Rng(tcfg_.seed).derive("env_seeds")),
      rng_explore_(Rng(tcfg_.seed).derive("explore")),
      rng_replay_(Rng(tcfg_.seed).derive("replay")),
      rng_gumbel_(Rng(tcfg_.seed).derive("gumbel")),
      rng_target_(Rng(tcfg_.seed).derive("target")),
      rng_policy_(Rng(tcfg_.seed).derive("policy")) {
    ecfg_.validate();
    tcfg_.validate();
    maddpg_ = tcfg_.variant == "maddpg";

    const uint64_t critic_seed = Rng(tcfg_.seed).derive("critic_init").next_u64();
    const uint64_t actor_seed = Rng(tcfg_.seed).derive("actor_init").next_u64();
    critic_ = make_critic(ecfg_, tcfg_, critic_seed);
    critic_target_ = make_critic(ecfg_, tcfg_, critic_seed);
    actors_ = std::make_unique<ActorSet>(ecfg_, tcfg_, actor_seed);
    actors_target_ = std::make_unique<ActorSet>(ecfg_, tcfg_, actor_seed);
    nn::copy_params(critic_target_->params(), critic_->params());
    nn::copy_params(actors_target_->params(), actors_->params());

    critic_opt_ = std::make_unique<nn::Adam>(critic_->params(), tcfg_.lr_critic);
    actor_opt_ = std::make_unique<nn::Adam>(actors_->params(), tcfg_.lr_actor);
}

Trainer::Batch Trainer::assemble(const std::vector<const Transition*>& sample) const {
    const int B = static_cast<int>(sample.size());
    const int n = ecfg_.n_subnetworks;
    const int K = tcfg_.k_hist;
    const int D = ecfg_.obs_dim();

    Batch b;
    b.hist_s.assign(static_cast<size_t>(n), {});
    b.hist_s2.assign(static_cast<size_t>(n), {});
    b.obs_s.resize(static_cast<size_t>(n));
    b.obs_s2.resize(static_cast<size_t>(n));
    b.rewards.assign(static_cast<size_t>(n), Eigen::VectorXd(B));
    b.done.resize(static_cast<size_t>(B));
    b.actions.resize(static_cast<size_t>(B));

    for (int i = 0; i < n; ++i) {
        b.hist_s[static_cast<size_t>(i)].assign(static_cast<size_t>(K), Eigen::MatrixXd(B, D));
        b.hist_s2[static_cast<size_t>(i)].assign(static_cast<size_t>(K), Eigen::MatrixXd(B, D));
    }
    for (int r = 0; r < B; ++r) {
        const Transition& tr = *sample[static_cast<size_t>(r)];
        for (int i = 0; i < n; ++i) {
            const auto& win = tr.window[static_cast<size_t>(i)];
            for (int k = 0; k < K; ++k) {
                b.hist_s[static_cast<size_t>(i)][static_cast<size_t>(k)].row(r) = win[static_cast<size_t>(k)].transpose();
                b.hist_s2[static_cast<size_t>(i)][static_cast<size_t>(k)].row(r) = win[static_cast<size_t>(k) + 1].transpose();
            }
            b.rewards[static_cast<size_t>(i)](r) = tr.rewards[static_cast<size_t>(i)];
        }
        b.actions[static_cast<size_t>(r)] = tr.actions;
        b.done[static_cast<size_t>(r)] = tr.done ? 1 : 0;
    }
    for (int i = 0; i < n; ++i) {
        b.obs_s[static_cast<size_t>(i)] = b.hist_s[static_cast<size_t>(i)].back();
        b.obs_s2[static_cast<size_t>(i)] = b.hist_s2[static_cast<size_t>(i)].back();
    }
    return b;
}

std::vector<Eigen::VectorXd> Trainer::compute_targets(const Batch& b) {
    const int n = ecfg_.n_subnetworks;
    const int B = static_cast<int>(b.done.size());
    const int A = ecfg_.action_count();

    // Target policies at the next observation.
    std::vector<Eigen::MatrixXd> pi_bar(static_cast<size_t>(n));
    {
        nn::Tape t(false);
        for (int i = 0; i < n; ++i) {
            auto lg = actors_target_->logits(t, i, t.constant(b.obs_s2[static_cast<size_t>(i)]));
            pi_bar[static_cast<size_t>(i)] = softmax_rows_value(lg->value);
        }
    }

    // One joint action per row from the target policies. GA-Net style critics
    // ignore it; the MADDPG-lite variant pins the others' next actions to the
    // target policies' greedy choices instead.
    std::vector<std::vector<int>> joint(static_cast<size_t>(B), std::vector<int>(static_cast<size_t>(n)));
    std::vector<double> p(static_cast<size_t>(A));
    for (int r = 0; r < B; ++r) {
        for (int i = 0; i < n; ++i) {
            if (maddpg_) {
                Eigen::Index best = 0;
                pi_bar[static_cast<size_t>(i)].row(r).maxCoeff(&best);
                joint[static_cast<size_t>(r)][static_cast<size_t>(i)] = static_cast<int>(best);
            } else {
                for (int a = 0; a < A; ++a) p[static_cast<size_t>(a)] = pi_bar[static_cast<size_t>(i)](r, a);
                joint[static_cast<size_t>(r)][static_cast<size_t>(i)] = rng_target_.categorical(p);
            }
        }
    }

    std::vector<Eigen::MatrixXd> q_bar(static_cast<size_t>(n));
    {
        nn::Tape t(false);
        critic_target_->begin(t, b.hist_s2, rng_gumbel_, true);
        for (int i = 0; i < n; ++i)
            q_bar[static_cast<size_t>(i)] = critic_target_->q_all(t, i, joint)->value;
    }

    if (maddpg_) {
        // Deterministic target action, no entropy term.
        std::vector<Eigen::VectorXd> y(static_cast<size_t>(n), Eigen::VectorXd(B));
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < B; ++r) {
                const bool gate = !b.done[static_cast<size_t>(r)] || tcfg_.bootstrap_on_done;
                const double v = gate ? q_bar[static_cast<size_t>(i)](r, joint[static_cast<size_t>(r)][static_cast<size_t>(i)]) : 0.0;
                y[static_cast<size_t>(i)](r) = b.rewards[static_cast<size_t>(i)](r) + tcfg_.gamma * v;
            }
        return y;
    }

    if (tcfg_.exact_expectation)
        return critic_targets(b.rewards, b.done, q_bar, pi_bar, tcfg_.alpha, tcfg_.gamma,
                              tcfg_.bootstrap_on_done);

    // Single-sample soft backup using the row's own sampled action.
    std::vector<Eigen::VectorXd> y(static_cast<size_t>(n), Eigen::VectorXd(B));
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < B; ++r) {
            const int a = joint[static_cast<size_t>(r)][static_cast<size_t>(i)];
            const bool gate = !b.done[static_cast<size_t>(r)] || tcfg_.bootstrap_on_done;
            const double v = gate ? q_bar[static_cast<size_t>(i)](r, a) -
                                        tcfg_.alpha * std::log(pi_bar[static_cast<size_t>(i)](r, a))
                                  : 0.0;
            y[static_cast<size_t>(i)](r) = b.rewards[static_cast<size_t>(i)](r) + tcfg_.gamma * v;
        }
    return y;
}

double Trainer::update_critic(const Batch& b, const std::vector<Eigen::VectorXd>& y) {
    const int n = ecfg_.n_subnetworks;
    const int B = static_cast<int>(b.done.size());

    nn::Tape t(true);
    critic_->begin(t, b.hist_s, rng_gumbel_, true);
    nn::Ref loss;
    for (int i = 0; i < n; ++i) {
        auto q = critic_->q_all(t, i, b.actions);
        std::vector<int> own(static_cast<size_t>(B));
        for (int r = 0; r < B; ++r) own[static_cast<size_t>(r)] = b.actions[static_cast<size_t>(r)][static_cast<size_t>(i)];
        auto res = t.sub(t.gather_cols(q, own), t.constant(y[static_cast<size_t>(i)]));
        auto li = t.mean_all(t.mul(res, res));
        loss = loss ? t.add(loss, li) : li;
    }
    critic_opt_->zero_grad();
    t.backward(loss);
    t.accumulate_param_grads();
    const double v = loss->value(0, 0);
    check_finite(v, "critic loss");
    critic_opt_->step();
    last_critic_loss_ = v;
    return v;
}

PolicyStepDiag Trainer::update_policy(const Batch& b) {
    const int n = ecfg_.n_subnetworks;
    const int B = static_cast<int>(b.done.size());
    const int A = ecfg_.action_count();

    // Current policies at s (fixed for this step).
    std::vector<Eigen::MatrixXd> pi(static_cast<size_t>(n));
    {
        nn::Tape t(false);
        for (int i = 0; i < n; ++i) {
            auto lg = actors_->logits(t, i, t.constant(b.obs_s[static_cast<size_t>(i)]));
            pi[static_cast<size_t>(i)] = softmax_rows_value(lg->value);
        }
    }
    const double entropy = mean_entropy(pi);

    PolicyStepDiag diag;
    diag.entropy = entropy;

    if (maddpg_) {
        // Deterministic-policy gradient through the Gumbel relaxation of the
        // own action; the other agents' actions come from the batch.
        nn::Tape t(true);
        critic_->begin(t, b.hist_s, rng_gumbel_, true);
        nn::Ref loss;
        for (int i = 0; i < n; ++i) {
            auto lg = actors_->logits(t, i, t.constant(b.obs_s[static_cast<size_t>(i)]));
            auto oh = nn::gumbel_softmax_st(t, lg, tcfg_.gumbel_temperature, rng_gumbel_, true);
            auto q = critic_->q_action_node(t, i, oh, b.actions);
            auto li = t.scale(t.mean_all(q), -1.0);
            loss = loss ? t.add(loss, li) : li;
        }
        actor_opt_->zero_grad();
        critic_opt_->zero_grad();
        t.backward(loss);
        t.accumulate_param_grads();
        const double v = loss->value(0, 0);
        check_finite(v, "actor loss");
        actor_opt_->step();
        last_actor_loss_ = v;
        last_entropy_ = entropy;
        diag.loss = v;
        return diag;
    }

    // Fresh joint sample from the current policies.
    std::vector<std::vector<int>> joint(static_cast<size_t>(B), std::vector<int>(static_cast<size_t>(n)));
    std::vector<double> p(static_cast<size_t>(A));
    for (int r = 0; r < B; ++r)
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < A; ++a) p[static_cast<size_t>(a)] = pi[static_cast<size_t>(i)](r, a);
            joint[static_cast<size_t>(r)][static_cast<size_t>(i)] = rng_policy_.categorical(p);
        }

    // Q rows at s for the sampled joint action (no gradients).
    std::vector<Eigen::MatrixXd> q_rows(static_cast<size_t>(n));
    {
        nn::Tape t(false);
        critic_->begin(t, b.hist_s, rng_gumbel_, true);
        for (int i = 0; i < n; ++i) q_rows[static_cast<size_t>(i)] = critic_->q_all(t, i, joint)->value;
    }

    // Advantage against the exact counterfactual baseline, minus the entropy
    // temperature term, all treated as constants by the actor tape.
    std::vector<Eigen::VectorXd> w(static_cast<size_t>(n), Eigen::VectorXd(B));
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < B; ++r) {
            const int a = joint[static_cast<size_t>(r)][static_cast<size_t>(i)];
            const double base = counterfactual_baseline(pi[static_cast<size_t>(i)].row(r).transpose(),
                                                        q_rows[static_cast<size_t>(i)].row(r).transpose());
            w[static_cast<size_t>(i)](r) = q_rows[static_cast<size_t>(i)](r, a) - base -
                                           tcfg_.alpha * std::log(pi[static_cast<size_t>(i)](r, a));
        }

    nn::Tape t(true);
    auto loss = policy_objective(t, *actors_, b.obs_s, joint, w);
    actor_opt_->zero_grad();
    t.backward(loss);
    t.accumulate_param_grads();
    const double v = loss->value(0, 0);
    check_finite(v, "actor loss");
    actor_opt_->step();
    last_actor_loss_ = v;
    last_entropy_ = entropy;
    diag.loss = v;
    return diag;
}

void Trainer::update_target_nets() {
    nn::soft_update(critic_target_->params(), critic_->params(), tcfg_.tau);
    nn::soft_update(actors_target_->params(), actors_->params(), tcfg_.tau);
}

void Trainer::check_finite(double v, const char* what) const {
    if (!std::isfinite(v))
        throw RunAbort(std::string("non-finite ") + what + " at update " +
                       std::to_string(updates_) + ", episode " + std::to_string(episode_));
}

Checkpoint Trainer::make_checkpoint(CheckpointKind kind) const {
    Checkpoint ck;
    ck.kind = kind;
    ck.env_fingerprint = env_fingerprint(ecfg_);
    ck.meta = {{"env", env_config_to_json(ecfg_)}, {"trainer", trainer_config_to_json(tcfg_)}};
    ck.append("actor/", actors_->params());
    if (kind == CheckpointKind::full) ck.append("critic/", critic_->params());
    return ck;
}

TrainResult Trainer::train(const std::string& out_dir,
                           const std::function<void(const nlohmann::json&)>& sink) {
    namespace fs = std::filesystem;
    std::ofstream metrics;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        metrics.open(fs::path(out_dir) / "metrics.jsonl", std::ios::trunc);
        if (!metrics) throw RunAbort("cannot write metrics under " + out_dir);
    }
    auto emit = [&](const nlohmann::json& row) {
        if (metrics.is_open()) metrics << row.dump() << "\n";
        if (sink) sink(row);
    };
    auto save_checkpoints = [&]() {
        if (out_dir.empty()) return;
        save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(),
                        make_checkpoint(CheckpointKind::full));
        save_checkpoint((fs::path(out_dir) / "checkpoint_actor.bin").string(),
                        make_checkpoint(CheckpointKind::actor_only));
    };

    const int n = ecfg_.n_subnetworks;
    const int K = tcfg_.k_hist;
    const uint64_t eval_seed = Rng(tcfg_.seed).derive("eval").next_u64();
    Env env(ecfg_);
    TrainResult result;

    try {
        for (episode_ = 0; episode_ < tcfg_.episodes; ++episode_) {
            const uint64_t ep_seed = rng_env_seeds_.next_u64();
            auto obs = env.reset(ep_seed);

            // History windows start saturated with the reset observation.
            std::vector<std::vector<Eigen::VectorXd>> win(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i)
                win[static_cast<size_t>(i)].assign(static_cast<size_t>(K), obs[static_cast<size_t>(i)].to_input(ecfg_));

            std::vector<double> ep_reward(static_cast<size_t>(n), 0.0);
            int steps = 0;
            bool done = false;
            while (!done) {
                std::vector<Action> actions(static_cast<size_t>(n));
                std::vector<int> flat(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) {
                    actions[static_cast<size_t>(i)] =
                        actors_->act_sample(i, win[static_cast<size_t>(i)].back(), rng_explore_);
                    flat[static_cast<size_t>(i)] = actions[static_cast<size_t>(i)].flat(ecfg_);
                }
                auto sr = env.step(actions);

                Transition tr;
                tr.window.resize(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) {
                    tr.window[static_cast<size_t>(i)] = win[static_cast<size_t>(i)];
                    tr.window[static_cast<size_t>(i)].push_back(
                        sr.observations[static_cast<size_t>(i)].to_input(ecfg_));
                }
                tr.actions = flat;
                tr.rewards = sr.rewards;
                tr.done = sr.done;
                buffer_.push(std::move(tr));
                ++result.transitions;

                for (int i = 0; i < n; ++i) {
                    ep_reward[static_cast<size_t>(i)] += sr.rewards[static_cast<size_t>(i)];
                    win[static_cast<size_t>(i)].erase(win[static_cast<size_t>(i)].begin());
                    win[static_cast<size_t>(i)].push_back(
                        sr.observations[static_cast<size_t>(i)].to_input(ecfg_));
                }

                if (buffer_.size() >= tcfg_.warmup_transitions &&
                    buffer_.size() >= tcfg_.batch_size) {
                    for (int u = 0; u < tcfg_.updates_per_step; ++u) {
                        auto batch = assemble(buffer_.sample(tcfg_.batch_size, rng_replay_));
                        auto y = compute_targets(batch);
                        update_critic(batch, y);
                        update_policy(batch);
                        update_target_nets();
                        ++updates_;
                    }
                }
                obs = sr.observations;
                done = sr.done;
                ++steps;
            }

            nlohmann::json delivered = nlohmann::json::array();
            for (int i = 0; i < n; ++i)
                delivered.push_back(env.world().remaining_bits[static_cast<size_t>(i)] <= 0.0 ? 1 : 0);
            double mean_reward = 0.0;
            for (int i = 0; i < n; ++i) mean_reward += ep_reward[static_cast<size_t>(i)] / double(n);
            emit({{"type", "episode"},
                  {"episode", episode_},
                  {"reward", mean_reward},
                  {"ttis", steps},
                  {"delivered", delivered},
                  {"critic_loss", last_critic_loss_},
                  {"actor_loss", last_actor_loss_},
                  {"entropy", last_entropy_},
                  {"buffer", buffer_.size()},
                  {"updates", updates_}});

            const bool eval_point = tcfg_.eval_every > 0 && tcfg_.eval_episodes > 0 &&
                                    (episode_ + 1) % tcfg_.eval_every == 0 &&
                                    episode_ + 1 < tcfg_.episodes;
            if (eval_point) {
                ActorPolicy pol(*actors_, true);
                auto ev = evaluate_policy(ecfg_, pol, tcfg_.eval_episodes, eval_seed);
                emit({{"type", "eval"},
                      {"episode", episode_ + 1},
                      {"mean_reward", ev.mean_episode_reward},
                      {"outage", ev.outage},
                      {"outage_ci95", {ev.outage_ci95[0], ev.outage_ci95[1]}},
                      {"per_agent_outage", ev.per_agent_outage}});
                save_checkpoints();
            }
        }

        if (tcfg_.eval_episodes > 0) {
            ActorPolicy pol(*actors_, true);
            result.final_eval = evaluate_policy(ecfg_, pol, tcfg_.eval_episodes, eval_seed);
            emit({{"type", "eval"},
                  {"episode", tcfg_.episodes},
                  {"mean_reward", result.final_eval.mean_episode_reward},
                  {"outage", result.final_eval.outage},
                  {"outage_ci95", {result.final_eval.outage_ci95[0], result.final_eval.outage_ci95[1]}},
                  {"per_agent_outage", result.final_eval.per_agent_outage}});
        }
        save_checkpoints();
    } catch (const RunAbort& e) {
        if (!out_dir.empty())
            write_text_file(fs::path(out_dir) / "abort.json",
                            nlohmann::json{{"error", e.what()},
                                           {"episode", episode_},
                                           {"updates", updates_},
                                           {"transitions", result.transitions}}
                                .dump(2) +
                                "\n");
        throw;
    }

    result.episodes = tcfg_.episodes;
    result.updates = updates_;
    result.final_critic_loss = last_critic_loss_;
    return result;
}

EvalResult execute_checkpoint(const std::string& path, const EnvConfig& cfg, int episodes,
                              uint64_t seed, std::vector<EpisodeTrace>* traces) {
    Checkpoint ck = load_checkpoint(path);
    const uint64_t want = env_fingerprint(cfg);
    if (ck.env_fingerprint != want)
        throw ConfigError("checkpoint environment fingerprint " + hex64(ck.env_fingerprint) +
                          " does not match the requested environment " + hex64(want) +
                          "; refusing to execute");
    TrainerConfig tc = trainer_config_from_json(ck.meta.at("trainer"));
    ActorSet actors(cfg, tc, 0);
    ck.restore("actor/", actors.params());
    ActorPolicy pol(actors, true);
    return evaluate_policy(cfg, pol, episodes, seed, traces);
}

}  // namespace subnet
