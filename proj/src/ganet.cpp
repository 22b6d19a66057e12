#include "subnet/ganet.hpp"

#include <cmath>
#include <stdexcept>

namespace subnet {

using nn::Ref;
using nn::Tape;

nn::Ref CriticModel::q_action_node(nn::Tape&, int, const nn::Ref&,
                                   const std::vector<std::vector<int>>&) {
    throw std::logic_error("this critic does not expose action-input gradients");
}

AttentionMode attention_mode_from_variant(const std::string& variant) {
    if (variant == "ganet_full") return AttentionMode::full;
    if (variant == "ganet_no_hard") return AttentionMode::no_hard;
    if (variant == "ganet_no_attn") return AttentionMode::no_attn;
    throw std::logic_error("variant has no attention mode: " + variant);
}

GaNetCritic::GaNetCritic(const EnvConfig& ecfg, const TrainerConfig& tcfg,
                         AttentionMode mode, uint64_t seed)
    : ecfg_(ecfg), tcfg_(tcfg), mode_(mode) {
    const int n = ecfg_.n_subnetworks;
    const int a = ecfg_.action_count();
    const int obs = ecfg_.obs_dim();
    Rng root(seed);

    Rng enc_rng = root.derive("enc");
    encoder_ = nn::MLP(store_, "enc", {obs, tcfg_.enc_hidden, tcfg_.enc_out}, enc_rng);
    Rng gru_rng = root.derive("hist_gru");
    hist_gru_ = nn::GRUCell(store_, "hist_gru", tcfg_.enc_out, tcfg_.gru_hidden, gru_rng);

    if (mode_ == AttentionMode::full) {
        Rng pf = root.derive("pair_fwd");
        Rng pb = root.derive("pair_bwd");
        Rng pc = root.derive("pair_fc");
        pair_fwd_ = nn::GRUCell(store_, "pair_fwd", 2 * tcfg_.gru_hidden, tcfg_.hard_hidden, pf);
        pair_bwd_ = nn::GRUCell(store_, "pair_bwd", 2 * tcfg_.gru_hidden, tcfg_.hard_hidden, pb);
        pair_fc_ = nn::Linear(store_, "pair_fc", 2 * tcfg_.hard_hidden, 2, pc);
    }

    Rng head_rng = root.derive("heads");
    const double qk_bound = 1.0 / std::sqrt(double(tcfg_.gru_hidden));
    for (int m = 0; m < tcfg_.attn_heads; ++m) {
        const std::string p = "head" + std::to_string(m);
        if (mode_ != AttentionMode::no_attn) {
            wq_.push_back(store_.add(p + ".wq", tcfg_.gru_hidden, tcfg_.attn_qk_dim,
                                     qk_bound, head_rng));
            wk_.push_back(store_.add(p + ".wk", tcfg_.gru_hidden, tcfg_.attn_qk_dim,
                                     qk_bound, head_rng));
        }
        wv_.push_back(store_.add(p + ".wv", tcfg_.gru_hidden, tcfg_.attn_head_dim,
                                 qk_bound, head_rng));
    }

    const int hhat_dim = tcfg_.attn_heads * tcfg_.attn_head_dim;
    Rng heads_rng = root.derive("value_heads");
    for (int i = 0; i < n; ++i) {
        f_.emplace_back(store_, "f" + std::to_string(i),
                        std::vector<int>{tcfg_.enc_out + a, tcfg_.enc_hidden, tcfg_.enc_out},
                        heads_rng);
        h_.emplace_back(store_, "h" + std::to_string(i),
                        std::vector<int>{tcfg_.enc_out + hhat_dim, tcfg_.enc_hidden,
                                         tcfg_.enc_out, 1},
                        heads_rng);
    }
}

Ref GaNetCritic::encode_observation(Tape& t, const Ref& obs) const {
    return t.relu(encoder_.forward(t, obs));
}

Ref GaNetCritic::fuse_history(Tape& t, const std::vector<Ref>& codes) const {
    if (codes.empty()) throw std::logic_error("fuse_history: empty code sequence");
    const auto B = codes.front()->value.rows();
    Ref h = t.constant(Eigen::MatrixXd::Zero(B, tcfg_.gru_hidden));
    for (const Ref& c : codes) h = hist_gru_.forward(t, c, h);
    return h;
}

GaNetCritic::Trunk GaNetCritic::forward_trunk(Tape& t, const BatchHist& hist, Rng& rng,
                                              bool sample_hard,
                                              const Eigen::MatrixXd* forced_mask) const {
    const int n = ecfg_.n_subnetworks;
    if (int(hist.size()) != n)
        throw std::logic_error("forward_trunk: history agent count mismatch");
    const int B = int(hist[0].back().rows());
    const int hhat_dim = tcfg_.attn_heads * tcfg_.attn_head_dim;

    Trunk tr;
    tr.s_cur.resize(n);
    tr.e.resize(n);
    tr.h_hat.resize(n);
    for (int i = 0; i < n; ++i) {
        std::vector<Ref> codes;
        codes.reserve(hist[i].size());
        for (const auto& frame : hist[i])
            codes.push_back(encode_observation(t, t.constant(frame)));
        tr.s_cur[i] = codes.back();
        tr.e[i] = fuse_history(t, codes);
    }
    if (n == 1) {
        tr.h_hat[0] = t.constant(Eigen::MatrixXd::Zero(B, hhat_dim));
        return tr;
    }

    const int P = n - 1;
    auto neighbor = [n](int i, int p) { return p < i ? p : p + 1; };  // j != i, ascending

    if (mode_ != AttentionMode::no_attn) {
        tr.mask.assign(n, {});
        tr.logits.assign(n, {});
        for (int i = 0; i < n; ++i) {
            tr.mask[i].reserve(P);
            if (forced_mask != nullptr) {
                for (int p = 0; p < P; ++p)
                    tr.mask[i].push_back(t.constant(Eigen::MatrixXd::Constant(
                        B, 1, (*forced_mask)(i, neighbor(i, p)))));
            } else if (mode_ == AttentionMode::no_hard) {
                for (int p = 0; p < P; ++p)
                    tr.mask[i].push_back(t.constant(Eigen::MatrixXd::Ones(B, 1)));
            } else {
                std::vector<Ref> x(P);
                for (int p = 0; p < P; ++p)
                    x[p] = t.concat_cols({tr.e[i], tr.e[neighbor(i, p)]});
                std::vector<Ref> hf(P), hb(P);
                Ref h = t.constant(Eigen::MatrixXd::Zero(B, tcfg_.hard_hidden));
                for (int p = 0; p < P; ++p) hf[p] = h = pair_fwd_.forward(t, x[p], h);
                h = t.constant(Eigen::MatrixXd::Zero(B, tcfg_.hard_hidden));
                for (int p = P - 1; p >= 0; --p) hb[p] = h = pair_bwd_.forward(t, x[p], h);
                for (int p = 0; p < P; ++p) {
                    Ref logits = pair_fc_.forward(t, t.concat_cols({hf[p], hb[p]}));
                    tr.logits[i].push_back(logits);
                    Ref st = nn::gumbel_softmax_st(t, logits, tcfg_.gumbel_temperature,
                                                   rng, sample_hard);
                    tr.mask[i].push_back(t.slice_cols(st, 0, 1));  // column 0 = keep
                }
            }
        }
    }

    tr.soft_w.assign(tcfg_.attn_heads, std::vector<Ref>(size_t(n)));
    std::vector<std::vector<Ref>> parts(static_cast<size_t>(n));
    for (int m = 0; m < tcfg_.attn_heads; ++m) {
        std::vector<Ref> V(n);
        Ref wv = t.leaf(*wv_[m]);
        for (int j = 0; j < n; ++j) V[j] = t.matmul(tr.e[j], wv);
        if (mode_ == AttentionMode::no_attn) {
            for (int i = 0; i < n; ++i) {
                Ref agg = V[neighbor(i, 0)];
                for (int p = 1; p < P; ++p) agg = t.add(agg, V[neighbor(i, p)]);
                parts[i].push_back(t.tanh(t.scale(agg, 1.0 / double(P))));
            }
            continue;
        }
        Ref wq = t.leaf(*wq_[m]);
        Ref wk = t.leaf(*wk_[m]);
        std::vector<Ref> Q(n), K(n);
        for (int j = 0; j < n; ++j) {
            Q[j] = t.matmul(tr.e[j], wq);
            K[j] = t.matmul(tr.e[j], wk);
        }
        const double inv_dk = 1.0 / double(tcfg_.attn_qk_dim);
        for (int i = 0; i < n; ++i) {
            std::vector<Ref> score_cols(P);
            for (int p = 0; p < P; ++p)
                score_cols[p] =
                    t.scale(t.rowwise_sum(t.mul(Q[i], K[neighbor(i, p)])), inv_dk);
            Ref w = t.attn_softmax_rows(t.concat_cols(score_cols),
                                        t.concat_cols(tr.mask[i]));
            tr.soft_w[m][i] = w;
            Ref agg = t.col_scale(V[neighbor(i, 0)], t.slice_cols(w, 0, 1));
            for (int p = 1; p < P; ++p)
                agg = t.add(agg, t.col_scale(V[neighbor(i, p)], t.slice_cols(w, p, 1)));
            parts[i].push_back(t.tanh(agg));
        }
    }
    for (int i = 0; i < n; ++i) tr.h_hat[i] = t.concat_cols(parts[i]);
    return tr;
}

Ref GaNetCritic::q_all_actions(Tape& t, const Trunk& tr, int agent) const {
    const int a_count = ecfg_.action_count();
    const int B = int(tr.s_cur[agent]->value.rows());
    std::vector<Ref> cols;
    cols.reserve(a_count);
    for (int a = 0; a < a_count; ++a) {
        Eigen::MatrixXd oh = Eigen::MatrixXd::Zero(B, a_count);
        oh.col(a).setOnes();
        Ref fa = t.relu(f_[agent].forward(
            t, t.concat_cols({tr.s_cur[agent], t.constant(std::move(oh))})));
        cols.push_back(h_[agent].forward(t, t.concat_cols({fa, tr.h_hat[agent]})));
    }
    return t.concat_cols(cols);
}

void GaNetCritic::begin(Tape& t, const BatchHist& hist, Rng& rng, bool training) {
    trunk_ = forward_trunk(t, hist, rng, training);
}

Ref GaNetCritic::q_all(Tape& t, int agent, const std::vector<std::vector<int>>&) {
    return q_all_actions(t, trunk_, agent);
}

AttentionGraph GaNetCritic::attention_eval(const BatchHist& hist, Rng& rng,
                                           bool sample) const {
    const int n = ecfg_.n_subnetworks;
    Tape t(false);
    Trunk tr = forward_trunk(t, hist, rng, sample);
    AttentionGraph g;
    g.hard_mask = Eigen::MatrixXd::Zero(n, n);
    g.soft_weights.assign(size_t(tcfg_.attn_heads), Eigen::MatrixXd::Zero(n, n));
    if (n == 1) return g;
    auto neighbor = [n](int i, int p) { return p < i ? p : p + 1; };
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < n - 1; ++p) {
            const int j = neighbor(i, p);
            if (mode_ == AttentionMode::no_attn) {
                g.hard_mask(i, j) = 1.0;
                for (int m = 0; m < tcfg_.attn_heads; ++m)
                    g.soft_weights[m](i, j) = 1.0 / double(n - 1);
            } else {
                g.hard_mask(i, j) = tr.mask[i][p]->value(0, 0);
                for (int m = 0; m < tcfg_.attn_heads; ++m)
                    g.soft_weights[m](i, j) = tr.soft_w[m][i]->value(0, p);
            }
        }
    return g;
}

Eigen::MatrixXd GaNetCritic::h_hat_eval(const BatchHist& hist, Rng& rng, bool sample,
                                        const Eigen::MatrixXd* forced_mask) const {
    const int n = ecfg_.n_subnetworks;
    Tape t(false);
    Trunk tr = forward_trunk(t, hist, rng, sample, forced_mask);
    Eigen::MatrixXd out(n, tcfg_.attn_heads * tcfg_.attn_head_dim);
    for (int i = 0; i < n; ++i) out.row(i) = tr.h_hat[i]->value.row(0);
    return out;
}

Eigen::VectorXd GaNetCritic::q_eval(const BatchHist& hist, int agent, Rng& rng) const {
    Tape t(false);
    Trunk tr = forward_trunk(t, hist, rng, false);
    return q_all_actions(t, tr, agent)->value.row(0).transpose();
}

ActorSet::ActorSet(const EnvConfig& ecfg, const TrainerConfig& tcfg, uint64_t seed)
    : ecfg_(ecfg) {
    Rng root(seed);
    for (int i = 0; i < ecfg_.n_subnetworks; ++i) {
        Rng r = root.derive("actor" + std::to_string(i));
        nets_.emplace_back(store_, "actor" + std::to_string(i),
                           std::vector<int>{ecfg_.obs_dim(), tcfg.enc_hidden, tcfg.enc_out,
                                            ecfg_.action_count()},
                           r);
    }
}

Ref ActorSet::logits(Tape& t, int agent, const Ref& obs) const {
    return nets_[agent].forward(t, obs);
}

Eigen::VectorXd ActorSet::probs_eval(int agent, const Eigen::VectorXd& obs_input) const {
    Tape t(false);
    Ref x = t.constant(obs_input.transpose());
    return t.softmax_rows(logits(t, agent, x))->value.row(0).transpose();
}

Action ActorSet::act_sample(int agent, const Eigen::VectorXd& obs_input, Rng& rng) const {
    const Eigen::VectorXd p = probs_eval(agent, obs_input);
    std::vector<double> probs(p.data(), p.data() + p.size());
    return Action::from_flat(rng.categorical(probs), ecfg_);
}

Action ActorSet::act_greedy(int agent, const Eigen::VectorXd& obs_input) const {
    const Eigen::VectorXd p = probs_eval(agent, obs_input);
    int best = 0;
    p.maxCoeff(&best);  // ties resolve to the lowest flat index
    return Action::from_flat(best, ecfg_);
}

}  // namespace subnet
