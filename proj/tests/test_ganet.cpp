#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "subnet/ganet.hpp"

using namespace subnet;

namespace {

EnvConfig tiny_env(int n, int m) {
    EnvConfig cfg;
    cfg.n_subnetworks = n;
    cfg.n_channels = m;
    cfg.payload_bits = {34000.0};
    cfg.validate();
    return cfg;
}

TrainerConfig tiny_trainer() {
    TrainerConfig t;
    t.k_hist = 2;
    t.enc_hidden = 8;
    t.enc_out = 8;
    t.gru_hidden = 8;
    t.hard_hidden = 8;
    t.attn_heads = 2;
    t.attn_qk_dim = 8;
    t.attn_head_dim = 4;
    return t;
}

BatchHist random_hist(int n, int frames, int batch, int obs_dim, Rng& rng) {
    BatchHist h(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int f = 0; f < frames; ++f) {
            Eigen::MatrixXd m(batch, obs_dim);
            for (int r = 0; r < batch; ++r)
                for (int c = 0; c < obs_dim; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
            h[i].push_back(m);
        }
    return h;
}

nn::Param* find_param(const std::vector<nn::Param*>& ps, const std::string& name) {
    for (auto* p : ps)
        if (p->name == name) return p;
    return nullptr;
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return (a.array() == b.array()).all();
}

// Central-difference check of d(loss)/d(param) for every entry of the given
// parameters. build() must be a pure function of the parameter values.
double max_grad_mismatch(const std::function<nn::Ref(nn::Tape&)>& build,
                         const std::vector<nn::Param*>& ps) {
    nn::Tape t(true);
    nn::Ref loss = build(t);
    for (auto* p : ps) p->zero_grad();
    t.backward(loss);
    t.accumulate_param_grads();
    double worst = 0.0;
    const double h = 1e-6;
    for (auto* p : ps)
        for (int r = 0; r < p->value.rows(); ++r)
            for (int c = 0; c < p->value.cols(); ++c) {
                const double saved = p->value(r, c);
                p->value(r, c) = saved + h;
                nn::Tape tp(false);
                const double up = build(tp)->value(0, 0);
                p->value(r, c) = saved - h;
                nn::Tape tm(false);
                const double dn = build(tm)->value(0, 0);
                p->value(r, c) = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = p->grad(r, c);
                worst = std::max(worst,
                                 std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)}));
            }
    return worst;
}

}  // namespace

TEST_CASE("trunk produces well-shaped finite tensors") {
    const EnvConfig ecfg = tiny_env(3, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 11);
    Rng data(5);
    BatchHist hist = random_hist(3, tcfg.k_hist, 4, ecfg.obs_dim(), data);

    nn::Tape t(false);
    Rng gumbel(9);
    auto tr = net.forward_trunk(t, hist, gumbel, true);
    for (int i = 0; i < 3; ++i) {
        CHECK(tr.s_cur[i]->value.rows() == 4);
        CHECK(tr.s_cur[i]->value.cols() == tcfg.enc_out);
        CHECK(tr.e[i]->value.cols() == tcfg.gru_hidden);
        CHECK(tr.h_hat[i]->value.cols() == tcfg.attn_heads * tcfg.attn_head_dim);
        CHECK(tr.h_hat[i]->value.allFinite());
        const auto q = net.q_all_actions(t, tr, i);
        CHECK(q->value.rows() == 4);
        CHECK(q->value.cols() == ecfg.action_count());
        CHECK(q->value.allFinite());
    }
}

TEST_CASE("observation encoder is deterministic and smooth") {
    const EnvConfig ecfg = tiny_env(2, 2);
    GaNetCritic net(ecfg, tiny_trainer(), AttentionMode::full, 3);

    nn::Tape t(false);
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, ecfg.obs_dim());
    const auto a = net.encode_observation(t, t.constant(zero));
    const auto b = net.encode_observation(t, t.constant(zero));
    CHECK(a->value.allFinite());
    CHECK(bit_equal(a->value, b->value));

    // One input coordinate perturbed by eps moves the code by O(eps).
    Eigen::MatrixXd base = Eigen::MatrixXd::Constant(1, ecfg.obs_dim(), 0.3);
    const auto y0 = net.encode_observation(t, t.constant(base))->value;
    auto delta_for = [&](double eps) {
        Eigen::MatrixXd x = base;
        x(0, 2) += eps;
        return (net.encode_observation(t, t.constant(x))->value - y0).norm();
    };
    const double d4 = delta_for(1e-4);
    const double d5 = delta_for(1e-5);
    CHECK(d4 > 0.0);
    CHECK(d4 / d5 == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("history fusion uses the whole window") {
    const EnvConfig ecfg = tiny_env(2, 2);
    TrainerConfig tcfg = tiny_trainer();
    tcfg.k_hist = 5;
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 3);
    Rng data(21);

    nn::Tape t(false);
    std::vector<nn::Ref> codes;
    std::vector<Eigen::MatrixXd> frames;
    for (int k = 0; k < 5; ++k) {
        Eigen::MatrixXd f(1, ecfg.obs_dim());
        for (int c = 0; c < ecfg.obs_dim(); ++c) f(0, c) = data.uniform(-1.0, 1.0);
        frames.push_back(f);
        codes.push_back(net.encode_observation(t, t.constant(f)));
    }
    const auto e = net.fuse_history(t, codes)->value;

    // Identical window, fresh nodes: identical code.
    std::vector<nn::Ref> again;
    for (const auto& f : frames) again.push_back(net.encode_observation(t, t.constant(f)));
    CHECK(bit_equal(net.fuse_history(t, again)->value, e));

    // The oldest frame still influences the fused code.
    std::vector<nn::Ref> bumped;
    for (int k = 0; k < 5; ++k) {
        Eigen::MatrixXd f = frames[size_t(k)];
        if (k == 0) f.array() += 5.0;
        bumped.push_back(net.encode_observation(t, t.constant(f)));
    }
    REQUIRE((bumped[0]->value - codes[0]->value).norm() > 1e-6);
    CHECK((net.fuse_history(t, bumped)->value - e).norm() > 1e-8);

    // A single-frame window is a function of the current code alone.
    const auto single = net.fuse_history(t, {codes.back()})->value;
    std::vector<nn::Ref> other = {net.encode_observation(t, t.constant(frames.back()))};
    CHECK(bit_equal(net.fuse_history(t, other)->value, single));
}

TEST_CASE("hard mask is binary with a zero diagonal") {
    const EnvConfig ecfg = tiny_env(4, 2);
    GaNetCritic net(ecfg, tiny_trainer(), AttentionMode::full, 17);
    Rng data(2);
    BatchHist hist = random_hist(4, 2, 1, ecfg.obs_dim(), data);

    for (const bool sample : {true, false}) {
        Rng gumbel(33);
        const AttentionGraph g = net.attention_eval(hist, gumbel, sample);
        for (int i = 0; i < 4; ++i) {
            CHECK(g.hard_mask(i, i) == 0.0);
            for (int j = 0; j < 4; ++j) {
                const double v = g.hard_mask(i, j);
                CHECK((v == 0.0 || v == 1.0));
            }
        }
    }
}

TEST_CASE("forced keep/drop logits concentrate the sampled mask") {
    const EnvConfig ecfg = tiny_env(2, 2);
    TrainerConfig tcfg = tiny_trainer();
    tcfg.k_hist = 1;
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 9);
    auto* W = find_param(net.params(), "pair_fc.W");
    auto* b = find_param(net.params(), "pair_fc.b");
    REQUIRE(W != nullptr);
    REQUIRE(b != nullptr);
    W->value.setZero();

    Rng data(4);
    const int draws = 10000;
    BatchHist hist = random_hist(2, 1, draws, ecfg.obs_dim(), data);
    for (int i = 0; i < 2; ++i)
        for (auto& f : hist[size_t(i)]) f = f.row(0).replicate(draws, 1);

    auto keep_rate = [&](double keep_logit, double drop_logit) {
        b->value << keep_logit, drop_logit;
        nn::Tape t(false);
        Rng gumbel(77);
        auto tr = net.forward_trunk(t, hist, gumbel, true);
        return tr.mask[0][0]->value.col(0).mean();
    };
    CHECK(keep_rate(10.0, -10.0) >= 0.999);
    CHECK(keep_rate(-10.0, 10.0) <= 0.001);
}

TEST_CASE("soft rows normalize over the unmasked entries") {
    const EnvConfig ecfg = tiny_env(4, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 23);
    Rng data(6);
    BatchHist hist = random_hist(4, 2, 1, ecfg.obs_dim(), data);

    for (uint64_t seed = 1; seed <= 8; ++seed) {
        nn::Tape t(false);
        Rng gumbel(seed);
        auto tr = net.forward_trunk(t, hist, gumbel, true);
        for (int i = 0; i < 4; ++i) {
            int unmasked = 0;
            for (int p = 0; p < 3; ++p) {
                const double m = tr.mask[i][size_t(p)]->value(0, 0);
                for (int head = 0; head < tcfg.attn_heads; ++head) {
                    const double w = tr.soft_w[size_t(head)][size_t(i)]->value(0, p);
                    if (m == 0.0)
                        CHECK(w == 0.0);
                    else
                        CHECK(w > 0.0);
                }
                if (m != 0.0) ++unmasked;
            }
            for (int head = 0; head < tcfg.attn_heads; ++head) {
                const double sum = tr.soft_w[size_t(head)][size_t(i)]->value.row(0).sum();
                if (unmasked == 0)
                    CHECK(sum == 0.0);
                else
                    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }

    // A fully masked agent contributes and receives nothing: zero embedding.
    Eigen::MatrixXd forced = Eigen::MatrixXd::Ones(4, 4);
    forced.row(0).setZero();
    Rng gumbel(1);
    const Eigen::MatrixXd hh = net.h_hat_eval(hist, gumbel, false, &forced);
    CHECK(hh.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("soft weights match the direct softmax formula") {
    const EnvConfig ecfg = tiny_env(3, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 31);
    Rng data(8);
    BatchHist hist = random_hist(3, 2, 1, ecfg.obs_dim(), data);

    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 3);
    nn::Tape t(false);
    Rng gumbel(1);
    auto tr = net.forward_trunk(t, hist, gumbel, false, &ones);

    for (int m = 0; m < tcfg.attn_heads; ++m) {
        const std::string p = "head" + std::to_string(m);
        const Eigen::MatrixXd& wq = find_param(net.params(), p + ".wq")->value;
        const Eigen::MatrixXd& wk = find_param(net.params(), p + ".wk")->value;
        for (int i = 0; i < 3; ++i) {
            const Eigen::RowVectorXd q = tr.e[size_t(i)]->value.row(0) * wq;
            Eigen::VectorXd scores(2);
            int pos = 0;
            for (int j = 0; j < 3; ++j) {
                if (j == i) continue;
                const Eigen::RowVectorXd k = tr.e[size_t(j)]->value.row(0) * wk;
                scores(pos++) = q.dot(k) / double(tcfg.attn_qk_dim);
            }
            const Eigen::VectorXd ex = (scores.array() - scores.maxCoeff()).exp();
            const Eigen::VectorXd want = ex / ex.sum();
            for (int c = 0; c < 2; ++c)
                CHECK(tr.soft_w[size_t(m)][size_t(i)]->value(0, c) ==
                      doctest::Approx(want(c)).epsilon(1e-6));
        }
    }
}

TEST_CASE("degenerate masks give exact weights") {
    const EnvConfig ecfg = tiny_env(3, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 37);
    Rng data(12);
    BatchHist hist = random_hist(3, 2, 1, ecfg.obs_dim(), data);
    // Agents 1 and 2 are made indistinguishable.
    hist[2] = hist[1];

    // Single unmasked neighbor: its weight is exactly one.
    Eigen::MatrixXd single = Eigen::MatrixXd::Zero(3, 3);
    single(0, 1) = 1.0;
    {
        nn::Tape t(false);
        Rng gumbel(1);
        auto tr = net.forward_trunk(t, hist, gumbel, false, &single);
        for (int m = 0; m < tcfg.attn_heads; ++m) {
            CHECK(tr.soft_w[size_t(m)][0]->value(0, 0) == 1.0);
            CHECK(tr.soft_w[size_t(m)][0]->value(0, 1) == 0.0);
        }
    }

    // Two neighbors with identical keys split the weight exactly in half.
    Eigen::MatrixXd both = Eigen::MatrixXd::Ones(3, 3);
    {
        nn::Tape t(false);
        Rng gumbel(1);
        auto tr = net.forward_trunk(t, hist, gumbel, false, &both);
        for (int m = 0; m < tcfg.attn_heads; ++m) {
            CHECK(tr.soft_w[size_t(m)][0]->value(0, 0) == 0.5);
            CHECK(tr.soft_w[size_t(m)][0]->value(0, 1) == 0.5);
        }
    }
}

TEST_CASE("masked neighbor perturbation leaves the embedding bit-identical") {
    const EnvConfig ecfg = tiny_env(3, 2);
    GaNetCritic net(ecfg, tiny_trainer(), AttentionMode::full, 41);
    Rng data(14);
    BatchHist hist = random_hist(3, 2, 1, ecfg.obs_dim(), data);

    Eigen::MatrixXd forced(3, 3);
    forced << 0, 1, 0,  // agent 0 sees only agent 1
        1, 0, 1,        // agent 1 sees both
        1, 1, 0;
    Rng g1(1), g2(1);
    const Eigen::MatrixXd before = net.h_hat_eval(hist, g1, false, &forced);

    BatchHist poked = hist;
    for (auto& f : poked[2]) f.array() += 37.0;
    const Eigen::MatrixXd after = net.h_hat_eval(poked, g2, false, &forced);

    CHECK(bit_equal(before.row(0), after.row(0)));   // agent 2 masked away
    CHECK((before.row(1) - after.row(1)).cwiseAbs().maxCoeff() > 0.0);  // attended
}

TEST_CASE("neighbor permutation leaves the embedding unchanged") {
    const EnvConfig ecfg = tiny_env(3, 2);
    GaNetCritic net(ecfg, tiny_trainer(), AttentionMode::full, 43);
    Rng data(16);
    BatchHist hist = random_hist(3, 2, 1, ecfg.obs_dim(), data);

    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 3);
    Rng g1(1), g2(1);
    const Eigen::MatrixXd a = net.h_hat_eval(hist, g1, false, &ones);

    BatchHist swapped = hist;
    std::swap(swapped[1], swapped[2]);
    const Eigen::MatrixXd b = net.h_hat_eval(swapped, g2, false, &ones);
    CHECK(bit_equal(a.row(0), b.row(0)));

    // Larger neighbor sets: invariance up to floating-point reassociation.
    const EnvConfig big = tiny_env(5, 2);
    GaNetCritic net5(big, tiny_trainer(), AttentionMode::full, 47);
    Rng data5(18);
    BatchHist hist5 = random_hist(5, 2, 1, big.obs_dim(), data5);
    Eigen::MatrixXd ones5 = Eigen::MatrixXd::Ones(5, 5);
    Rng g3(1), g4(1);
    const Eigen::MatrixXd a5 = net5.h_hat_eval(hist5, g3, false, &ones5);
    BatchHist perm = hist5;
    std::swap(perm[1], perm[4]);
    std::swap(perm[2], perm[3]);
    const Eigen::MatrixXd b5 = net5.h_hat_eval(perm, g4, false, &ones5);
    CHECK((a5.row(0) - b5.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ablations disable the advertised structure") {
    const EnvConfig ecfg = tiny_env(4, 2);
    const TrainerConfig tcfg = tiny_trainer();
    Rng data(20);
    BatchHist hist = random_hist(4, 2, 1, ecfg.obs_dim(), data);

    GaNetCritic no_hard(ecfg, tcfg, AttentionMode::no_hard, 51);
    CHECK(find_param(no_hard.params(), "pair_fc.W") == nullptr);
    Rng g1(1);
    const AttentionGraph gh = no_hard.attention_eval(hist, g1, true);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(gh.hard_mask(i, j) == (i == j ? 0.0 : 1.0));

    GaNetCritic no_attn(ecfg, tcfg, AttentionMode::no_attn, 51);
    CHECK(find_param(no_attn.params(), "head0.wq") == nullptr);
    CHECK(find_param(no_attn.params(), "head0.wv") != nullptr);
    Rng g2(1);
    const AttentionGraph ga = no_attn.attention_eval(hist, g2, true);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(ga.soft_weights[0](i, j) == (i == j ? 0.0 : doctest::Approx(1.0 / 3)));

    // The unweighted mean of value projections, computed independently.
    nn::Tape t(false);
    Rng g3(1);
    auto tr = no_attn.forward_trunk(t, hist, g3, true);
    for (int i = 0; i < 4; ++i) {
        Eigen::RowVectorXd want(tcfg.attn_heads * tcfg.attn_head_dim);
        for (int m = 0; m < tcfg.attn_heads; ++m) {
            const Eigen::MatrixXd& wv =
                find_param(no_attn.params(), "head" + std::to_string(m) + ".wv")->value;
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(tcfg.attn_head_dim);
            for (int j = 0; j < 4; ++j)
                if (j != i) acc += tr.e[size_t(j)]->value.row(0) * wv;
            want.segment(m * tcfg.attn_head_dim, tcfg.attn_head_dim) =
                (acc / 3.0).array().tanh();
        }
        CHECK((tr.h_hat[size_t(i)]->value.row(0) - want).cwiseAbs().maxCoeff() < 1e-12);
    }

    // Full attention responds to the keys; the ablation cannot.
    GaNetCritic full(ecfg, tcfg, AttentionMode::full, 51);
    find_param(full.params(), "head0.wq")->value *= 20.0;
    find_param(full.params(), "head0.wk")->value *= 20.0;
    Rng g4(1);
    nn::Tape t2(false);
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
    auto trf = full.forward_trunk(t2, hist, g4, false, &ones);
    double dev = 0.0;
    for (int i = 0; i < 4; ++i)
        dev = std::max(dev,
                       (trf.soft_w[0][size_t(i)]->value.array() - 1.0 / 3).abs().maxCoeff());
    CHECK(dev > 0.02);
}

TEST_CASE("critic values are deterministic, batch-consistent, and bounded-safe") {
    const EnvConfig ecfg = tiny_env(2, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 61);
    Rng data(24);
    BatchHist two = random_hist(2, 2, 2, ecfg.obs_dim(), data);

    Rng g1(1);
    nn::Tape t(false);
    auto tr = net.forward_trunk(t, two, g1, false);
    const Eigen::MatrixXd q0 = net.q_all_actions(t, tr, 0)->value;

    for (int row = 0; row < 2; ++row) {
        BatchHist one(2);
        for (int i = 0; i < 2; ++i)
            for (const auto& f : two[size_t(i)]) one[size_t(i)].push_back(f.row(row));
        Rng g2(1);
        nn::Tape ts(false);
        auto trs = net.forward_trunk(ts, one, g2, false);
        const Eigen::MatrixXd qs = net.q_all_actions(ts, trs, 0)->value;
        CHECK((qs - q0.row(row)).cwiseAbs().maxCoeff() < 1e-9);
    }

    // Saturated normalized inputs stay finite.
    BatchHist big(2);
    for (int i = 0; i < 2; ++i)
        for (int f = 0; f < 2; ++f)
            big[size_t(i)].push_back(Eigen::MatrixXd::Constant(64, ecfg.obs_dim(), 3.0));
    Rng g3(1);
    nn::Tape tb(false);
    auto trb = net.forward_trunk(tb, big, g3, true);
    for (int i = 0; i < 2; ++i)
        CHECK(net.q_all_actions(tb, trb, i)->value.allFinite());
}

TEST_CASE("gradients through the attention softmax match finite differences") {
    const EnvConfig ecfg = tiny_env(3, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 71);
    Rng data(30);
    BatchHist hist = random_hist(3, 2, 2, ecfg.obs_dim(), data);

    // Fractional forced mask exercises the differentiable masked softmax.
    Eigen::MatrixXd forced(3, 3);
    forced << 0, 0.7, 0.3, 0.6, 0, 1.0, 0.5, 0.9, 0;

    auto build = [&](nn::Tape& t) {
        Rng g(1);
        auto tr = net.forward_trunk(t, hist, g, false, &forced);
        std::vector<nn::Ref> qs;
        for (int i = 0; i < 3; ++i) qs.push_back(net.q_all_actions(t, tr, i));
        return t.mean_all(t.concat_cols(qs));
    };
    const std::vector<std::string> names = {"enc.fc0.W", "enc.fc1.b",  "hist_gru.xn.W",
                                            "head0.wq",  "head1.wk",   "head0.wv",
                                            "f0.fc0.W",  "h2.fc1.W"};
    std::vector<nn::Param*> ps;
    for (const auto& n : names) {
        auto* p = find_param(net.params(), n);
        REQUIRE(p != nullptr);
        ps.push_back(p);
    }
    CHECK(max_grad_mismatch(build, ps) < 1e-5);
}

TEST_CASE("straight-through hard attention matches the relaxed gradient") {
    const EnvConfig ecfg = tiny_env(3, 2);
    const TrainerConfig tcfg = tiny_trainer();
    GaNetCritic net(ecfg, tcfg, AttentionMode::full, 73);
    Rng data(32);
    BatchHist hist = random_hist(3, 2, 2, ecfg.obs_dim(), data);

    // Loss is linear in the sampled mask so the straight-through estimator
    // must equal the gradient of the relaxed (softmax) objective exactly.
    auto hard_loss = [&](nn::Tape& t) {
        Rng g(1);
        auto tr = net.forward_trunk(t, hist, g, false);
        std::vector<nn::Ref> parts;
        for (int i = 0; i < 3; ++i)
            for (int p = 0; p < 2; ++p) parts.push_back(tr.mask[size_t(i)][size_t(p)]);
        return t.mean_all(t.concat_cols(parts));
    };
    nn::Tape t(true);
    nn::Ref loss = hard_loss(t);
    for (auto* p : net.params()) p->zero_grad();
    t.backward(loss);
    t.accumulate_param_grads();

    auto soft_objective = [&]() {
        nn::Tape tf(false);
        Rng g(1);
        auto tr = net.forward_trunk(tf, hist, g, false);
        double acc = 0.0;
        int cnt = 0;
        for (int i = 0; i < 3; ++i)
            for (int p = 0; p < 2; ++p)
                for (int r = 0; r < 2; ++r) {
                    const Eigen::RowVectorXd l =
                        tr.logits[size_t(i)][size_t(p)]->value.row(r) /
                        tcfg.gumbel_temperature;
                    const double mx = l.maxCoeff();
                    const Eigen::RowVectorXd ex = (l.array() - mx).exp();
                    acc += ex(0) / ex.sum();
                    ++cnt;
                }
        return acc / cnt;
    };

    double worst = 0.0;
    for (const std::string name : {"pair_fc.W", "pair_fc.b", "pair_fwd.xn.W", "pair_bwd.hz.W"}) {
        auto* p = find_param(net.params(), name);
        REQUIRE(p != nullptr);
        CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);  // the hard path does train
        const double h = 1e-6;
        for (int r = 0; r < p->value.rows(); ++r)
            for (int c = 0; c < p->value.cols(); ++c) {
                const double saved = p->value(r, c);
                p->value(r, c) = saved + h;
                const double up = soft_objective();
                p->value(r, c) = saved - h;
                const double dn = soft_objective();
                p->value(r, c) = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = p->grad(r, c);
                worst = std::max(worst, std::abs(an - fd) /
                                            std::max({1.0, std::abs(an), std::abs(fd)}));
            }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("seeded construction is reproducible") {
    const EnvConfig ecfg = tiny_env(2, 2);
    const TrainerConfig tcfg = tiny_trainer();
    Rng data(40);
    BatchHist hist = random_hist(2, 2, 1, ecfg.obs_dim(), data);

    GaNetCritic a(ecfg, tcfg, AttentionMode::full, 99);
    GaNetCritic b(ecfg, tcfg, AttentionMode::full, 99);
    GaNetCritic c(ecfg, tcfg, AttentionMode::full, 100);
    Rng g1(1), g2(1), g3(1);
    const Eigen::VectorXd qa = a.q_eval(hist, 0, g1);
    const Eigen::VectorXd qb = b.q_eval(hist, 0, g2);
    const Eigen::VectorXd qc = c.q_eval(hist, 0, g3);
    CHECK(bit_equal(qa, qb));
    CHECK((qa - qc).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a lone agent sees a zero context embedding") {
    const EnvConfig ecfg = tiny_env(1, 2);
    GaNetCritic net(ecfg, tiny_trainer(), AttentionMode::full, 81);
    Rng data(44);
    BatchHist hist = random_hist(1, 2, 1, ecfg.obs_dim(), data);
    Rng g(1);
    CHECK(net.h_hat_eval(hist, g, true).cwiseAbs().maxCoeff() == 0.0);
    Rng g2(1);
    const Eigen::VectorXd q = net.q_eval(hist, 0, g2);
    CHECK(q.size() == ecfg.action_count());
    CHECK(q.allFinite());
}

TEST_CASE("actors emit normalized local distributions") {
    EnvConfig ecfg = tiny_env(2, 3);  // three channels, three power levels
    const TrainerConfig tcfg = tiny_trainer();
    ActorSet actors(ecfg, tcfg, 7);

    CHECK(ecfg.action_count() == 9);
    Rng data(50);
    Eigen::VectorXd obs(ecfg.obs_dim());
    for (int i = 0; i < obs.size(); ++i) obs(i) = data.uniform(0.0, 1.0);

    const Eigen::VectorXd p = actors.probs_eval(0, obs);
    CHECK(p.size() == 9);
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.maxCoeff() < 1.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));

    // Log-probabilities agree with the direct probabilities.
    nn::Tape t(false);
    const auto lp =
        t.log_softmax_rows(actors.logits(t, 0, t.constant(obs.transpose())))->value;
    for (int a = 0; a < 9; ++a)
        CHECK(lp(0, a) == doctest::Approx(std::log(p(a))).epsilon(1e-6));

    // Greedy pick is the argmax; sampling round-trips through the flat index.
    int best = 0;
    p.maxCoeff(&best);
    CHECK(actors.act_greedy(0, obs).flat(ecfg) == best);
    Rng sampler(3);
    for (int k = 0; k < 50; ++k) {
        const Action a = actors.act_sample(0, obs, sampler);
        CHECK(a.channel >= 0);
        CHECK(a.channel < 3);
        CHECK(a.power_level >= 0);
        CHECK(a.power_level < 3);
    }

    // Same local observation, same distribution, whatever the other agent saw.
    const Eigen::VectorXd q = actors.probs_eval(1, obs);
    CHECK(bit_equal(actors.probs_eval(1, obs), q));
}
