#include <cmath>
#include <functional>

#include <doctest.h>

#include "subnet/nn.hpp"

using namespace subnet;
using nn::Ref;
using nn::Tape;

namespace {

// Central-difference check of every element of every parameter against the
// tape gradient. build must be a deterministic pure function of the params.
void check_grads(const std::vector<nn::Param*>& ps,
                 const std::function<Ref(Tape&)>& build, double tol = 1e-5) {
    Tape t(true);
    const Ref loss = build(t);
    t.backward(loss);
    for (auto* p : ps) p->zero_grad();
    t.accumulate_param_grads();

    const double h = 1e-6;
    for (auto* p : ps)
        for (int r = 0; r < p->value.rows(); ++r)
            for (int c = 0; c < p->value.cols(); ++c) {
                const double keep = p->value(r, c);
                p->value(r, c) = keep + h;
                Tape tp(false);
                const double lp = build(tp)->value(0, 0);
                p->value(r, c) = keep - h;
                Tape tm(false);
                const double lm = build(tm)->value(0, 0);
                p->value(r, c) = keep;
                const double fd = (lp - lm) / (2.0 * h);
                const double an = p->grad(r, c);
                const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
                INFO(p->name, "(", r, ",", c, ") fd=", fd, " analytic=", an);
                CHECK(std::abs(fd - an) / scale <= tol);
            }
}

Eigen::MatrixXd random_mat(int r, int c, Rng& rng) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("mlp chain gradients match finite differences") {
    Rng rng(5);
    nn::ParamStore store;
    nn::MLP mlp(store, "mlp", {4, 6, 3}, rng);
    const Eigen::MatrixXd x = random_mat(5, 4, rng);
    check_grads(store.all(), [&](Tape& t) {
        Ref out = mlp.forward(t, t.constant(x));
        return t.mean_all(t.mul(out, out));
    });
}

TEST_CASE("activation and reduction gradients match finite differences") {
    Rng rng(6);
    nn::ParamStore store;
    nn::Param* w = store.add("w", 3, 4, 0.8, rng);
    const Eigen::MatrixXd x = random_mat(2, 3, rng);
    check_grads(store.all(), [&](Tape& t) {
        Ref z = t.matmul(t.constant(x), t.leaf(*w));
        Ref a = t.add(t.tanh(z), t.sigmoid(t.scale(z, 0.5)));
        Ref b = t.mul(a, t.add_scalar(t.relu(z), 0.1));
        Ref c = t.log(t.add_scalar(t.mul(b, b), 1.0));
        Ref s = t.rowwise_sum(c);
        return t.mean_all(t.exp(t.scale(s, 0.1)));
    });
}

TEST_CASE("gru through time accumulates shared-weight gradients") {
    Rng rng(7);
    nn::ParamStore store;
    nn::GRUCell cell(store, "gru", 3, 4, rng);
    const Eigen::MatrixXd x1 = random_mat(2, 3, rng);
    const Eigen::MatrixXd x2 = random_mat(2, 3, rng);
    const Eigen::MatrixXd x3 = random_mat(2, 3, rng);
    check_grads(store.all(), [&](Tape& t) {
        Ref h = t.constant(Eigen::MatrixXd::Zero(2, 4));
        h = cell.forward(t, t.constant(x1), h);
        h = cell.forward(t, t.constant(x2), h);
        h = cell.forward(t, t.constant(x3), h);
        return t.mean_all(t.mul(h, h));
    });

    // the oldest input genuinely reaches the final state
    nn::ParamStore store2;
    Rng rng2(8);
    nn::GRUCell cell2(store2, "g2", 3, 4, rng2);
    nn::Param* x1p = store2.add("x1", 2, 3, 0.5, rng2);
    check_grads({x1p}, [&](Tape& t) {
        Ref h = t.constant(Eigen::MatrixXd::Zero(2, 4));
        h = cell2.forward(t, t.leaf(*x1p), h);
        for (int k = 0; k < 4; ++k) h = cell2.forward(t, t.constant(x2), h);
        return t.mean_all(h);
    });
    bool any_nonzero = false;
    {
        Tape t(true);
        Ref h = t.constant(Eigen::MatrixXd::Zero(2, 4));
        h = cell2.forward(t, t.leaf(*x1p), h);
        for (int k = 0; k < 4; ++k) h = cell2.forward(t, t.constant(x2), h);
        t.backward(t.mean_all(h));
        x1p->zero_grad();
        t.accumulate_param_grads();
        any_nonzero = x1p->grad.cwiseAbs().maxCoeff() > 1e-12;
    }
    CHECK(any_nonzero);
}

TEST_CASE("masked softmax zeroes masked entries and row-normalizes the rest") {
    Rng rng(9);
    nn::ParamStore store;
    nn::Param* s = store.add("s", 4, 5, 1.5, rng);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(4, 5);
    mask(0, 2) = 0.0;
    mask(1, 0) = mask(1, 1) = 0.0;
    mask.row(3).setZero();  // fully masked row

    Tape t(true);
    const Ref w = t.masked_softmax_rows(t.leaf(*s), mask);
    for (int r = 0; r < 3; ++r) CHECK(w->value.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w->value(0, 2) == 0.0);
    CHECK(w->value(1, 0) == 0.0);
    CHECK(w->value(1, 1) == 0.0);
    CHECK(w->value.row(3).cwiseAbs().sum() == 0.0);

    // masked inputs cannot influence the output, even at extreme magnitude
    const double keep = s->value(0, 2);
    s->value(0, 2) = 1e308;
    Tape t2(false);
    const Ref w2 = t2.masked_softmax_rows(t2.leaf(*s), mask);
    s->value(0, 2) = keep;
    CHECK((w2->value - w->value).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd weights = random_mat(4, 5, rng);
    check_grads(store.all(), [&, mask](Tape& tb) {
        Ref ww = tb.masked_softmax_rows(tb.leaf(*s), mask);
        return tb.mean_all(tb.mul(ww, tb.constant(weights)));
    });
}

TEST_CASE("structural op gradients match finite differences") {
    Rng rng(10);
    nn::ParamStore store;
    nn::Param* a = store.add("a", 3, 2, 1.0, rng);
    nn::Param* b = store.add("b", 3, 3, 1.0, rng);
    nn::Param* sc = store.add("sc", 3, 1, 1.0, rng);
    const std::vector<int> idx = {1, 3, 0};
    check_grads(store.all(), [&](Tape& t) {
        Ref cat = t.concat_cols({t.leaf(*a), t.leaf(*b)});      // 3 x 5
        Ref sl = t.slice_cols(cat, 1, 4);                       // 3 x 4
        Ref scl = t.col_scale(sl, t.leaf(*sc));                 // 3 x 4
        Ref g = t.gather_cols(scl, idx);                        // 3 x 1
        Ref all = t.sub(t.sum_all(scl), t.mean_all(g));
        return all;
    });
}

TEST_CASE("log softmax is consistent and differentiates correctly") {
    Rng rng(11);
    nn::ParamStore store;
    nn::Param* logits = store.add("logits", 4, 6, 2.0, rng);

    Tape t(true);
    const Ref lsm = t.log_softmax_rows(t.leaf(*logits));
    for (int r = 0; r < 4; ++r)
        CHECK(lsm->value.row(r).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));

    Tape ts(false);
    const Ref sm = ts.softmax_rows(ts.constant(logits->value));
    CHECK((lsm->value.array().exp().matrix() - sm->value).cwiseAbs().maxCoeff() < 1e-9);

    const std::vector<int> picked = {2, 0, 5, 1};
    check_grads(store.all(), [&](Tape& tb) {
        Ref l = tb.log_softmax_rows(tb.leaf(*logits));
        return tb.mean_all(tb.gather_cols(l, picked));
    });
}

TEST_CASE("gumbel straight-through is binary forward, soft backward") {
    Rng rng(12);
    nn::ParamStore store;
    nn::Param* logits = store.add("logits", 1, 2, 0.0, rng);
    logits->value << 10.0, -10.0;

    int col0 = 0;
    const int draws = 10000;
    Rng grng(13);
    for (int k = 0; k < draws; ++k) {
        Tape t(false);
        const Ref y = nn::gumbel_softmax_st(t, t.leaf(*logits), 1.0, grng, true);
        CHECK((y->value(0, 0) == 1.0 || y->value(0, 1) == 1.0));
        CHECK(y->value.sum() == 1.0);
        if (y->value(0, 0) == 1.0) ++col0;
    }
    CHECK(col0 >= int(draws * 0.999));

    // greedy mode with no sampling is the argmax one-hot
    Tape tg(false);
    const Ref yg = nn::gumbel_softmax_st(tg, tg.leaf(*logits), 1.0, grng, false);
    CHECK(yg->value(0, 0) == 1.0);
    CHECK(yg->value(0, 1) == 0.0);

    // the relaxed path (fixed noise) differentiates per finite differences
    logits->value << 0.3, -0.4;
    Eigen::MatrixXd noise(1, 2);
    noise << 0.81, -0.23;
    const Eigen::MatrixXd v = random_mat(1, 2, rng);
    check_grads(store.all(), [&](Tape& t) {
        Ref pre = t.add(t.leaf(*logits), t.constant(noise));
        Ref soft = t.softmax_rows(t.scale(pre, 1.0));
        return t.mean_all(t.mul(soft, t.constant(v)));
    });

    // straight-through gradient equals the relaxed gradient at the same noise
    Tape t1(true);
    {
        Ref pre = t1.add(t1.leaf(*logits), t1.constant(noise));
        Ref soft = t1.softmax_rows(pre);
        Eigen::MatrixXd hard = Eigen::MatrixXd::Zero(1, 2);
        hard(0, 0) = 1.0;
        Ref st = t1.add(t1.constant(hard - soft->value), soft);
        t1.backward(t1.mean_all(t1.mul(st, t1.constant(v))));
        logits->zero_grad();
        t1.accumulate_param_grads();
    }
    const Eigen::MatrixXd st_grad = logits->grad;
    Tape t2(true);
    {
        Ref pre = t2.add(t2.leaf(*logits), t2.constant(noise));
        Ref soft = t2.softmax_rows(pre);
        t2.backward(t2.mean_all(t2.mul(soft, t2.constant(v))));
        logits->zero_grad();
        t2.accumulate_param_grads();
    }
    CHECK((st_grad - logits->grad).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam minimizes a quadratic with bias-corrected steps") {
    nn::ParamStore store;
    nn::Param* x = store.add_fill("x", 1, 1, 5.0);
    nn::Adam opt(store.all(), 0.05);
    for (int k = 0; k < 800; ++k) {
        opt.zero_grad();
        Tape t(true);
        const Ref d = t.add_scalar(t.leaf(*x), -3.0);
        t.backward(t.mean_all(t.mul(d, d)));
        t.accumulate_param_grads();
        opt.step();
    }
    CHECK(x->value(0, 0) == doctest::Approx(3.0).epsilon(1e-2));

    // first update moves by exactly lr in the gradient direction
    nn::ParamStore s2;
    nn::Param* y = s2.add_fill("y", 1, 1, 2.0);
    nn::Adam opt2(s2.all(), 0.01);
    opt2.zero_grad();
    y->grad(0, 0) = 7.0;
    opt2.step();
    CHECK(y->value(0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("soft update interpolates toward the online parameters") {
    Rng rng(14);
    nn::ParamStore online, target;
    nn::Param* po = online.add("p", 2, 2, 1.0, rng);
    nn::Param* pt = target.add_fill("p", 2, 2, 0.0);
    po->value.setConstant(1.0);

    nn::soft_update(target.all(), online.all(), 1.0);
    CHECK(pt->value.cwiseAbs().maxCoeff() == 0.0);

    nn::soft_update(target.all(), online.all(), 0.995);
    CHECK(pt->value(0, 0) == doctest::Approx(0.005).epsilon(1e-12));

    nn::soft_update(target.all(), online.all(), 0.0);
    CHECK(pt->value(1, 1) == doctest::Approx(1.0));

    nn::ParamStore bad;
    bad.add_fill("p", 3, 2, 0.0);
    CHECK_THROWS_AS(nn::soft_update(bad.all(), online.all(), 0.5), std::logic_error);
}

TEST_CASE("disabled tape returns values without recording gradients") {
    Rng rng(15);
    nn::ParamStore store;
    nn::Param* w = store.add("w", 2, 2, 1.0, rng);
    Tape t(false);
    const Ref out = t.mean_all(t.mul(t.leaf(*w), t.leaf(*w)));
    CHECK(std::isfinite(out->value(0, 0)));
    t.backward(out);  // no-op
    w->zero_grad();
    t.accumulate_param_grads();
    CHECK(w->grad.cwiseAbs().maxCoeff() == 0.0);
}
