#include "subnet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace subnet::nn {

Param* ParamStore::add(const std::string& name, int rows, int cols, double bound, Rng& rng) {
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) p->value(r, c) = rng.uniform(-bound, bound);
    p->zero_grad();
    Param* raw = p.get();
    owned_.push_back(std::move(p));
    order_.push_back(raw);
    if (!by_name_.emplace(name, raw).second)
        throw std::logic_error("duplicate parameter name: " + name);
    return raw;
}

Param* ParamStore::add_fill(const std::string& name, int rows, int cols, double fill) {
    Rng dummy(0);
    Param* p = add(name, rows, cols, 0.0, dummy);
    p->value.setConstant(fill);
    return p;
}

Param* ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

Ref Tape::make(Eigen::MatrixXd v, std::vector<Ref> parents, std::function<void()>) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    if (grad_enabled_) {
        for (const auto& p : parents)
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        if (n->requires_grad) {
            n->parents = std::move(parents);
            order_.push_back(n);
        }
    }
    return n;
}

Ref Tape::leaf(Param& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return it->second;
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->requires_grad = grad_enabled_;
    if (grad_enabled_) order_.push_back(n);
    leaves_.emplace(&p, n);
    return n;
}

Ref Tape::constant(Eigen::MatrixXd v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Ref Tape::matmul(const Ref& a, const Ref& b) {
    Node* ap = a.get();
    Node* bp = b.get();
    Ref out = make(a->value * b->value, {a, b}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, bp, op]() {
            if (ap->requires_grad) ap->grad.noalias() += op->grad * bp->value.transpose();
            if (bp->requires_grad) bp->grad.noalias() += ap->value.transpose() * op->grad;
        };
    return out;
}

Ref Tape::add(const Ref& a, const Ref& b) {
    Node* ap = a.get();
    Node* bp = b.get();
    Ref out = make(a->value + b->value, {a, b}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, bp, op]() {
            if (ap->requires_grad) ap->grad += op->grad;
            if (bp->requires_grad) bp->grad += op->grad;
        };
    return out;
}

Ref Tape::add_rowvec(const Ref& x, const Ref& b) {
    Node* xp = x.get();
    Node* bp = b.get();
    Eigen::MatrixXd v = x->value;
    v.rowwise() += b->value.row(0);
    Ref out = make(std::move(v), {x, b}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, bp, op]() {
            if (xp->requires_grad) xp->grad += op->grad;
            if (bp->requires_grad) bp->grad.row(0) += op->grad.colwise().sum();
        };
    return out;
}

Ref Tape::sub(const Ref& a, const Ref& b) {
    Node* ap = a.get();
    Node* bp = b.get();
    Ref out = make(a->value - b->value, {a, b}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, bp, op]() {
            if (ap->requires_grad) ap->grad += op->grad;
            if (bp->requires_grad) bp->grad -= op->grad;
        };
    return out;
}

Ref Tape::mul(const Ref& a, const Ref& b) {
    Node* ap = a.get();
    Node* bp = b.get();
    Ref out = make(a->value.cwiseProduct(b->value), {a, b}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, bp, op]() {
            if (ap->requires_grad) ap->grad += op->grad.cwiseProduct(bp->value);
            if (bp->requires_grad) bp->grad += op->grad.cwiseProduct(ap->value);
        };
    return out;
}

Ref Tape::scale(const Ref& a, double k) {
    Node* ap = a.get();
    Ref out = make(a->value * k, {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op, k]() {
            if (ap->requires_grad) ap->grad += op->grad * k;
        };
    return out;
}

Ref Tape::add_scalar(const Ref& a, double k) {
    Node* ap = a.get();
    Ref out = make(a->value.array() + k, {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad) ap->grad += op->grad;
        };
    return out;
}

Ref Tape::relu(const Ref& a) {
    Node* ap = a.get();
    Ref out = make(a->value.cwiseMax(0.0), {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad)
                ap->grad.array() +=
                    op->grad.array() * (ap->value.array() > 0.0).cast<double>();
        };
    return out;
}

Ref Tape::tanh(const Ref& a) {
    Node* ap = a.get();
    Ref out = make(a->value.array().tanh(), {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad)
                ap->grad.array() += op->grad.array() * (1.0 - op->value.array().square());
        };
    return out;
}

Ref Tape::sigmoid(const Ref& a) {
    Node* ap = a.get();
    Eigen::MatrixXd v = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
    Ref out = make(std::move(v), {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad)
                ap->grad.array() +=
                    op->grad.array() * op->value.array() * (1.0 - op->value.array());
        };
    return out;
}

Ref Tape::exp(const Ref& a) {
    Node* ap = a.get();
    Ref out = make(a->value.array().exp(), {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad) ap->grad.array() += op->grad.array() * op->value.array();
        };
    return out;
}

Ref Tape::log(const Ref& a) {
    Node* ap = a.get();
    Ref out = make(a->value.array().log(), {a}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [ap, op]() {
            if (ap->requires_grad) ap->grad.array() += op->grad.array() / ap->value.array();
        };
    return out;
}

Ref Tape::concat_cols(const std::vector<Ref>& xs) {
    int cols = 0;
    const int rows = int(xs.front()->value.rows());
    for (const auto& x : xs) cols += int(x->value.cols());
    Eigen::MatrixXd v(rows, cols);
    int at = 0;
    for (const auto& x : xs) {
        v.middleCols(at, int(x->value.cols())) = x->value;
        at += int(x->value.cols());
    }
    std::vector<Node*> raw;
    raw.reserve(xs.size());
    for (const auto& x : xs) raw.push_back(x.get());
    Ref out = make(std::move(v), xs, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [raw, op]() {
            int at2 = 0;
            for (Node* x : raw) {
                const int w = int(x->value.cols());
                if (x->requires_grad) x->grad += op->grad.middleCols(at2, w);
                at2 += w;
            }
        };
    return out;
}

Ref Tape::slice_cols(const Ref& x, int start, int count) {
    Node* xp = x.get();
    Ref out = make(x->value.middleCols(start, count), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op, start, count]() {
            if (xp->requires_grad) xp->grad.middleCols(start, count) += op->grad;
        };
    return out;
}

Ref Tape::rowwise_sum(const Ref& x) {
    Node* xp = x.get();
    Ref out = make(x->value.rowwise().sum(), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op]() {
            if (xp->requires_grad) xp->grad.colwise() += op->grad.col(0);
        };
    return out;
}

Ref Tape::col_scale(const Ref& x, const Ref& s) {
    Node* xp = x.get();
    Node* sp = s.get();
    Eigen::MatrixXd v = x->value.array().colwise() * s->value.col(0).array();
    Ref out = make(std::move(v), {x, s}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, sp, op]() {
            if (xp->requires_grad)
                xp->grad.array() += op->grad.array().colwise() * sp->value.col(0).array();
            if (sp->requires_grad)
                sp->grad.col(0) += op->grad.cwiseProduct(xp->value).rowwise().sum();
        };
    return out;
}

Ref Tape::gather_cols(const Ref& x, const std::vector<int>& idx) {
    Node* xp = x.get();
    const int rows = int(x->value.rows());
    Eigen::MatrixXd v(rows, 1);
    for (int r = 0; r < rows; ++r) v(r, 0) = x->value(r, idx[size_t(r)]);
    Ref out = make(std::move(v), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op, idx]() {
            if (!xp->requires_grad) return;
            for (int r = 0; r < int(op->grad.rows()); ++r)
                xp->grad(r, idx[size_t(r)]) += op->grad(r, 0);
        };
    return out;
}

Ref Tape::sum_all(const Ref& x) {
    Node* xp = x.get();
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = x->value.sum();
    Ref out = make(std::move(v), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op]() {
            if (xp->requires_grad) xp->grad.array() += op->grad(0, 0);
        };
    return out;
}

Ref Tape::mean_all(const Ref& x) {
    Node* xp = x.get();
    const double inv = 1.0 / double(x->value.size());
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = x->value.sum() * inv;
    Ref out = make(std::move(v), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op, inv]() {
            if (xp->requires_grad) xp->grad.array() += op->grad(0, 0) * inv;
        };
    return out;
}

Ref Tape::masked_softmax_rows(const Ref& x, const Eigen::MatrixXd& mask) {
    Node* xp = x.get();
    const int rows = int(x->value.rows());
    const int cols = int(x->value.cols());
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(rows, cols);
    for (int r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c)
            if (mask(r, c) != 0.0) mx = std::max(mx, x->value(r, c));
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double sum = 0.0;
        for (int c = 0; c < cols; ++c)
            if (mask(r, c) != 0.0) {
                v(r, c) = std::exp(x->value(r, c) - mx);
                sum += v(r, c);
            }
        for (int c = 0; c < cols; ++c)
            if (mask(r, c) != 0.0) v(r, c) /= sum;
    }
    Ref out = make(std::move(v), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op, mask]() {
            if (!xp->requires_grad) return;
            const int rr = int(op->value.rows());
            const int cc = int(op->value.cols());
            for (int r = 0; r < rr; ++r) {
                double dot = 0.0;
                for (int c = 0; c < cc; ++c)
                    if (mask(r, c) != 0.0) dot += op->grad(r, c) * op->value(r, c);
                for (int c = 0; c < cc; ++c)
                    if (mask(r, c) != 0.0)
                        xp->grad(r, c) += op->value(r, c) * (op->grad(r, c) - dot);
            }
        };
    return out;
}

Ref Tape::attn_softmax_rows(const Ref& scores, const Ref& mask) {
    Node* up = scores.get();
    Node* mp = mask.get();
    if (up->value.rows() != mp->value.rows() || up->value.cols() != mp->value.cols())
        throw std::logic_error("attn_softmax_rows: shape mismatch");
    const int rows = int(up->value.rows());
    const int cols = int(up->value.cols());
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(rows, cols);
    // e and ssum are kept for the backward pass; e is clamped so that the
    // mask gradient of an extreme masked score stays finite.
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(rows, cols);
    Eigen::VectorXd ssum = Eigen::VectorXd::Zero(rows);
    for (int r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c)
            if (mp->value(r, c) > 0.0) mx = std::max(mx, up->value(r, c));
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            e(r, c) = std::exp(std::min(up->value(r, c) - mx, 30.0));
            if (mp->value(r, c) > 0.0) {
                v(r, c) = mp->value(r, c) * e(r, c);
                sum += v(r, c);
            }
        }
        ssum(r) = sum;
        for (int c = 0; c < cols; ++c)
            if (mp->value(r, c) > 0.0) v(r, c) /= sum;
    }
    Ref out = make(std::move(v), {scores, mask}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [up, mp, op, e = std::move(e), ssum = std::move(ssum)]() {
            const int rr = int(op->value.rows());
            const int cc = int(op->value.cols());
            for (int r = 0; r < rr; ++r) {
                if (ssum(r) <= 0.0) continue;
                double dot = 0.0;
                for (int c = 0; c < cc; ++c) dot += op->grad(r, c) * op->value(r, c);
                for (int c = 0; c < cc; ++c) {
                    const double gc = op->grad(r, c) - dot;
                    if (up->requires_grad)
                        up->grad(r, c) += op->value(r, c) * gc;
                    if (mp->requires_grad)
                        mp->grad(r, c) += e(r, c) / ssum(r) * gc;
                }
            }
        };
    return out;
}

Ref Tape::softmax_rows(const Ref& x) {
    return masked_softmax_rows(
        x, Eigen::MatrixXd::Ones(x->value.rows(), x->value.cols()));
}

Ref Tape::log_softmax_rows(const Ref& x) {
    Node* xp = x.get();
    const int rows = int(x->value.rows());
    const int cols = int(x->value.cols());
    Eigen::MatrixXd v(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const double mx = x->value.row(r).maxCoeff();
        const double lse = std::log((x->value.row(r).array() - mx).exp().sum()) + mx;
        v.row(r) = x->value.row(r).array() - lse;
    }
    Ref out = make(std::move(v), {x}, nullptr);
    Node* op = out.get();
    if (out->requires_grad)
        out->backward = [xp, op]() {
            if (!xp->requires_grad) return;
            const Eigen::VectorXd rowsum = op->grad.rowwise().sum();
            xp->grad.array() +=
                op->grad.array() -
                op->value.array().exp().colwise() * rowsum.array();
        };
    return out;
}

void Tape::backward(const Ref& loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
        throw std::logic_error("backward() expects a 1x1 loss node");
    if (!grad_enabled_ || !loss->requires_grad) return;
    for (auto& n : order_) n->grad.setZero(n->value.rows(), n->value.cols());
    loss->grad.setZero(1, 1);
    loss->grad(0, 0) = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it)
        if ((*it)->requires_grad && (*it)->backward) (*it)->backward();
}

void Tape::accumulate_param_grads() {
    for (auto& [param, node] : leaves_)
        if (node->grad.size() > 0) param->grad += node->grad;
}

void soft_update(const std::vector<Param*>& target, const std::vector<Param*>& online,
                 double tau) {
    if (target.size() != online.size())
        throw std::logic_error("soft_update: parameter list size mismatch");
    for (size_t i = 0; i < target.size(); ++i) {
        if (target[i]->value.rows() != online[i]->value.rows() ||
            target[i]->value.cols() != online[i]->value.cols())
            throw std::logic_error("soft_update: shape mismatch at " + target[i]->name);
        target[i]->value = tau * target[i]->value + (1.0 - tau) * online[i]->value;
    }
}

void copy_params(const std::vector<Param*>& dst, const std::vector<Param*>& src) {
    soft_update(dst, src, 0.0);
}

Adam::Adam(std::vector<Param*> params, double lr) : ps_(std::move(params)), lr_(lr) {
    for (Param* p : ps_) {
        p->adam_m.setZero(p->value.rows(), p->value.cols());
        p->adam_v.setZero(p->value.rows(), p->value.cols());
    }
}

void Adam::zero_grad() {
    for (Param* p : ps_) p->zero_grad();
}

void Adam::step() {
    static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    for (Param* p : ps_) {
        p->adam_m = b1 * p->adam_m + (1.0 - b1) * p->grad;
        p->adam_v = b2 * p->adam_v + (1.0 - b2) * p->grad.cwiseProduct(p->grad);
        p->value.array() -=
            lr_ * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + eps);
    }
}

Linear::Linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(in));
    W = store.add(prefix + ".W", in, out, bound, rng);
    b = store.add(prefix + ".b", 1, out, bound, rng);
}

Ref Linear::forward(Tape& t, const Ref& x) const {
    return t.add_rowvec(t.matmul(x, t.leaf(*W)), t.leaf(*b));
}

MLP::MLP(ParamStore& store, const std::string& prefix, const std::vector<int>& dims, Rng& rng) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.emplace_back(store, prefix + ".fc" + std::to_string(i), dims[i], dims[i + 1],
                             rng);
}

Ref MLP::forward(Tape& t, Ref x) const {
    for (size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i].forward(t, x);
        if (i + 1 < layers_.size()) x = t.relu(x);
    }
    return x;
}

GRUCell::GRUCell(ParamStore& store, const std::string& prefix, int in, int hidden, Rng& rng)
    : hidden_(hidden) {
    Rng rng_w = rng.derive(prefix);
    const double bound = 1.0 / std::sqrt(double(hidden));
    auto lin = [&](const char* tag, int d_in) {
        Linear l;
        l.W = store.add(prefix + "." + tag + ".W", d_in, hidden, bound, rng_w);
        l.b = store.add(prefix + "." + tag + ".b", 1, hidden, bound, rng_w);
        return l;
    };
    xr_ = lin("xr", in);
    hr_ = lin("hr", hidden);
    xz_ = lin("xz", in);
    hz_ = lin("hz", hidden);
    xn_ = lin("xn", in);
    hn_ = lin("hn", hidden);
}

Ref GRUCell::forward(Tape& t, const Ref& x, const Ref& h) const {
    const Ref r = t.sigmoid(t.add(xr_.forward(t, x), hr_.forward(t, h)));
    const Ref z = t.sigmoid(t.add(xz_.forward(t, x), hz_.forward(t, h)));
    const Ref n = t.tanh(t.add(xn_.forward(t, x), t.mul(r, hn_.forward(t, h))));
    return t.add(n, t.mul(z, t.sub(h, n)));
}

Ref gumbel_softmax_st(Tape& t, const Ref& logits, double temperature, Rng& rng, bool sample) {
    Ref pre = logits;
    if (sample) {
        Eigen::MatrixXd g(logits->value.rows(), logits->value.cols());
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c)
                g(r, c) = -std::log(-std::log(rng.uniform_pos()));
        pre = t.add(logits, t.constant(std::move(g)));
    }
    const Ref soft = t.softmax_rows(t.scale(pre, 1.0 / temperature));
    Eigen::MatrixXd hard = Eigen::MatrixXd::Zero(soft->value.rows(), soft->value.cols());
    for (int r = 0; r < hard.rows(); ++r) {
        int best = 0;
        soft->value.row(r).maxCoeff(&best);
        hard(r, best) = 1.0;
    }
    // value = hard, gradient = soft's
    return t.add(t.constant(hard - soft->value), soft);
}

}  // namespace subnet::nn
