#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "subnet/rng.hpp"

namespace subnet::nn {

// One learnable tensor plus its gradient and Adam state. Names are stable
// identifiers used by checkpoints and target-network pairing.
struct Param {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Eigen::MatrixXd adam_m;
    Eigen::MatrixXd adam_v;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters in registration order (the order checkpoints serialize).
class ParamStore {
  public:
    // Uniform init in [-bound, bound].
    Param* add(const std::string& name, int rows, int cols, double bound, Rng& rng);
    Param* add_fill(const std::string& name, int rows, int cols, double fill);
    Param* find(const std::string& name) const;
    const std::vector<Param*>& all() const { return order_; }

  private:
    std::vector<std::unique_ptr<Param>> owned_;
    std::vector<Param*> order_;
    std::unordered_map<std::string, Param*> by_name_;
};

struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    std::function<void()> backward;
    std::vector<std::shared_ptr<Node>> parents;
};
using Ref = std::shared_ptr<Node>;

// Eager reverse-mode tape over Eigen matrices. Creation order is the
// topological order; backward() walks it in reverse. A parameter maps to one
// leaf node per tape, so gradients of shared weights accumulate naturally.
// With grad disabled, ops produce value-only nodes and record nothing.
class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Ref leaf(Param& p);
    Ref constant(Eigen::MatrixXd v);

    Ref matmul(const Ref& a, const Ref& b);
    Ref add(const Ref& a, const Ref& b);          // same shape
    Ref add_rowvec(const Ref& x, const Ref& b);   // b is 1 x F, broadcast over rows
    Ref sub(const Ref& a, const Ref& b);
    Ref mul(const Ref& a, const Ref& b);          // elementwise
    Ref scale(const Ref& a, double k);
    Ref add_scalar(const Ref& a, double k);
    Ref relu(const Ref& a);
    Ref tanh(const Ref& a);
    Ref sigmoid(const Ref& a);
    Ref exp(const Ref& a);
    Ref log(const Ref& a);
    Ref concat_cols(const std::vector<Ref>& xs);
    Ref slice_cols(const Ref& x, int start, int count);
    Ref rowwise_sum(const Ref& x);                // B x F -> B x 1
    Ref col_scale(const Ref& x, const Ref& s);    // scales row r by s(r, 0)
    Ref gather_cols(const Ref& x, const std::vector<int>& idx);  // B x 1
    Ref sum_all(const Ref& x);                    // -> 1 x 1
    Ref mean_all(const Ref& x);
    Ref softmax_rows(const Ref& x);
    Ref log_softmax_rows(const Ref& x);
    // Row softmax restricted to mask == 1 columns; masked entries are exactly
    // zero and never touched (no exp evaluated), an all-masked row is all
    // zeros.
    Ref masked_softmax_rows(const Ref& x, const Eigen::MatrixXd& mask);
    // w_j = m_j exp(u_j - c) / sum_k m_k exp(u_k - c), with the mask itself a
    // differentiable node (straight-through hard attention trains through it).
    // Entries with m_j = 0 are exactly zero and their scores are never
    // exponentiated; a fully masked row is all zeros.
    Ref attn_softmax_rows(const Ref& scores, const Ref& mask);
    Ref detach(const Ref& x) { return constant(x->value); }

    void backward(const Ref& loss);               // loss must be 1 x 1
    // Adds every parameter leaf's gradient into its Param::grad.
    void accumulate_param_grads();
    bool grad_enabled() const { return grad_enabled_; }

  private:
    Ref make(Eigen::MatrixXd v, std::vector<Ref> parents, std::function<void()> bw);

    std::vector<Ref> order_;
    std::unordered_map<Param*, Ref> leaves_;
    bool grad_enabled_;
};

// theta_target = tau * theta_target + (1 - tau) * theta_online, elementwise.
void soft_update(const std::vector<Param*>& target, const std::vector<Param*>& online,
                 double tau);
void copy_params(const std::vector<Param*>& dst, const std::vector<Param*>& src);

class Adam {
  public:
    Adam(std::vector<Param*> params, double lr);
    void zero_grad();
    void step();

  private:
    std::vector<Param*> ps_;
    double lr_;
    int64_t t_ = 0;
};

class Linear {
  public:
    Linear() = default;
    Linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng);
    Ref forward(Tape& t, const Ref& x) const;  // x: B x in -> B x out

    Param* W = nullptr;  // in x out
    Param* b = nullptr;  // 1 x out
};

// Stack of Linear layers with ReLU between them; the last layer is linear.
class MLP {
  public:
    MLP() = default;
    MLP(ParamStore& store, const std::string& prefix, const std::vector<int>& dims, Rng& rng);
    Ref forward(Tape& t, Ref x) const;

  private:
    std::vector<Linear> layers_;
};

// Gated recurrent unit cell:
//   r = sig(xWxr + bxr + hWhr + bhr)
//   z = sig(xWxz + bxz + hWhz + bhz)
//   n = tanh(xWxn + bxn + r .* (hWhn + bhn))
//   h' = n + z .* (h - n)
class GRUCell {
  public:
    GRUCell() = default;
    GRUCell(ParamStore& store, const std::string& prefix, int in, int hidden, Rng& rng);
    Ref forward(Tape& t, const Ref& x, const Ref& h) const;
    int hidden_size() const { return hidden_; }

  private:
    Linear xr_, hr_, xz_, hz_, xn_, hn_;
    int hidden_ = 0;
};

// Straight-through Gumbel-softmax over rows of logits: the forward value is
// the one-hot argmax of the perturbed softmax, the gradient is the softmax's.
// Pass sample = false to skip the Gumbel noise (greedy evaluation mode).
Ref gumbel_softmax_st(Tape& t, const Ref& logits, double temperature, Rng& rng, bool sample);

}  // namespace subnet::nn
