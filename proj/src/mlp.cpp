#include "fdimon/mlp.hpp"

#include <cmath>

#include "fdimon/errors.hpp"

namespace fdimon {

namespace {

Eigen::MatrixXd apply_output(const Mlp& net, const Eigen::MatrixXd& z) {
  if (net.out_act == OutputActivation::Affine) return z;
  Eigen::MatrixXd out = z.array().tanh();
  for (int c = 0; c < out.cols(); ++c) {
    const double center = 0.5 * (net.act_lo(c) + net.act_hi(c));
    const double half = 0.5 * (net.act_hi(c) - net.act_lo(c));
    out.col(c) = (out.col(c).array() * half + center).matrix();
  }
  return out;
}

}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
  return forward_batch(input.transpose()).row(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_dim()) throw UsageError("Mlp::forward: input width mismatch");
  if (!inputs.allFinite()) throw UsageError("Mlp::forward: non-finite input");
  Eigen::MatrixXd h = inputs;
  const int L = n_layers();
  for (int i = 0; i < L; ++i) {
    Eigen::MatrixXd z = h * W[i].transpose();
    z.rowwise() += b[i].transpose();
    if (i + 1 < L)
      h = z.cwiseMax(0.0);
    else
      h = apply_output(*this, z);
  }
  return h;
}

bool Mlp::all_finite() const {
  for (const auto& w : W)
    if (!w.allFinite()) return false;
  for (const auto& v : b)
    if (!v.allFinite()) return false;
  return true;
}

Mlp make_mlp(int in, const std::array<int, 3>& hidden, int out, OutputActivation act,
             Rng& rng, Eigen::VectorXd act_lo, Eigen::VectorXd act_hi) {
  Mlp net;
  net.out_act = act;
  net.act_lo = std::move(act_lo);
  net.act_hi = std::move(act_hi);
  if (act == OutputActivation::BoundedTanh &&
      (net.act_lo.size() != out || net.act_hi.size() != out))
    throw ConfigError("make_mlp: BoundedTanh needs bounds of the output width");

  const std::array<int, 5> widths = {in, hidden[0], hidden[1], hidden[2], out};
  for (int i = 0; i < 4; ++i) {
    const int rows = widths[i + 1];
    const int cols = widths[i];
    const double bound = (i == 3) ? 3e-3 : 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-bound, bound);
    Eigen::VectorXd bias(rows);
    for (int r = 0; r < rows; ++r) bias(r) = rng.uniform(-bound, bound);
    net.W.push_back(std::move(w));
    net.b.push_back(std::move(bias));
  }
  return net;
}

Eigen::MatrixXd forward_cached(const Mlp& net, const Eigen::MatrixXd& inputs,
                               ForwardCache& cache) {
  const int L = net.n_layers();
  cache.post.assign(1, inputs);
  cache.pre.clear();
  cache.pre.reserve(L);
  Eigen::MatrixXd h = inputs;
  for (int i = 0; i < L; ++i) {
    Eigen::MatrixXd z = h * net.W[i].transpose();
    z.rowwise() += net.b[i].transpose();
    cache.pre.push_back(z);
    if (i + 1 < L)
      h = z.cwiseMax(0.0);
    else
      h = apply_output(net, z);
    cache.post.push_back(h);
  }
  return h;
}

Grads Grads::zeros_like(const Mlp& net) {
  Grads g;
  for (const auto& w : net.W) g.dW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : net.b) g.db.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

void Grads::scale(double s) {
  for (auto& w : dW) w *= s;
  for (auto& b : db) b *= s;
  if (dinput.size() > 0) dinput *= s;
}

Grads backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream) {
  const int L = net.n_layers();
  Grads g;
  g.dW.resize(L);
  g.db.resize(L);

  Eigen::MatrixXd delta;  // dLoss/dz at the current layer
  if (net.out_act == OutputActivation::Affine) {
    delta = upstream;
  } else {
    // y = center + half * tanh(z)  =>  dy/dz = half * (1 - tanh(z)^2)
    Eigen::MatrixXd t = cache.pre[L - 1].array().tanh();
    delta = upstream.cwiseProduct((1.0 - t.array().square()).matrix());
    for (int c = 0; c < delta.cols(); ++c)
      delta.col(c) *= 0.5 * (net.act_hi(c) - net.act_lo(c));
  }

  for (int i = L - 1; i >= 0; --i) {
    g.dW[i] = delta.transpose() * cache.post[i];
    g.db[i] = delta.colwise().sum();
    if (i > 0) {
      Eigen::MatrixXd back = delta * net.W[i];
      // ReLU mask: subgradient 0 at exactly 0
      delta = back.cwiseProduct(
          (cache.pre[i - 1].array() > 0.0).cast<double>().matrix());
    } else {
      g.dinput = delta * net.W[0];
    }
  }
  return g;
}

Grads gradients(const Mlp& net, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) {
  ForwardCache cache;
  forward_cached(net, input.transpose(), cache);
  return backward(net, cache, upstream.transpose());
}

AdamState AdamState::zeros_like(const Mlp& net) {
  AdamState s;
  for (const auto& w : net.W) {
    s.mW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.vW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : net.b) {
    s.mb.push_back(Eigen::VectorXd::Zero(b.size()));
    s.vb.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return s;
}

void adam_update(Mlp& net, AdamState& state, const Grads& grads, double lr,
                 double beta1, double beta2, double eps) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (int i = 0; i < net.n_layers(); ++i) {
    state.mW[i] = beta1 * state.mW[i] + (1.0 - beta1) * grads.dW[i];
    state.vW[i] = beta2 * state.vW[i] + (1.0 - beta2) * grads.dW[i].cwiseProduct(grads.dW[i]);
    net.W[i] -= lr * (state.mW[i] / bc1).cwiseQuotient(
        ((state.vW[i] / bc2).cwiseSqrt().array() + eps).matrix());
    state.mb[i] = beta1 * state.mb[i] + (1.0 - beta1) * grads.db[i];
    state.vb[i] = beta2 * state.vb[i] + (1.0 - beta2) * grads.db[i].cwiseProduct(grads.db[i]);
    net.b[i] -= lr * (state.mb[i] / bc1).cwiseQuotient(
        ((state.vb[i] / bc2).cwiseSqrt().array() + eps).matrix());
  }
}

}  // namespace fdimon
