#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "fdimon/rng.hpp"

namespace fdimon {

enum class OutputActivation {
  Affine,       // critic head
  BoundedTanh,  // actor head: lo + (hi - lo)/2 * (tanh(z) + 1)
};

// Feed-forward net with three ReLU hidden layers. Batch convention: one
// sample per row.
struct Mlp {
  std::vector<Eigen::MatrixXd> W;  // W[i]: out x in
  std::vector<Eigen::VectorXd> b;
  OutputActivation out_act = OutputActivation::Affine;
  Eigen::VectorXd act_lo, act_hi;  // only for BoundedTanh

  int input_dim() const { return static_cast<int>(W.front().cols()); }
  int output_dim() const { return static_cast<int>(W.back().rows()); }
  int n_layers() const { return static_cast<int>(W.size()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  bool all_finite() const;
};

// Fan-in uniform init (+-1/sqrt(fan_in)), final layer +-3e-3.
Mlp make_mlp(int in, const std::array<int, 3>& hidden, int out, OutputActivation act,
             Rng& rng, Eigen::VectorXd act_lo = {}, Eigen::VectorXd act_hi = {});

// Activations recorded during a batched forward pass, for backprop.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[i] = layer i output
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
};

Eigen::MatrixXd forward_cached(const Mlp& net, const Eigen::MatrixXd& inputs,
                               ForwardCache& cache);

struct Grads {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
  Eigen::MatrixXd dinput;  // gradient w.r.t. the input rows

  static Grads zeros_like(const Mlp& net);
  void scale(double s);
};

// Reverse-mode gradients of sum_batch(output . upstream_row) w.r.t. all
// parameters and the input. ReLU uses subgradient 0 at exactly 0.
Grads backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream);

// Single-sample convenience matching the (net, input, upstream) contract.
Grads gradients(const Mlp& net, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream);

// Adam optimizer state, one slot per parameter tensor.
struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  static AdamState zeros_like(const Mlp& net);
};

void adam_update(Mlp& net, AdamState& state, const Grads& grads, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace fdimon
