#include "fdimon/region.hpp"

#include <cmath>
#include <utility>

#include "fdimon/errors.hpp"

namespace fdimon {

Box::Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.size() == 0) throw ConfigError("Box: lo/hi size mismatch");
  for (int i = 0; i < lo.size(); ++i)
    if (!(lo(i) < hi(i))) throw ConfigError("Box: lo must be < hi componentwise");
}

bool Box::contains(const Eigen::VectorXd& x) const {
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

Box Box::scaled(double depth) const {
  if (!(depth > 0.0 && depth <= 1.0)) throw UsageError("Box::scaled: depth must be in (0, 1]");
  return Box(depth * lo, depth * hi);
}

Eigen::VectorXd Box::sample_uniform(Rng& rng) const { return rng.uniform_vector(lo, hi); }

namespace {

// Joint transition of z = (x, x_hat) under the nominal loop u = -K x_hat,
// with the same measurement equation step() uses (y = Cx + Du + v):
//   x+     = A x - B K x_hat + w
//   x_hat+ = L C x + (A - (B + L D) K - L C) x_hat + L v
struct JointLoop {
  Eigen::MatrixXd M;   // 2n x 2n
  Eigen::MatrixXd Gw;  // 2n x n
  Eigen::MatrixXd Gv;  // 2n x m
};

JointLoop joint_loop(const SystemModel& mdl) {
  const int n = mdl.state_dim();
  const int m = mdl.output_dim();
  JointLoop jl;
  jl.M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  jl.M.topLeftCorner(n, n) = mdl.A;
  jl.M.topRightCorner(n, n) = -mdl.B * mdl.K;
  jl.M.bottomLeftCorner(n, n) = mdl.L * mdl.C;
  jl.M.bottomRightCorner(n, n) = mdl.A - (mdl.B + mdl.L * mdl.D) * mdl.K - mdl.L * mdl.C;
  jl.Gw = Eigen::MatrixXd::Zero(2 * n, n);
  jl.Gw.topRows(n).setIdentity();
  jl.Gv = Eigen::MatrixXd::Zero(2 * n, m);
  jl.Gv.bottomRows(n) = mdl.L;
  return jl;
}

}  // namespace

InvarianceCertificate is_invariant(const SystemModel& model, const Box& region, int steps,
                                   double sigma_mult) {
  if (steps < 1) throw UsageError("is_invariant: steps must be >= 1");
  if (!(sigma_mult > 0.0)) throw UsageError("is_invariant: sigma_mult must be positive");
  const int n = model.state_dim();
  const int m = model.output_dim();
  if (region.dim() != n) throw ConfigError("is_invariant: region dimension mismatch");

  const JointLoop jl = joint_loop(model);
  const Eigen::VectorXd bw = sigma_mult * model.Sigma_w.diagonal().cwiseSqrt();
  const Eigen::VectorXd bv = sigma_mult * model.Sigma_v.diagonal().cwiseSqrt();

  // x_i = Phi x0 + sum_j (Wcoef_j w_j + Vcoef_j v_j); coefficients are the
  // top blocks of M^{i-1-j} applied to the noise injection maps.
  std::vector<Eigen::MatrixXd> powers(steps + 1);
  powers[0] = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  for (int p = 1; p <= steps; ++p) {
    powers[p] = jl.M * powers[p - 1];
    if (!powers[p].allFinite())
      throw InstabilityError("is_invariant: coefficient computation overflowed");
  }
  const Eigen::MatrixXd Phi = powers[steps].topLeftCorner(n, n);  // z0 = (x0, 0)

  std::vector<Eigen::MatrixXd> Wcoef(steps), Vcoef(steps);
  for (int j = 0; j < steps; ++j) {
    const Eigen::MatrixXd& Mp = powers[steps - 1 - j];
    Wcoef[j] = Mp.topRows(n) * jl.Gw;
    Vcoef[j] = Mp.topRows(n) * jl.Gv;
  }

  InvarianceCertificate cert;
  cert.region = region;
  cert.steps = steps;
  cert.noise_bound_sigmas = sigma_mult;

  // Per coordinate, the extreme of the affine map over box x corner noise.
  int worst_coord = -1;
  double worst_violation = 0.0;
  bool worst_upper = true;
  for (int c = 0; c < n; ++c) {
    double hi_ext = 0.0, lo_ext = 0.0;
    for (int d = 0; d < n; ++d) {
      const double a = Phi(c, d);
      hi_ext += a >= 0.0 ? a * region.hi(d) : a * region.lo(d);
      lo_ext += a >= 0.0 ? a * region.lo(d) : a * region.hi(d);
    }
    double amp = 0.0;
    for (int j = 0; j < steps; ++j) {
      amp += Wcoef[j].row(c).cwiseAbs().dot(bw);
      amp += Vcoef[j].row(c).cwiseAbs().dot(bv);
    }
    hi_ext += amp;
    lo_ext -= amp;

    const double over = hi_ext - region.hi(c);
    const double under = region.lo(c) - lo_ext;
    if (over > worst_violation) {
      worst_violation = over;
      worst_coord = c;
      worst_upper = true;
    }
    if (under > worst_violation) {
      worst_violation = under;
      worst_coord = c;
      worst_upper = false;
    }
  }

  if (worst_coord < 0) {
    cert.verified = true;
    return cert;
  }

  // Assemble the sign-matched corner trajectory realizing the worst extreme.
  Counterexample cx;
  cx.coord = worst_coord;
  cx.violation = worst_violation;
  cx.x0.resize(n);
  const double side = worst_upper ? 1.0 : -1.0;
  for (int d = 0; d < n; ++d) {
    const double a = side * Phi(worst_coord, d);
    cx.x0(d) = a >= 0.0 ? region.hi(d) : region.lo(d);
  }
  cx.w_seq.resize(steps);
  cx.v_seq.resize(steps);
  for (int j = 0; j < steps; ++j) {
    cx.w_seq[j].resize(n);
    for (int d = 0; d < n; ++d) {
      const double a = side * Wcoef[j](worst_coord, d);
      cx.w_seq[j](d) = (a >= 0.0 ? 1.0 : -1.0) * bw(d);
    }
    cx.v_seq[j].resize(m);
    for (int d = 0; d < m; ++d) {
      const double a = side * Vcoef[j](worst_coord, d);
      cx.v_seq[j](d) = (a >= 0.0 ? 1.0 : -1.0) * bv(d);
    }
  }
  cert.verified = false;
  cert.counterexample = std::move(cx);
  return cert;
}

Box get_performance_region(const SystemModel& model, const Box& X_S, int steps,
                           double d_delta, double sigma_mult) {
  if (!(d_delta > 0.0 && d_delta < 1.0))
    throw UsageError("get_performance_region: d_delta must be in (0, 1)");
  const int count = static_cast<int>(std::round(1.0 / d_delta));
  for (int k = 1; k <= count; ++k) {
    const double depth = std::min(1.0, k * d_delta);
    const Box candidate = X_S.scaled(depth);
    if (is_invariant(model, candidate, steps, sigma_mult).verified) return candidate;
  }
  throw SynthesisError("get_performance_region: no invariant depth <= 1 for this system/noise");
}

Eigen::VectorXd replay_counterexample(const SystemModel& model, const Counterexample& cx,
                                      int steps) {
  const int m = model.output_dim();
  const int l = model.input_dim();
  SimState s;
  s.k = 0;
  s.x = cx.x0;
  s.x_hat = Eigen::VectorXd::Zero(model.state_dim());
  s.u = -(model.K * s.x_hat);
  const AttackVector no_attack = AttackVector::zero(m, l);
  for (int j = 0; j < steps; ++j) s = step(model, s, no_attack, cx.w_seq[j], cx.v_seq[j]);
  return s.x;
}

}  // namespace fdimon
