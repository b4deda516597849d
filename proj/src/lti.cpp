#include "fdimon/lti.hpp"

#include <cmath>
#include <deque>
#include <string>
#include <utility>

#include "fdimon/chi2.hpp"
#include "fdimon/errors.hpp"

namespace fdimon {

double spectral_radius(const Eigen::MatrixXd& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

void require_symmetric_psd(const Eigen::MatrixXd& S, const std::string& name) {
  if (S.rows() != S.cols()) throw ConfigError(name + " must be square");
  if (!S.isApprox(S.transpose(), 1e-9)) throw ConfigError(name + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, S.norm()))
    throw ConfigError(name + " must be positive semi-definite");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

SystemModel::SystemModel(Eigen::MatrixXd A_, Eigen::MatrixXd B_, Eigen::MatrixXd C_,
                         Eigen::MatrixXd D_, Eigen::MatrixXd K_, Eigen::MatrixXd L_,
                         Eigen::MatrixXd Sw, Eigen::MatrixXd Sv, Eigen::VectorXd x0m,
                         Eigen::MatrixXd S0, double h_) {
  A = std::move(A_); B = std::move(B_); C = std::move(C_); D = std::move(D_);
  K = std::move(K_); L = std::move(L_);
  Sigma_w = std::move(Sw); Sigma_v = std::move(Sv);
  x0_mean = std::move(x0m); Sigma_0 = std::move(S0);
  h = h_;
  validate(true);
}

SystemModel SystemModel::unchecked(Eigen::MatrixXd A_, Eigen::MatrixXd B_, Eigen::MatrixXd C_,
                                   Eigen::MatrixXd D_, Eigen::MatrixXd K_, Eigen::MatrixXd L_,
                                   Eigen::MatrixXd Sw, Eigen::MatrixXd Sv, Eigen::VectorXd x0m,
                                   Eigen::MatrixXd S0, double h_) {
  SystemModel m;
  m.A = std::move(A_); m.B = std::move(B_); m.C = std::move(C_); m.D = std::move(D_);
  m.K = std::move(K_); m.L = std::move(L_);
  m.Sigma_w = std::move(Sw); m.Sigma_v = std::move(Sv);
  m.x0_mean = std::move(x0m); m.Sigma_0 = std::move(S0);
  m.h = h_;
  m.validate(false);
  return m;
}

void SystemModel::validate(bool gate_stability) {
  const auto n = A.rows();
  const auto m = C.rows();
  const auto l = B.cols();
  if (A.cols() != n) throw ConfigError("A must be square");
  if (B.rows() != n) throw ConfigError("B must be n x l");
  if (C.cols() != n) throw ConfigError("C must be m x n");
  if (D.rows() != m || D.cols() != l) throw ConfigError("D must be m x l");
  if (K.rows() != l || K.cols() != n) throw ConfigError("K must be l x n");
  if (L.rows() != n || L.cols() != m) throw ConfigError("L must be n x m");
  if (Sigma_w.rows() != n) throw ConfigError("Sigma_w must be n x n");
  if (Sigma_v.rows() != m) throw ConfigError("Sigma_v must be m x m");
  if (x0_mean.size() != n) throw ConfigError("x0_mean must have n entries");
  if (Sigma_0.rows() != n) throw ConfigError("Sigma_0 must be n x n");
  if (!(h > 0.0)) throw ConfigError("sampling period h must be positive");

  require_symmetric_psd(Sigma_w, "Sigma_w");
  require_symmetric_psd(Sigma_v, "Sigma_v");
  require_symmetric_psd(Sigma_0, "Sigma_0");

  if (gate_stability) {
    const double rho_ctrl = spectral_radius(A - B * K);
    if (rho_ctrl >= 1.0)
      throw ConfigError("closed loop (A - BK) is not stable: spectral radius " +
                        std::to_string(rho_ctrl));
    const double rho_obs = spectral_radius(A - L * C);
    if (rho_obs >= 1.0)
      throw ConfigError("observer loop (A - LC) is not stable: spectral radius " +
                        std::to_string(rho_obs));
  }

  sqrt_w = psd_sqrt(Sigma_w);
  sqrt_v = psd_sqrt(Sigma_v);
  sqrt_0 = psd_sqrt(Sigma_0);
}

SimState step(const SystemModel& model, const SimState& s, const AttackVector& attack,
              const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
  if (s.x.size() != model.state_dim() || s.x_hat.size() != model.state_dim() ||
      s.u.size() != model.input_dim())
    throw ConfigError("step: state dimensions do not match model");
  if (attack.a_y.size() != model.output_dim() || attack.a_u.size() != model.input_dim())
    throw ConfigError("step: attack dimensions do not match model");
  if (w.size() != model.state_dim() || v.size() != model.output_dim())
    throw ConfigError("step: noise dimensions do not match model");

  const Eigen::VectorXd u_tilde = s.u + attack.a_u;
  const Eigen::VectorXd y = model.C * s.x + model.D * u_tilde + v + attack.a_y;
  const Eigen::VectorXd r = y - model.C * s.x_hat;

  SimState next;
  next.k = s.k + 1;
  next.x = model.A * s.x + model.B * u_tilde + w;
  next.x_hat = model.A * s.x_hat + model.B * s.u + model.L * r;
  next.u = -(model.K * next.x_hat);
  next.y = y;
  next.r = r;
  return next;
}

Eigen::MatrixXd steady_state_error_cov(const SystemModel& model) {
  const Eigen::MatrixXd F = model.A - model.L * model.C;
  if (spectral_radius(F) >= 1.0)
    throw InstabilityError("steady_state_error_cov: (A - LC) is not stable");
  const Eigen::MatrixXd Q = model.Sigma_w + model.L * model.Sigma_v * model.L.transpose();

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(model.state_dim(), model.state_dim());
  for (long iter = 0; iter < 1000000; ++iter) {
    Eigen::MatrixXd S_next = F * S * F.transpose() + Q;
    const double diff = (S_next - S).cwiseAbs().maxCoeff();
    S = std::move(S_next);
    if (diff < 1e-12) return S;
  }
  throw InstabilityError("steady_state_error_cov: Lyapunov iteration did not converge");
}

Eigen::MatrixXd residue_cov(const SystemModel& model) {
  const Eigen::MatrixXd Se = steady_state_error_cov(model);
  Eigen::MatrixXd Sr = model.C * Se * model.C.transpose() + model.Sigma_v;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sr);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("residue_cov: Sigma_r is singular (is Sigma_v positive definite?)");
  return Sr;
}

ControlPolicy default_control_policy() {
  return [](const ControlView& view, Rng&) {
    return ControlDecision{view.u_default, false};
  };
}

AttackPolicy zero_attack_policy() {
  return [](const AttackView& view, Rng&) {
    AttackDecision d;
    d.vec = AttackVector::zero(static_cast<int>(view.y_prev.size()),
                               static_cast<int>(view.u.size()));
    d.active = false;
    return d;
  };
}

DetectorPolicy constant_detector_policy(double Th, int l) {
  return [Th, l](const DetectorView&, Rng&) { return DetectorDecision{Th, l}; };
}

SimTrace simulate(const SystemModel& model, const SimOptions& opts,
                  const AttackPolicy& attack_policy, const DetectorPolicy& detector_policy,
                  const ControlPolicy& control_policy) {
  if (opts.steps < 1) throw UsageError("simulate: steps must be >= 1");
  const int n = model.state_dim();
  const int m = model.output_dim();

  Rng x0_rng = Rng::derive(opts.seed, 0);
  Rng w_rng = Rng::derive(opts.seed, 1);
  Rng v_rng = Rng::derive(opts.seed, 2);
  Rng policy_rng = Rng::derive(opts.seed, 3);

  // Pseudo-inverse so a noiseless model (Sigma_r = 0, residues identically 0)
  // still yields a well-defined g = 0; residue_cov keeps the strict PD contract.
  const Eigen::MatrixXd Se = steady_state_error_cov(model);
  const Eigen::MatrixXd Sr = model.C * Se * model.C.transpose() + model.Sigma_v;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sr);
  Eigen::VectorXd inv_ev = es.eigenvalues();
  const double tol = 1e-14 * std::max(1.0, inv_ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < inv_ev.size(); ++i) inv_ev(i) = inv_ev(i) > tol ? 1.0 / inv_ev(i) : 0.0;
  const Eigen::MatrixXd Sigma_r_inv =
      es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();

  SimTrace trace;
  trace.requested_steps = opts.steps;
  trace.rows.reserve(opts.steps);

  // opts.x0 overrides the prior mean x0_bar: the estimator starts from the
  // same point and the plant draws around it with Sigma_0.
  const Eigen::VectorXd x0_bar = opts.x0 ? *opts.x0 : model.x0_mean;
  Eigen::VectorXd x = x0_bar + model.sqrt_0 * x0_rng.gaussian_vector(n);
  Eigen::VectorXd x_hat = x0_bar;

  Eigen::VectorXd y_prev = Eigen::VectorXd::Zero(m);
  double Th_prev = 0.0;
  bool alarm_prev = false;
  std::deque<Eigen::VectorXd> window;  // residues, most recent last

  for (int k = 0; k < opts.steps; ++k) {
    const Eigen::VectorXd u_default = -(model.K * x_hat);

    ControlDecision ctrl = control_policy(ControlView{k, x_hat, y_prev, u_default, alarm_prev},
                                          policy_rng);
    AttackDecision atk = attack_policy(AttackView{k, y_prev, ctrl.u, Th_prev}, policy_rng);

    const Eigen::VectorXd v = model.sqrt_v * v_rng.gaussian_vector(m);
    const Eigen::VectorXd u_tilde = ctrl.u + atk.vec.a_u;
    const Eigen::VectorXd y = model.C * x + model.D * u_tilde + v + atk.vec.a_y;
    const Eigen::VectorXd r = y - model.C * x_hat;

    DetectorDecision det = detector_policy(DetectorView{k, r, y}, policy_rng);

    window.push_back(r);
    while (static_cast<int>(window.size()) > std::max(1, det.l)) window.pop_front();
    // For k < l the window holds only the residues seen so far.
    std::vector<Eigen::VectorXd> win(window.begin(), window.end());
    const double g = chi2_statistic(win, Sigma_r_inv);
    const bool alarm = g > det.Th;

    TraceRow row;
    row.state = SimState{k, x, x_hat, y, ctrl.u, r};
    row.attack = atk.vec;
    row.g = g;
    row.Th = det.Th;
    row.win_l = static_cast<int>(win.size());
    row.alarm = alarm;
    row.attack_active = atk.active;
    row.controller_mode = ctrl.agent_mode;
    trace.rows.push_back(std::move(row));

    const Eigen::VectorXd w = model.sqrt_w * w_rng.gaussian_vector(n);
    Eigen::VectorXd x_next = model.A * x + model.B * u_tilde + w;
    Eigen::VectorXd x_hat_next = model.A * x_hat + model.B * ctrl.u + model.L * r;

    x = std::move(x_next);
    x_hat = std::move(x_hat_next);
    y_prev = y;
    Th_prev = det.Th;
    alarm_prev = alarm;

    trace.final_x = x;
    trace.final_x_hat = x_hat;

    if (x.cwiseAbs().maxCoeff() > opts.divergence_limit) trace.diverged = true;
    const bool keep_going = !opts.on_row || opts.on_row(trace);
    if (trace.diverged || !keep_going) break;
  }
  return trace;
}

}  // namespace fdimon
