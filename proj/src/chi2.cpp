#include "fdimon/chi2.hpp"

#include <cmath>
#include <limits>

#include "fdimon/errors.hpp"

namespace fdimon {

void DetectorConfig::validate() const {
  if (l < 1 || l > l_max) throw ConfigError("DetectorConfig: l must be in [1, l_max]");
  if (!(Th > 0.0)) throw ConfigError("DetectorConfig: Th must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("DetectorConfig: epsilon must be in (0,1)");
  if (Sigma_r_inv.rows() != Sigma_r_inv.cols() || Sigma_r_inv.rows() < 1)
    throw ConfigError("DetectorConfig: Sigma_r_inv must be square");
  if (!Sigma_r_inv.isApprox(Sigma_r_inv.transpose(), 1e-9))
    throw ConfigError("DetectorConfig: Sigma_r_inv must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma_r_inv);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("DetectorConfig: Sigma_r_inv must be positive definite");
}

double chi2_statistic(std::span<const Eigen::VectorXd> window,
                      const Eigen::MatrixXd& Sigma_r_inv) {
  if (window.empty()) throw UsageError("chi2_statistic: empty window");
  double g = 0.0;
  for (const auto& r : window) {
    if (r.size() != Sigma_r_inv.rows())
      throw UsageError("chi2_statistic: residue dimension does not match Sigma_r_inv");
    g += r.dot(Sigma_r_inv * r);
  }
  return g;
}

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 1e-16;

// Lower series: P(a,x) = x^a e^-x / Gamma(a) * sum_k x^k / (a (a+1) ... (a+k))
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int k = 0; k < kMaxIter; ++k) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper continued fraction (Lentz): Q(a,x) = x^a e^-x / Gamma(a) * cf
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw UsageError("gamma_p: a must be positive");
  if (x < 0.0) throw UsageError("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(int dof, double x) {
  if (dof < 1) throw UsageError("chi2_cdf: dof must be >= 1");
  if (x < 0.0) throw UsageError("chi2_cdf: x must be nonnegative");
  return gamma_p(0.5 * dof, 0.5 * x);
}

double noncentral_chi2_cdf(int dof, double lambda, double x, int min_terms) {
  if (dof < 1) throw UsageError("noncentral_chi2_cdf: dof must be >= 1");
  if (lambda < 0.0) throw UsageError("noncentral_chi2_cdf: lambda must be nonnegative");
  if (x < 0.0) throw UsageError("noncentral_chi2_cdf: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (lambda == 0.0 && min_terms <= 1) return chi2_cdf(dof, x);

  const double half = 0.5 * lambda;
  // Start at the Poisson mode so large lambda cannot underflow the weights,
  // then expand both directions until the remaining tail mass is negligible.
  const int j0 = static_cast<int>(half);
  const double logw0 = -half + (j0 > 0 ? j0 * std::log(half) - std::lgamma(j0 + 1.0) : 0.0);
  const double w0 = std::exp(logw0);

  double total = w0 * gamma_p(0.5 * dof + j0, 0.5 * x);
  double mass = w0;
  int terms = 1;

  double w_up = w0;
  double w_dn = w0;
  int j_up = j0;
  int j_dn = j0;
  while (terms < kMaxIter * 8) {
    const bool tail_small = (1.0 - mass) < 1e-13;
    if (tail_small && terms >= min_terms) break;
    bool advanced = false;
    if (j_up - j0 <= j0 - j_dn || j_dn == 0) {
      ++j_up;
      w_up *= half / j_up;
      total += w_up * gamma_p(0.5 * dof + j_up, 0.5 * x);
      mass += w_up;
      ++terms;
      advanced = true;
    }
    if (j_dn > 0 && (j0 - j_dn < j_up - j0)) {
      w_dn *= j_dn / half;
      --j_dn;
      total += w_dn * gamma_p(0.5 * dof + j_dn, 0.5 * x);
      mass += w_dn;
      ++terms;
      advanced = true;
    }
    if (!advanced) break;
  }
  return std::min(total, 1.0);
}

double marcum_q(double nu, double a, double b, int min_terms) {
  if (!(nu > 0.0)) throw UsageError("marcum_q: order must be positive");
  if (a < 0.0 || b < 0.0 || !std::isfinite(a) || !std::isfinite(b))
    throw UsageError("marcum_q: arguments must be finite and nonnegative");
  if (b == 0.0) return 1.0;
  // Q_nu(a, b) = 1 - F(b^2; 2 nu, a^2); allow non-integer order via gamma_p.
  const double lambda = a * a;
  const double x = b * b;
  if (lambda == 0.0 && min_terms <= 1) return 1.0 - gamma_p(nu, 0.5 * x);

  const double half = 0.5 * lambda;
  const int j0 = static_cast<int>(half);
  const double logw0 = -half + (j0 > 0 ? j0 * std::log(half) - std::lgamma(j0 + 1.0) : 0.0);
  const double w0 = std::exp(logw0);

  double total = w0 * gamma_p(nu + j0, 0.5 * x);
  double mass = w0;
  int terms = 1;
  double w_up = w0, w_dn = w0;
  int j_up = j0, j_dn = j0;
  while (terms < kMaxIter * 8) {
    if ((1.0 - mass) < 1e-13 && terms >= min_terms) break;
    bool advanced = false;
    if (j_up - j0 <= j0 - j_dn || j_dn == 0) {
      ++j_up;
      w_up *= half / j_up;
      total += w_up * gamma_p(nu + j_up, 0.5 * x);
      mass += w_up;
      ++terms;
      advanced = true;
    }
    if (j_dn > 0 && (j0 - j_dn < j_up - j0)) {
      w_dn *= j_dn / half;
      --j_dn;
      total += w_dn * gamma_p(nu + j_dn, 0.5 * x);
      mass += w_dn;
      ++terms;
      advanced = true;
    }
    if (!advanced) break;
  }
  return 1.0 - std::min(total, 1.0);
}

double far(const DetectorConfig& cfg, int m) {
  if (m < 1) throw UsageError("far: sensor count must be >= 1");
  return 1.0 - chi2_cdf(m * cfg.l, cfg.Th);
}

double tpr(const DetectorConfig& cfg, int m, double lambda) {
  if (m < 1) throw UsageError("tpr: sensor count must be >= 1");
  if (lambda < 0.0) throw UsageError("tpr: lambda must be nonnegative");
  return 1.0 - noncentral_chi2_cdf(m * cfg.l, lambda, cfg.Th);
}

NoncentralParams estimate_noncentrality(std::span<const Eigen::VectorXd> attacked_residues,
                                        const Eigen::MatrixXd& Sigma_r, int l) {
  const int m = static_cast<int>(Sigma_r.rows());
  if (l < 1) throw UsageError("estimate_noncentrality: l must be >= 1");
  if (static_cast<int>(attacked_residues.size()) < 30 * m)
    throw EstimationError("estimate_noncentrality: need at least 30*m attacked residue samples");

  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(m, m);
  for (const auto& r : attacked_residues) {
    if (r.size() != m)
      throw UsageError("estimate_noncentrality: residue dimension does not match Sigma_r");
    second.noalias() += r * r.transpose();
  }
  second /= static_cast<double>(attacked_residues.size());

  const Eigen::MatrixXd P_hat = second - Sigma_r;
  const double lambda_raw = l * (P_hat * Sigma_r.inverse()).trace();

  NoncentralParams out;
  out.dof = m * l;
  out.lambda = std::max(0.0, lambda_raw);
  out.mu = out.dof + out.lambda;
  out.sigma2 = 2.0 * (out.dof + 2.0 * out.lambda);
  return out;
}

}  // namespace fdimon
