#pragma once

#include <Eigen/Dense>
#include <span>

namespace fdimon {

// Windowed chi-squared detector parameters.
struct DetectorConfig {
  int l = 4;                      // window length, 1 <= l <= l_max
  double Th = 12.0;               // alarm threshold, > 0
  Eigen::MatrixXd Sigma_r_inv;    // inverse residue covariance, symmetric PD
  int l_max = 10;
  double epsilon = 0.05;          // maximum allowable false alarm rate

  void validate() const;          // throws ConfigError on violated invariants
};

// Parameters of the noncentral chi-squared law followed by the windowed
// statistic under attack.
struct NoncentralParams {
  int dof = 0;          // m * l
  double lambda = 0.0;  // noncentrality, >= 0
  double mu = 0.0;      // dof + lambda
  double sigma2 = 0.0;  // 2 * (dof + 2 * lambda)
};

// g = sum_i r_i' Sigma_r_inv r_i over the window. The window length is the
// number of vectors passed; dimensions must match Sigma_r_inv.
double chi2_statistic(std::span<const Eigen::VectorXd> window,
                      const Eigen::MatrixXd& Sigma_r_inv);

// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
// Series expansion for x < a + 1, Lentz continued fraction otherwise.
double gamma_p(double a, double x);

// Central chi-squared CDF, dof >= 1, x >= 0.
double chi2_cdf(int dof, double x);

// Noncentral chi-squared CDF as the Poisson mixture
//   F(x; dof, lambda) = sum_j e^{-lambda/2} (lambda/2)^j / j! * chi2_cdf(dof + 2j, x),
// truncated once the remaining Poisson tail mass is below 1e-13 (the tail
// bounds the truncation error since each central CDF term is <= 1).
// `min_terms` forces at least that many terms; used to test truncation stability.
double noncentral_chi2_cdf(int dof, double lambda, double x, int min_terms = 0);

// Marcum Q of (half-)order nu: Q_nu(a, b) = 1 - F(b^2; 2*nu, a^2).
double marcum_q(double nu, double a, double b, int min_terms = 0);

// Per-step false alarm probability at the configured threshold:
// 1 - chi2_cdf(m*l, Th).
double far(const DetectorConfig& cfg, int m);

// True positive probability under noncentrality lambda:
// 1 - noncentral_chi2_cdf(m*l, lambda, Th). Equals far() at lambda = 0.
double tpr(const DetectorConfig& cfg, int m, double lambda);

// Estimate the noncentrality induced by an attack from observed attacked
// residues: P_hat = empirical second moment - Sigma_r,
// lambda_hat = l * trace(P_hat Sigma_r^{-1}) clamped to >= 0.
// Requires at least 30*m samples.
NoncentralParams estimate_noncentrality(std::span<const Eigen::VectorXd> attacked_residues,
                                        const Eigen::MatrixXd& Sigma_r, int l);

}  // namespace fdimon
