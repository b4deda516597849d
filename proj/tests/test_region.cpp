#include "fdimon/region.hpp"

#include <cmath>

#include "doctest.h"
#include "fdimon/errors.hpp"

using namespace fdimon;

namespace {

SystemModel ttc_model(const Eigen::MatrixXd& Sw, const Eigen::MatrixXd& Sv) {
  Eigen::MatrixXd A(2, 2);
  A << 1.0, 0.1, 0.0, 1.0;
  Eigen::MatrixXd B(2, 1);
  B << 0.005, 0.1;
  Eigen::MatrixXd C(1, 2);
  C << 1.0, 0.0;
  Eigen::MatrixXd K(1, 2);
  K << 16.0302, 5.6622;
  Eigen::MatrixXd L(2, 1);
  L << 1.8721, 9.6532;
  return SystemModel(A, B, C, Eigen::MatrixXd::Zero(1, 1), K, L, Sw, Sv,
                     Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2), 0.1);
}

Box ttc_safe_region() {
  return Box((Eigen::VectorXd(2) << -25.0, -30.0).finished(),
             (Eigen::VectorXd(2) << 25.0, 30.0).finished());
}

// Simulate the Algorithm-1 loop (x_hat_0 = 0, zero attack) with given noise
// draws through the lti step primitive.
Eigen::VectorXd rollout(const SystemModel& mdl, const Eigen::VectorXd& x0,
                        const std::vector<Eigen::VectorXd>& w_seq,
                        const std::vector<Eigen::VectorXd>& v_seq) {
  SimState s;
  s.k = 0;
  s.x = x0;
  s.x_hat = Eigen::VectorXd::Zero(mdl.state_dim());
  s.u = -(mdl.K * s.x_hat);
  const AttackVector zero = AttackVector::zero(mdl.output_dim(), mdl.input_dim());
  for (std::size_t j = 0; j < w_seq.size(); ++j) s = step(mdl, s, zero, w_seq[j], v_seq[j]);
  return s.x;
}

}  // namespace

TEST_CASE("Box") {
  const Box b((Eigen::VectorXd(2) << -2.0, -4.0).finished(),
              (Eigen::VectorXd(2) << 2.0, 4.0).finished());
  CHECK(b.contains(Eigen::VectorXd::Zero(2)));
  CHECK_FALSE(b.contains((Eigen::VectorXd(2) << 3.0, 0.0).finished()));
  const Box half = b.scaled(0.5);
  CHECK(half.lo(0) == -1.0);
  CHECK(half.hi(1) == 2.0);
  CHECK_THROWS_AS(Box((Eigen::VectorXd(1) << 1.0).finished(),
                      (Eigen::VectorXd(1) << 0.0).finished()),
                  ConfigError);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) CHECK(b.contains(b.sample_uniform(rng)));
}

TEST_CASE("is_invariant") {
  SUBCASE("noiseless TTC: small region verified by contraction") {
    const SystemModel mdl = ttc_model(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 1));
    const auto cert = is_invariant(mdl, ttc_safe_region().scaled(0.1), 50, 3.0);
    CHECK(cert.verified);
    CHECK_FALSE(cert.counterexample.has_value());
  }
  SUBCASE("open-loop drift (K = 0) is falsified with a corner counterexample") {
    Eigen::MatrixXd A(2, 2);
    A << 1.0, 0.1, 0.0, 1.0;
    Eigen::MatrixXd B(2, 1);
    B << 0.005, 0.1;
    Eigen::MatrixXd C(1, 2);
    C << 1.0, 0.0;
    Eigen::MatrixXd L(2, 1);
    L << 1.8721, 9.6532;
    const SystemModel drift = SystemModel::unchecked(
        A, B, C, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 2), L,
        Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(2),
        Eigen::MatrixXd::Zero(2, 2), 0.1);
    const Box region((Eigen::VectorXd(2) << -1.0, -1.0).finished(),
                     (Eigen::VectorXd(2) << 1.0, 1.0).finished());
    const auto cert = is_invariant(drift, region, 10, 3.0);
    CHECK_FALSE(cert.verified);
    REQUIRE(cert.counterexample.has_value());
    const auto& cx = *cert.counterexample;
    // Counterexample starts at a box corner.
    for (int d = 0; d < 2; ++d)
      CHECK((cx.x0(d) == region.lo(d) || cx.x0(d) == region.hi(d)));
    // Replay exits the region at the final step.
    const Eigen::VectorXd x_final = rollout(drift, cx.x0, cx.w_seq, cx.v_seq);
    CHECK_FALSE(region.contains(x_final));
    const Eigen::VectorXd via_helper = replay_counterexample(drift, cx, 10);
    CHECK((x_final - via_helper).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("affine unrolling agrees with direct simulation") {
    Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(2, 2);
    Sw(0, 0) = 1e-10;
    Sw(1, 1) = 7.68e-2;
    const SystemModel mdl = ttc_model(Sw, 1e-5 * Eigen::MatrixXd::Identity(1, 1));
    // A verified certificate's bound must hold on random truncated draws;
    // here we check the stronger statement that the affine coefficients
    // reproduce simulation exactly by comparing random rollouts against the
    // certificate extremes.
    const int steps = 20;
    const Box region = ttc_safe_region().scaled(0.3);
    Rng rng(17);
    const Eigen::VectorXd bw = 3.0 * mdl.Sigma_w.diagonal().cwiseSqrt();
    const Eigen::VectorXd bv = 3.0 * mdl.Sigma_v.diagonal().cwiseSqrt();
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x0 = region.sample_uniform(rng);
      std::vector<Eigen::VectorXd> w_seq, v_seq;
      for (int j = 0; j < steps; ++j) {
        w_seq.push_back(rng.uniform_vector(-bw, bw));
        v_seq.push_back(rng.uniform_vector(-bv, bv));
      }
      const Eigen::VectorXd direct = rollout(mdl, x0, w_seq, v_seq);
      // Affine prediction built the same way the verifier builds coefficients.
      const int n = 2;
      Eigen::MatrixXd M(4, 4);
      M.topLeftCorner(n, n) = mdl.A;
      M.topRightCorner(n, n) = -mdl.B * mdl.K;
      M.bottomLeftCorner(n, n) = mdl.L * mdl.C;
      M.bottomRightCorner(n, n) = mdl.A - (mdl.B + mdl.L * mdl.D) * mdl.K - mdl.L * mdl.C;
      Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
      z.head(n) = x0;
      for (int j = 0; j < steps; ++j) {
        Eigen::VectorXd inj = Eigen::VectorXd::Zero(4);
        inj.head(n) = w_seq[j];
        inj.tail(n) = mdl.L * v_seq[j];
        z = M * z + inj;
      }
      CHECK((z.head(n) - direct).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("soundness sampling: verified region never violated at step i") {
    Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(2, 2);
    Sw(0, 0) = 1e-10;
    Sw(1, 1) = 7.68e-2;
    const SystemModel mdl = ttc_model(Sw, 1e-5 * Eigen::MatrixXd::Identity(1, 1));
    const int steps = 50;
    const Box region = ttc_safe_region().scaled(0.3);
    const auto cert = is_invariant(mdl, region, steps, 3.0);
    REQUIRE(cert.verified);
    Rng rng(23);
    const Eigen::VectorXd bw = 3.0 * mdl.Sigma_w.diagonal().cwiseSqrt();
    const Eigen::VectorXd bv = 3.0 * mdl.Sigma_v.diagonal().cwiseSqrt();
    int violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      const Eigen::VectorXd x0 = region.sample_uniform(rng);
      std::vector<Eigen::VectorXd> w_seq, v_seq;
      for (int j = 0; j < steps; ++j) {
        // Gaussian draws clamped to the truncation hypercube.
        w_seq.push_back(
            (mdl.sqrt_w * rng.gaussian_vector(2)).cwiseMax(-bw).cwiseMin(bw));
        v_seq.push_back(
            (mdl.sqrt_v * rng.gaussian_vector(1)).cwiseMax(-bv).cwiseMin(bv));
      }
      if (!region.contains(rollout(mdl, x0, w_seq, v_seq))) ++violations;
    }
    CHECK(violations == 0);
  }
  SUBCASE("argument validation") {
    const SystemModel mdl = ttc_model(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 1));
    CHECK_THROWS_AS(is_invariant(mdl, ttc_safe_region(), 0, 3.0), UsageError);
    CHECK_THROWS_AS(is_invariant(mdl, ttc_safe_region(), 10, 0.0), UsageError);
  }
}

TEST_CASE("get_performance_region") {
  SUBCASE("noiseless: smallest depth wins") {
    const SystemModel mdl = ttc_model(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 1));
    const Box region = get_performance_region(mdl, ttc_safe_region(), 50, 0.1, 3.0);
    CHECK(region.lo(0) == doctest::Approx(-2.5).epsilon(1e-12));
    CHECK(region.hi(1) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("documented spec noise: region contains origin and sits inside X_S") {
    const SystemModel mdl =
        ttc_model(1e-4 * Eigen::MatrixXd::Identity(2, 2), 1e-4 * Eigen::MatrixXd::Identity(1, 1));
    const Box X_S = ttc_safe_region();
    const Box region = get_performance_region(mdl, X_S, 50, 0.1, 3.0);
    CHECK(region.contains(Eigen::VectorXd::Zero(2)));
    CHECK(region.lo(0) >= X_S.lo(0));
    CHECK(region.hi(0) <= X_S.hi(0));
    // The paper's X_R = 0.3 * X_S passes at these settings.
    CHECK(is_invariant(mdl, X_S.scaled(0.3), 50, 3.0).verified);
  }
  SUBCASE("depth scaling stays inside X_S for all examined depths") {
    const Box X_S = ttc_safe_region();
    for (double depth = 0.1; depth <= 1.0; depth += 0.1) {
      const Box b = X_S.scaled(std::min(1.0, depth));
      CHECK(b.lo(0) >= X_S.lo(0));
      CHECK(b.hi(0) <= X_S.hi(0));
      CHECK(b.lo(1) >= X_S.lo(1));
      CHECK(b.hi(1) <= X_S.hi(1));
    }
  }
  SUBCASE("impossible noise: synthesis failure") {
    const SystemModel mdl =
        ttc_model(1e4 * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1));
    CHECK_THROWS_AS(get_performance_region(mdl, ttc_safe_region(), 50, 0.1, 3.0),
                    SynthesisError);
  }
}
