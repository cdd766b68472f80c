#include <doctest.h>

#include <cmath>

#include "jsqd/fluid.hpp"
#include "jsqd/ratefn.hpp"

using namespace jsqd;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

// Same split step written out directly: Euler for psi, then a running-max
// reflection per coordinate in chain order.
Matrix reference_fluid(const Vector& x0, double lambda, double alpha, double theta, double T, Eigen::Index steps,
                       Eigen::Index m) {
  const double h = T / static_cast<double>(steps);
  Vector psi = Vector::Zero(m), eta = Vector::Zero(m), zeta = Vector::Zero(m);
  psi.head(x0.size()) = x0;
  zeta = psi;
  Matrix out(steps + 1, m);
  out.row(0) = zeta.transpose();
  for (Eigen::Index k = 0; k < steps; ++k) {
    Vector drift(m);
    for (Eigen::Index i = 0; i < m; ++i) drift(i) = -theta * (zeta(i) - (i + 1 < m ? zeta(i + 1) : 0.0));
    drift(0) += lambda * alpha;
    psi += drift * h;
    double below = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = psi(i) + below;
      eta(i) = std::max(eta(i), z - 1.0);
      zeta(i) = z - eta(i);
      below = eta(i);
    }
    out.row(k + 1) = zeta.transpose();
  }
  return out;
}

}  // namespace

TEST_CASE("default truncation") {
  CHECK(default_truncation(vec({1.0, 0.5, 0.0}), 0.9, 1.0, 2.0) == 3 + 2 + 2);
  CHECK(default_truncation(vec({1.0, 0.5}), 1.0, 1.5, 1.0) == 3 + 2 + 2);
}

TEST_CASE("frozen controls leave the state unchanged") {
  const Vector x0 = vec({1.0, 0.7, 0.2});
  const auto sol = integrate_fluid(x0, MasterControl::constant(0.0, 0.0, 1.0), 1.0, 1.0, 0.01);
  for (Eigen::Index k = 0; k < sol.zeta.size(); ++k)
    CHECK((sol.zeta.values().row(k).head(3).transpose() - x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("law of large numbers below capacity decays exponentially") {
  // zeta_2 stays 0 and zeta_1' = lambda − zeta_1
  for (double dt : {1e-3, 1e-4}) {
    const auto sol = lln_trajectory(vec({1.0}), 0.5, 1.0, dt);
    double err = 0.0;
    for (Eigen::Index k = 0; k < sol.zeta.size(); ++k) {
      const double t = sol.zeta.times()(k);
      err = std::max(err, std::abs(sol.zeta.values()(k, 0) - (0.5 + 0.5 * std::exp(-t))));
      CHECK(sol.zeta.values()(k, 1) == 0.0);
    }
    CHECK(err <= 0.2 * dt);
  }
  const auto sol = lln_trajectory(vec({1.0}), 0.5, 1.0, 1e-5);
  CHECK(sol.zeta.at(1.0)(0) == doctest::Approx(0.683939720585721).epsilon(1e-5));
}

TEST_CASE("stationary law of large numbers") {
  // all queues hold exactly one job and lambda = 1: arrivals balance departures
  const auto sol = lln_trajectory(vec({1.0}), 1.0, 2.0, 1e-3);
  for (Eigen::Index k = 0; k < sol.zeta.size(); ++k) {
    CHECK(sol.zeta.values()(k, 0) == 1.0);
    CHECK(sol.zeta.values().row(k).tail(sol.truncation - 1).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("optimal tilt keeps every server busy") {
  const auto r = optimal_rate_F_eps(1.0, 1.0);
  const auto ctrl = MasterControl::constant(r.tilt.a_star, r.tilt.b_star, 1.0);
  const auto sol = integrate_fluid(vec({1.0}), ctrl, 1.0, 1.0, 1e-3);
  CHECK((sol.zeta.values().col(0).array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(l1_norm(sol.zeta.at(1.0)) == doctest::Approx(2.0).epsilon(1e-10));
  const PiecewisePath zeta1(sol.zeta.times(), sol.zeta.values().leftCols(1), Interpolation::linear);
  CHECK(control_cost(ctrl, zeta1, {1.0}) == doctest::Approx(r.rate).epsilon(1e-12));
}

TEST_CASE("mass balance telescopes") {
  // ||zeta(t)||_1 = ||x0||_1 + sum_k (lambda alpha − theta zeta_1(t_k)) h − eta_M(t)
  const Vector x0 = vec({1.0, 0.6, 0.3, 0.1});
  MasterControl ctrl{{0.0, 0.4, 1.5}, {1.3, 0.7}, {0.8, 1.2}};
  const double lambda = 0.95;
  const auto sol = integrate_fluid(x0, ctrl, lambda, 1.5, 7e-3);
  double mass = x0.sum();
  const auto& t = sol.zeta.times();
  for (Eigen::Index k = 0; k + 1 < sol.zeta.size(); ++k) {
    const std::size_t p = ctrl.piece(t(k));
    mass += (lambda * ctrl.alpha[p] - ctrl.theta[p] * sol.zeta.values()(k, 0)) * (t(k + 1) - t(k));
    const double eta_top = sol.eta.values()(k + 1, sol.truncation - 1);
    CHECK(std::abs(sol.zeta.values().row(k + 1).sum() - (mass - eta_top)) <= 1e-10);
  }
}

TEST_CASE("tail vector stays ordered and in [0, 1]") {
  MasterControl ctrl{{0.0, 1.0, 2.0}, {2.0, 0.3}, {0.5, 1.5}};
  const auto sol = integrate_fluid(vec({1.0, 0.8, 0.5, 0.5, 0.1}), ctrl, 0.9, 2.0, 1e-3);
  const Matrix& z = sol.zeta.values();
  CHECK(z.minCoeff() >= 0.0);
  CHECK(z.maxCoeff() <= 1.0);
  for (Eigen::Index k = 0; k < z.rows(); ++k)
    for (Eigen::Index i = 1; i < z.cols(); ++i) CHECK(z(k, i) <= z(k, i - 1) + 1e-15);
}

TEST_CASE("matches a direct reimplementation") {
  const Vector x0 = vec({1.0, 1.0, 0.4});
  const double T = 1.5;
  const Eigen::Index steps = 1500, m = 8;
  const auto sol = integrate_fluid(x0, MasterControl::constant(1.4, 0.9, T), 1.1, T, T / steps, m);
  const Matrix ref = reference_fluid(x0, 1.1, 1.4, 0.9, T, steps, m);
  REQUIRE(sol.zeta.size() == steps + 1);
  CHECK((sol.zeta.values() - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("self-refinement against a fine solution") {
  const Vector x0 = vec({1.0, 0.6, 0.2});
  const auto fine = lln_trajectory(x0, 0.95, 2.0, 1e-5, 8);
  const auto coarse = lln_trajectory(x0, 0.95, 2.0, 4e-4, 8);
  const auto finer = lln_trajectory(x0, 0.95, 2.0, 2e-4, 8);
  double e1 = 0.0, e2 = 0.0;
  for (Eigen::Index k = 0; k < coarse.zeta.size(); ++k) {
    const double t = coarse.zeta.times()(k);
    e1 = std::max(e1, l1_norm(coarse.zeta.at(t) - fine.zeta.at(t)));
    e2 = std::max(e2, l1_norm(finer.zeta.at(t) - fine.zeta.at(t)));
  }
  MESSAGE("sup l1 error against dt = 1e-5: " << e1 << " (dt = 4e-4), " << e2 << " (dt = 2e-4)");
  CHECK(e1 <= 1e-4);
  CHECK(e2 <= 0.6 * e1);
}

TEST_CASE("two full levels at lambda = 1") {
  const Vector x0 = vec({1.0, 1.0});
  const auto ref = lln_trajectory(x0, 1.0, 1.0, 1e-5, 6);
  const auto sol = lln_trajectory(x0, 1.0, 1.0, 1e-4, 6);
  double err = 0.0;
  for (Eigen::Index k = 0; k < sol.zeta.size(); ++k)
    err = std::max(err, l1_norm(sol.zeta.values().row(k).transpose() - ref.zeta.at(sol.zeta.times()(k))));
  CHECK(err <= 1e-5);
}

TEST_CASE("well-posedness check") {
  SUBCASE("first order on a smooth trajectory") {
    const auto rep = wellposedness_check(vec({1.0, 0.5}), MasterControl::constant(1.0, 1.0, 1.0), 0.7, 1.0,
                                         {1e-2, 5e-3, 2.5e-3});
    REQUIRE(rep.errors.size() == 3);
    REQUIRE(rep.ratios.size() == 2);
    CHECK_FALSE(rep.exact);
    CHECK(rep.first_order);
  }
  SUBCASE("a control breakpoint at T/2") {
    MasterControl ctrl{{0.0, 0.5, 1.0}, {1.5, 0.5}, {0.8, 1.2}};
    const auto rep = wellposedness_check(vec({1.0, 0.5}), ctrl, 0.9, 1.0, {1e-2, 5e-3, 2.5e-3});
    for (double r : rep.ratios) MESSAGE("ratio " << r);
    CHECK(rep.first_order);
  }
  SUBCASE("exact when the first level stays pinned") {
    const auto rep = wellposedness_check(vec({1.0}), MasterControl::constant(1.0, 1.0, 1.0), 1.0, 1.0, {1e-2, 5e-3});
    CHECK(rep.exact);
    CHECK_FALSE(rep.first_order);
  }
}

TEST_CASE("truncation errors") {
  // heavy arrivals with too few levels fill the top coordinate
  CHECK_THROWS_AS(integrate_fluid(vec({1.0}), MasterControl::constant(5.0, 1.0, 2.0), 1.0, 2.0, 1e-3, 2),
                  TruncationError);
  try {
    integrate_fluid(vec({1.0}), MasterControl::constant(5.0, 1.0, 2.0), 1.0, 2.0, 1e-3, 2);
  } catch (const TruncationError& e) {
    CHECK(e.time() > 0.0);
    CHECK(e.time() < 2.0);
  }
  CHECK_NOTHROW(integrate_fluid(vec({1.0}), MasterControl::constant(5.0, 1.0, 2.0), 1.0, 2.0, 1e-3));
  CHECK_THROWS_AS(integrate_fluid(vec({1.0, 0.5, 0.2}), MasterControl::constant(1.0, 1.0, 1.0), 1.0, 1.0, 1e-2, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(integrate_fluid(vec({0.5, 0.7}), MasterControl::constant(1.0, 1.0, 1.0), 1.0, 1.0, 1e-2),
                  std::invalid_argument);
}
