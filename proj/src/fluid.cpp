#include "jsqd/fluid.hpp"

#include <algorithm>
#include <cmath>

#include "jsqd/skorokhod.hpp"

namespace jsqd {

namespace {

void check_x0(const Vector& x0) {
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    if (x0(i) < 0.0 || x0(i) > 1.0) throw std::invalid_argument("fluid: x0 entries must lie in [0, 1]");
    if (i > 0 && x0(i) > x0(i - 1)) throw std::invalid_argument("fluid: x0 must be non-increasing");
  }
}

Vector time_grid(const MasterControl& ctrl, double T, double dt) {
  const auto steps = static_cast<Eigen::Index>(std::ceil(T / dt - 1e-9));
  Vector uniform(steps + 1);
  for (Eigen::Index k = 0; k < steps; ++k) uniform(k) = static_cast<double>(k) * dt;
  uniform(steps) = T;
  std::vector<double> bps;
  for (double s : ctrl.breakpoints)
    if (s > 0.0 && s < T) bps.push_back(s);
  return merge_grids(uniform, Eigen::Map<const Vector>(bps.data(), static_cast<Eigen::Index>(bps.size())),
                     1e-9 * dt);
}

}  // namespace

Eigen::Index default_truncation(const Vector& x0, double lambda, double alpha_max, double T) {
  Eigen::Index first_zero = x0.size() + 1;
  for (Eigen::Index i = 0; i < x0.size(); ++i)
    if (x0(i) == 0.0) {
      first_zero = i + 1;
      break;
    }
  return first_zero + static_cast<Eigen::Index>(std::ceil(lambda * alpha_max * T)) + 2;
}

FluidSolution integrate_fluid(const Vector& x0, const MasterControl& ctrl, double lambda, double T, double dt,
                              Eigen::Index truncation, FluidOptions opts) {
  check_x0(x0);
  ctrl.validate();
  if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("fluid: dt and T must be positive");
  if (ctrl.horizon() < T * (1.0 - 1e-12)) throw std::invalid_argument("fluid: control does not cover [0, T]");
  const Eigen::Index m = truncation > 0 ? truncation : default_truncation(x0, lambda, ctrl.alpha_max(), T);
  for (Eigen::Index i = m; i < x0.size(); ++i)
    if (x0(i) != 0.0) throw std::invalid_argument("fluid: truncation drops initial mass");

  const Vector grid = time_grid(ctrl, T, dt);
  const Eigen::Index steps = grid.size();

  Vector psi = Vector::Zero(m);
  psi.head(std::min(m, x0.size())) = x0.head(std::min(m, x0.size()));
  Vector zeta = psi;
  SkorokhodStepper reflect(m);

  Matrix zeta_rows(steps, m), psi_rows(steps, m), eta_rows(steps, m);
  zeta_rows.row(0) = zeta.transpose();
  psi_rows.row(0) = psi.transpose();
  eta_rows.row(0).setZero();

  for (Eigen::Index k = 0; k + 1 < steps; ++k) {
    const double h = grid(k + 1) - grid(k);
    const std::size_t piece = ctrl.piece(grid(k));
    const double theta = ctrl.theta[piece];
    const double arrivals = lambda * ctrl.alpha[piece];

    for (Eigen::Index i = 0; i < m; ++i) {
      const double band = zeta(i) - (i + 1 < m ? zeta(i + 1) : 0.0);
      psi(i) -= theta * band * h;
    }
    psi(0) += arrivals * h;
    zeta = reflect.project(psi);

    if (zeta(m - 1) >= 1.0 - opts.margin)
      throw TruncationError("fluid: level " + std::to_string(m) + " reached the barrier at t=" +
                                std::to_string(grid(k + 1)) + "; increase the truncation",
                            grid(k + 1));
    zeta_rows.row(k + 1) = zeta.transpose();
    psi_rows.row(k + 1) = psi.transpose();
    eta_rows.row(k + 1) = reflect.eta().transpose();
  }

  return {PiecewisePath(grid, std::move(zeta_rows), Interpolation::linear),
          PiecewisePath(grid, std::move(psi_rows), Interpolation::linear),
          PiecewisePath(grid, std::move(eta_rows), Interpolation::linear), m, dt};
}

FluidSolution lln_trajectory(const Vector& x0, double lambda, double T, double dt, Eigen::Index truncation) {
  return integrate_fluid(x0, MasterControl::constant(1.0, 1.0, T), lambda, T, dt, truncation);
}

ConvergenceReport wellposedness_check(const Vector& x0, const MasterControl& ctrl, double lambda, double T,
                                      const std::vector<double>& dt_list, Eigen::Index truncation) {
  const Eigen::Index m = truncation > 0 ? truncation : default_truncation(x0, lambda, ctrl.alpha_max(), T);
  ConvergenceReport rep;
  for (double dt : dt_list) {
    const FluidSolution coarse = integrate_fluid(x0, ctrl, lambda, T, dt, m);
    const FluidSolution fine = integrate_fluid(x0, ctrl, lambda, T, 0.5 * dt, m);
    double sup = 0.0;
    for (Eigen::Index k = 0; k < coarse.zeta.size(); ++k) {
      const double t = coarse.zeta.times()(k);
      sup = std::max(sup, l1_norm(coarse.zeta.values().row(k).transpose() - fine.zeta.at(t)));
    }
    rep.dts.push_back(dt);
    rep.errors.push_back(sup);
  }
  rep.exact = std::all_of(rep.errors.begin(), rep.errors.end(), [](double e) { return e <= 1e-12; });
  for (std::size_t k = 1; k < rep.errors.size(); ++k)
    rep.ratios.push_back(rep.errors[k - 1] > 0.0 ? rep.errors[k] / rep.errors[k - 1] : 0.0);
  rep.first_order = !rep.ratios.empty() &&
                    std::all_of(rep.ratios.begin(), rep.ratios.end(), [](double r) { return r >= 0.4 && r <= 0.6; });
  return rep;
}

}  // namespace jsqd
