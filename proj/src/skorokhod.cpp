#include "jsqd/skorokhod.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace jsqd {

namespace {

// Crossings closer than this (as a fraction of the segment) to an existing
// grid point are not inserted; the residual they leave is O(width * drop).
constexpr double kMinSplit = 1e-12;

struct Grid {
  std::vector<double> t;
  std::vector<Vector> psi;
  std::vector<Vector> eta;
};

Vector lerp(const Vector& a, const Vector& b, double w) { return a + w * (b - a); }

// Regulators are non-decreasing along the grid; keep interpolated rows
// between their neighbours despite rounding.
Vector lerp_between(const Vector& a, const Vector& b, double w) {
  return lerp(a, b, w).cwiseMax(a.cwiseMin(b)).cwiseMin(a.cwiseMax(b));
}

PiecewisePath pack(const std::vector<double>& t, const std::vector<Vector>& rows, Interpolation interp) {
  const auto k = static_cast<Eigen::Index>(t.size());
  const Eigen::Index m = rows.front().size();
  Matrix v(k, m);
  for (Eigen::Index r = 0; r < k; ++r) v.row(r) = rows[static_cast<std::size_t>(r)].transpose();
  return PiecewisePath(Eigen::Map<const Vector>(t.data(), k), std::move(v), interp);
}

// Adds coordinate i to an already-solved prefix 0..i-1 on a linear grid.
Grid resolve_linear(Grid g, Eigen::Index i) {
  Grid out;
  out.t.reserve(g.t.size());
  out.psi.reserve(g.t.size());
  out.eta.reserve(g.t.size());

  auto z_of = [i](const Vector& psi, const Vector& eta) {
    return i == 0 ? psi(0) : psi(i) + eta(i - 1);
  };

  out.t.push_back(g.t[0]);
  out.psi.push_back(g.psi[0]);
  out.eta.push_back(g.eta[0]);
  double running = 0.0;  // eta_i at the last emitted point
  for (std::size_t k = 0; k + 1 < g.t.size(); ++k) {
    const double z0 = z_of(g.psi[k], g.eta[k]);
    const double z1 = z_of(g.psi[k + 1], g.eta[k + 1]);
    const double level = kBarrier + running;
    if (z1 > level && z0 < level) {
      const double w = (level - z0) / (z1 - z0);
      if (w > kMinSplit && w < 1.0 - kMinSplit) {
        out.t.push_back(g.t[k] + w * (g.t[k + 1] - g.t[k]));
        out.psi.push_back(lerp(g.psi[k], g.psi[k + 1], w));
        Vector e = lerp_between(g.eta[k], g.eta[k + 1], w);
        e(i) = running;
        out.eta.push_back(std::move(e));
      }
    }
    running = std::max(running, z1 - kBarrier);
    out.t.push_back(g.t[k + 1]);
    out.psi.push_back(g.psi[k + 1]);
    Vector e = g.eta[k + 1];
    e(i) = running;
    out.eta.push_back(std::move(e));
  }
  return out;
}

void resolve_step(Grid& g, Eigen::Index i) {
  double running = 0.0;
  for (std::size_t k = 0; k < g.t.size(); ++k) {
    const double z = i == 0 ? g.psi[k](0) : g.psi[k](i) + g.eta[k](i - 1);
    running = std::max(running, z - kBarrier);
    g.eta[k](i) = running;
  }
}

}  // namespace

SkorokhodSolution solve_skorokhod(const PiecewisePath& psi) {
  const Eigen::Index m = psi.dimension();
  if (m == 0) throw std::invalid_argument("skorokhod: zero-dimensional input");
  if ((psi.values().row(0).array() > kBarrier).any())
    throw std::invalid_argument("skorokhod: psi(0) must lie in (-inf, 1]^M");

  Grid g;
  g.t.assign(psi.times().data(), psi.times().data() + psi.size());
  for (Eigen::Index k = 0; k < psi.size(); ++k) {
    g.psi.push_back(psi.values().row(k).transpose());
    g.eta.push_back(Vector::Zero(m));
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    if (psi.interpolation() == Interpolation::linear)
      g = resolve_linear(std::move(g), i);
    else
      resolve_step(g, i);
  }

  std::vector<Vector> phi(g.t.size());
  for (std::size_t k = 0; k < g.t.size(); ++k) {
    Vector p(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = i == 0 ? g.psi[k](0) : g.psi[k](i) + g.eta[k](i - 1);
      p(i) = z - g.eta[k](i);
    }
    phi[k] = std::move(p);
  }

  const auto interp = psi.interpolation();
  return {pack(g.t, phi, interp), pack(g.t, g.eta, interp), pack(g.t, g.psi, interp)};
}

double complementarity_residual(const SkorokhodSolution& sol) {
  const Matrix& phi = sol.phi.values();
  const Matrix& eta = sol.eta.values();
  double r = 0.0;
  for (Eigen::Index i = 0; i < phi.cols(); ++i)
    for (Eigen::Index k = 0; k + 1 < phi.rows(); ++k)
      r += std::abs(kBarrier - phi(k, i)) * (eta(k + 1, i) - eta(k, i));
  return r;
}

double reflection_identity_error(const SkorokhodSolution& sol) {
  const Matrix& phi = sol.phi.values();
  const Matrix& eta = sol.eta.values();
  const Matrix& psi = sol.psi.values();
  double err = 0.0;
  for (Eigen::Index k = 0; k < phi.rows(); ++k)
    for (Eigen::Index i = 0; i < phi.cols(); ++i) {
      const double z = i == 0 ? psi(k, 0) : psi(k, i) + eta(k, i - 1);
      err = std::max(err, std::abs(phi(k, i) - (z - eta(k, i))));
    }
  return err;
}

LipschitzGap lipschitz_gap(const PiecewisePath& psi_a, const PiecewisePath& psi_b) {
  if (psi_a.dimension() != psi_b.dimension() || psi_a.size() != psi_b.size() ||
      psi_a.times() != psi_b.times() || psi_a.interpolation() != psi_b.interpolation())
    throw std::invalid_argument("lipschitz_gap: inputs must share grid and dimension");
  LipschitzGap gap;
  for (Eigen::Index k = 0; k < psi_a.size(); ++k)
    gap.gap_in = std::max(gap.gap_in, l1_norm(psi_a.values().row(k) - psi_b.values().row(k)));
  gap.gap_out = sup_l1_distance(solve_skorokhod(psi_a).phi, solve_skorokhod(psi_b).phi);
  return gap;
}

Vector SkorokhodStepper::project(const Vector& psi) {
  if (psi.size() != eta_.size()) throw std::invalid_argument("skorokhod stepper: dimension mismatch");
  Vector phi(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const double z = i == 0 ? psi(0) : psi(i) + eta_(i - 1);
    eta_(i) = std::max(eta_(i), z - kBarrier);
    phi(i) = z - eta_(i);
  }
  return phi;
}

}  // namespace jsqd
