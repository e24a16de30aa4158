#pragma once

#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <functional>

#include "flowrbm/dataset.hpp"
#include "flowrbm/model.hpp"
#include "flowrbm/rng.hpp"

namespace testing {

inline flowrbm::RbmParams random_params(int d, int h, flowrbm::Rng& rng, double sigma = 1.0, double tau = 1.0) {
  flowrbm::RbmParams p(d, h, tau);
  for (Eigen::Index i = 0; i < p.W.size(); ++i) p.W.data()[i] = sigma * rng.normal();
  for (Eigen::Index i = 0; i < d; ++i) p.b[i] = sigma * rng.normal();
  for (Eigen::Index j = 0; j < h; ++j) p.c[j] = sigma * rng.normal();
  return p;
}

inline flowrbm::BinaryDataset random_data(int n, int d, flowrbm::Rng& rng, double p_one = 0.5) {
  flowrbm::BinaryDataset data;
  data.rows.resize(n, d);
  for (Eigen::Index i = 0; i < data.rows.size(); ++i) data.rows.data()[i] = rng.bernoulli(p_one) ? 1.0 : 0.0;
  data.source = "random";
  return data;
}

/// Term-by-term energy, independent of the vectorised implementation.
inline double naive_energy(const flowrbm::RbmParams& p, const Eigen::VectorXd& v, const Eigen::VectorXd& h) {
  double e = 0.0;
  for (int i = 0; i < p.visible(); ++i) {
    for (int j = 0; j < p.hidden(); ++j) e -= v[i] * p.W(i, j) * h[j];
  }
  for (int i = 0; i < p.visible(); ++i) e -= p.b[i] * v[i];
  for (int j = 0; j < p.hidden(); ++j) e -= p.c[j] * h[j];
  return e;
}

/// log sum_{v,h} exp(-E/tau) over the full joint space.
inline double joint_log_partition(const flowrbm::RbmParams& p) {
  const Eigen::MatrixXd vs = flowrbm::all_states(p.visible());
  const Eigen::MatrixXd hs = flowrbm::all_states(p.hidden());
  double best = -INFINITY;
  std::vector<double> terms;
  for (Eigen::Index a = 0; a < vs.rows(); ++a) {
    for (Eigen::Index c = 0; c < hs.rows(); ++c) {
      terms.push_back(-naive_energy(p, vs.row(a).transpose(), hs.row(c).transpose()) / p.tau);
      best = std::max(best, terms.back());
    }
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

/// Exact p(v) from the joint, without free energies.
inline Eigen::VectorXd joint_visible_probs(const flowrbm::RbmParams& p) {
  const Eigen::MatrixXd vs = flowrbm::all_states(p.visible());
  const Eigen::MatrixXd hs = flowrbm::all_states(p.hidden());
  const double log_z = joint_log_partition(p);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(vs.rows());
  for (Eigen::Index a = 0; a < vs.rows(); ++a) {
    for (Eigen::Index c = 0; c < hs.rows(); ++c) {
      out[a] += std::exp(-naive_energy(p, vs.row(a).transpose(), hs.row(c).transpose()) / p.tau - log_z);
    }
  }
  return out;
}

/// Central differences of a scalar function of the flattened parameters.
inline Eigen::VectorXd finite_difference(const flowrbm::RbmParams& p,
                                         const std::function<double(const flowrbm::RbmParams&)>& f,
                                         double step = 1e-5) {
  Eigen::VectorXd flat = p.flatten();
  Eigen::VectorXd out(flat.size());
  flowrbm::RbmParams q = p;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + step;
    q.assign_flat(flat);
    const double up = f(q);
    flat[i] = keep - step;
    q.assign_flat(flat);
    const double down = f(q);
    flat[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

/// max_i |a_i - b_i| / max(|b|_inf, floor).
inline double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), floor);
}

inline double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace testing
