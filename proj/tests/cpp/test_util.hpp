#pragma once

#include <functional>

#include "ncrf/ad.hpp"
#include "ncrf/geometry.hpp"
#include "ncrf/rng.hpp"

namespace ncrf::test {

// Brute-force parity ray-cast inside test: 3 random directions, majority
// vote. Independent of the winding-number implementation path.
inline bool parity_inside(const Vec3& p, const TriangleMesh& mesh, Rng& rng) {
  int votes = 0;
  for (int trial = 0; trial < 3; ++trial) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    int crossings = 0;
    for (const auto& f : mesh.faces) {
      // Moller-Trumbore
      const Vec3& a = mesh.vertices[f[0]];
      Vec3 e1 = mesh.vertices[f[1]] - a;
      Vec3 e2 = mesh.vertices[f[2]] - a;
      Vec3 pv = dir.cross(e2);
      double det = e1.dot(pv);
      if (std::abs(det) < 1e-14) continue;
      Vec3 tv = p - a;
      double u = tv.dot(pv) / det;
      if (u < 0 || u > 1) continue;
      Vec3 qv = tv.cross(e1);
      double v = dir.dot(qv) / det;
      if (v < 0 || u + v > 1) continue;
      double t = e2.dot(qv) / det;
      if (t > 0) ++crossings;
    }
    votes += crossings % 2;
  }
  return votes >= 2;
}

// Central-difference gradient check of scalar = f() against the gradient
// accumulated in `leaf` by backward(f()). Returns max relative error over
// n random coordinates.
inline double fd_check(const std::function<ad::Tensor()>& build, const ad::Tensor& leaf, int n,
                       uint64_t seed, double h = 1e-6) {
  ad::Tensor loss = build();
  leaf->grad.resize(0, 0);
  ad::backward(loss);
  Mat analytic = leaf->grad.size() > 0 ? leaf->grad : Mat::Zero(leaf->val.rows(), leaf->val.cols());
  Rng rng(seed);
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    int r = int(rng.uniform_index(leaf->val.rows()));
    int c = int(rng.uniform_index(leaf->val.cols()));
    double saved = leaf->val(r, c);
    leaf->val(r, c) = saved + h;
    double plus = build()->val(0, 0);
    leaf->val(r, c) = saved - h;
    double minus = build()->val(0, 0);
    leaf->val(r, c) = saved;
    double fd = (plus - minus) / (2 * h);
    double a = analytic(r, c);
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

inline Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

inline Quat random_quat(Rng& rng) {
  Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q;
}

}  // namespace ncrf::test
