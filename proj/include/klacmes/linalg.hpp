#ifndef KLACMES_LINALG_HPP
#define KLACMES_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace klacmes {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns match values
};

/// Cyclic Jacobi eigendecomposition for symmetric matrices.
///
/// The rotation order is fixed, which makes the decomposition fully
/// deterministic, and every arithmetic step is exactly equivariant under
/// symmetric sign conjugation A -> S A S with S = diag(+-1). The optimizer's
/// mirror-image equivariance tests rely on that bit-level property, so do
/// not swap this for a Householder-based solver without revisiting them.
inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a, int max_sweeps = 64) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw std::invalid_argument("symmetric_eigen: matrix not square");

  Eigen::MatrixXd m = a;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  for (int sweep = 0; sweep < max_sweeps && n > 1; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    const double diag_scale = m.diagonal().norm();
    if (std::sqrt(off) <= 1e-15 * std::max(diag_scale, 1e-300)) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        double t;
        if (theta > 0.0)
          t = 1.0 / (theta + std::sqrt(theta * theta + 1.0));
        else if (theta < 0.0)
          t = 1.0 / (theta - std::sqrt(theta * theta + 1.0));
        else
          // theta is +-0; its sign carries sign(apq), pick the matching 45-degree rotation
          t = std::signbit(theta) ? -1.0 : 1.0;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = m(p, p);
        const double aqq = m(q, q);
        m(p, p) = app - t * apq;
        m(q, q) = aqq + t * apq;
        m(p, q) = 0.0;
        m(q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = m(r, p);
          const double arq = m(r, q);
          m(r, p) = arp - s * (arq + tau * arp);
          m(p, r) = m(r, p);
          m(r, q) = arq + s * (arp - tau * arq);
          m(q, r) = m(r, q);
        }
        for (int r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int i, int j) { return m(i, i) < m(j, j); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    out.values[k] = m(idx[k], idx[k]);
    out.vectors.col(k) = v.col(idx[k]);
  }
  return out;
}

// Copies the lower triangle onto the upper one so the stored matrix is
// exactly symmetric (the lower triangle is authoritative).
inline void symmetrize_lower(Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i);
}

}  // namespace klacmes

#endif  // KLACMES_LINALG_HPP
