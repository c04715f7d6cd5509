#pragma once

#include <cmath>
#include <vector>

#include "privkit/kernels.hpp"
#include "privkit/matrix.hpp"
#include "privkit/models.hpp"
#include "privkit/rng.hpp"

namespace privkit::testing {

inline Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    m(static_cast<Index>(i), labels[i]) = 1.0;
  return m;
}

inline std::vector<int> alternating_labels(int n, int classes) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i % classes;
  return out;
}

// Explicit index-loop evaluation of the biased binary statistic; the
// independent route the matrix-form code is checked against.
inline double binary_mmd_direct(const Matrix& z, const std::vector<int>& s,
                                const KernelSpec& spec) {
  const Index n = z.cols();
  Matrix k = kernel_matrix(z, z, spec);
  double s00 = 0, s11 = 0, s01 = 0;
  double n0 = 0, n1 = 0;
  for (Index i = 0; i < n; ++i) (s[static_cast<std::size_t>(i)] ? n1 : n0) += 1.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const int si = s[static_cast<std::size_t>(i)];
      const int sj = s[static_cast<std::size_t>(j)];
      if (si == 0 && sj == 0) s00 += k(i, j);
      if (si == 1 && sj == 1) s11 += k(i, j);
      if (si == 0 && sj == 1) s01 += k(i, j);
    }
  double sq = s00 / (n0 * n0) + s11 / (n1 * n1) - 2.0 * s01 / (n0 * n1);
  return std::sqrt(std::max(sq, 0.0));
}

// Pseudo-inverse form tr((Kc^2 + rho Kc)^+ Kc P P^T Kc) through an explicit
// eigendecomposition, eigenvalues below 1e-10 truncated. Independent of the
// resolvent-solve route used by the library.
inline double kdi_eig_oracle(const Matrix& z, const Matrix& p, const KernelSpec& spec,
                             double rho) {
  Matrix kc = center_kernel(kernel_matrix(z, z, spec));
  auto [evals, v] = sym_eig(kc);
  Matrix kb = kc * p * p.transpose() * kc;
  Matrix m = v.transpose() * kb * v;
  double acc = 0.0;
  for (Index i = 0; i < evals.size(); ++i)
    if (evals(i) > 1e-10) acc += m(i, i) / (evals(i) * evals(i) + rho * evals(i));
  return acc;
}

// Largest generalized eigenvalue of (A, B) by power iteration on the
// whitened matrix; brute-force route for the single-direction projection.
inline double top_generalized_eigenvalue(const Matrix& a, const Matrix& b,
                                         std::uint64_t seed) {
  Eigen::LLT<Matrix> llt(b);
  Matrix l = llt.matrixL();
  Matrix li = l.triangularView<Eigen::Lower>().solve(
      Matrix::Identity(a.rows(), a.cols()));
  Matrix m = li * a * li.transpose();
  m = 0.5 * (m + m.transpose());
  // Shift so the dominant eigenvalue of the shifted matrix is the largest
  // algebraic one.
  double shift = m.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  Matrix ms = m + shift * Matrix::Identity(m.rows(), m.cols());
  Rng rng(seed);
  Vector v = rng.gaussian_matrix(m.rows(), 1);
  v.normalize();
  for (int it = 0; it < 2000; ++it) {
    v = ms * v;
    v.normalize();
  }
  return v.dot(m * v);
}

}  // namespace privkit::testing
