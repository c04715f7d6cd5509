#pragma once

#include <cstdint>
#include <vector>

#include "privkit/errors.hpp"
#include "privkit/matrix.hpp"

namespace privkit {

enum class KernelVariant { kGaussianMixture, kRandomFourier };

// Kernel choice shared by the closed-form statistics and the loss graphs:
// either an exact mixture of Gaussians or its random Fourier approximation.
struct KernelSpec {
  KernelVariant variant = KernelVariant::kGaussianMixture;
  std::vector<double> bandwidths = {1, 2, 4, 8, 16};
  int rf_dim = 1000;          // paired cos/sin features, must be even
  std::uint64_t rf_seed = 0;  // fixes the frequency table

  void validate() const;
};

// What to do when a class has no samples: reject (full-data statistics) or
// skip that class's term (minibatch losses).
enum class EmptyClassPolicy { kReject, kSkip };

// Entry (i,j) = k(a_i, b_j) over the columns of a and b. For the
// random-Fourier variant this is the approximate kernel phi(a)^T phi(b).
Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec);

// K -> C K C with C = I - (1/N) 1 1^T. Row and column sums of the result
// vanish to machine precision.
Matrix center_kernel(const Matrix& k);

// Biased MMD statistic; one-vs-rest weighted sum for L > 2 classes, which
// reduces exactly to the binary statistic at L = 2. `labels` is one-hot N x L.
double mmd(const Matrix& z, const Matrix& labels, const KernelSpec& spec,
           EmptyClassPolicy policy = EmptyClassPolicy::kReject);

// Kernel discriminant information tr((Kc^2 + rho Kc)^+ Kc P P^T Kc),
// evaluated through the equivalent resolvent form tr(P^T Kc (Kc + rho I)^-1 P).
// `p` may be any real label matrix (N x L).
double kdi(const Matrix& z, const Matrix& p, const KernelSpec& spec, double rho);

// Same statistic for a precomputed (uncentered) kernel matrix; lets callers
// evaluate KDI under kernels outside KernelSpec, e.g. the linear kernel the
// ridge oracle is phrased in.
double kdi_from_kernel(const Matrix& k, const Matrix& p, double rho);

// Frequency table for the random-Fourier map: q x (rf_dim / 2), column j
// drawn from the spectral density of bandwidth j % T. Deterministic in
// (input_dim, spec).
Matrix rf_frequencies(Index input_dim, const KernelSpec& spec);

// Paired-feature map, D x N with rows [cos; sin] scaled by sqrt(2/D) so that
// phi(z)^T phi(z) = 1 exactly.
Matrix rf_feature_map(const Matrix& z, const KernelSpec& spec);

struct PermutationTestResult {
  double observed = 0.0;
  std::vector<double> permuted;
  double p_value = 1.0;  // (1 + #{permuted >= observed}) / (1 + n_perm)
};

// Label-permutation approximation of the two-sample independence test:
// shuffles the binary labels n_perm times, preserving class sizes.
PermutationTestResult permutation_test(const Matrix& z, const std::vector<int>& s,
                                       const KernelSpec& spec, int n_perm,
                                       std::uint64_t seed);

// Closed-form minimum of the linear ridge problem
//   min_{W,b} ||Z^T W + 1 b^T - P||_F^2 + rho ||W||_F^2 .
// Test oracle for kdi with the linear kernel.
double mlpd_linear_oracle(const Matrix& z, const Matrix& p, double rho);

}  // namespace privkit
