#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "privkit/kernels.hpp"
#include "privkit/rng.hpp"
#include "test_support.hpp"

using namespace privkit;

TEST_SUITE("kernels") {

TEST_CASE("gaussian mixture kernel values") {
  KernelSpec spec;  // default bandwidths {1,2,4,8,16}
  Rng rng(3);
  Matrix z = rng.gaussian_matrix(4, 6);
  Matrix k = kernel_matrix(z, z, spec);
  for (Index i = 0; i < 6; ++i) CHECK(k(i, i) == doctest::Approx(1.0));

  Matrix a(1, 1), b(1, 1);
  a << 0.0;
  b << 2.0;
  CHECK(kernel_matrix(a, b, spec)(0, 0) == doctest::Approx(0.717163).epsilon(1e-6));

  Matrix x = rng.gaussian_matrix(3, 5);
  Matrix y = rng.gaussian_matrix(3, 4);
  Matrix kxy = kernel_matrix(x, y, spec);
  Matrix kyx = kernel_matrix(y, x, spec);
  CHECK((kxy - kyx.transpose()).cwiseAbs().maxCoeff() <= 1e-15);

  Matrix bad = rng.gaussian_matrix(2, 5);
  CHECK_THROWS_AS(kernel_matrix(x, bad, spec), ContractError);
}

TEST_CASE("center_kernel removes row and column means") {
  Matrix ones = Matrix::Ones(4, 4);
  CHECK(center_kernel(ones).cwiseAbs().maxCoeff() <= 1e-12);

  Rng rng(5);
  Matrix z = rng.gaussian_matrix(3, 8);
  Matrix k = kernel_matrix(z, z, KernelSpec{});
  Matrix kc = center_kernel(k);
  CHECK(kc.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(kc.colwise().sum().cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((center_kernel(kc) - kc).cwiseAbs().maxCoeff() <= 1e-12);

  double kv = 0.3;
  Matrix k2(2, 2);
  k2 << 1, kv, kv, 1;
  Matrix expected(2, 2);
  expected << 1, -1, -1, 1;
  expected *= (1 - kv) / 2;
  CHECK((center_kernel(k2) - expected).cwiseAbs().maxCoeff() <= 1e-14);

  CHECK_THROWS_AS(center_kernel(Matrix::Ones(2, 3)), ContractError);
}

TEST_CASE("mmd vanishes on identical per-class multisets") {
  Matrix z(2, 4);
  z << 0, 1, 0, 1, 0, 1, 0, 1;  // class multisets {(0,0),(1,1)} twice
  Matrix labels = testing::one_hot({0, 0, 1, 1}, 2);
  CHECK(mmd(z, labels, KernelSpec{}) <= 1e-9);
}

TEST_CASE("mmd reproduces the two-point hand value") {
  Matrix z(1, 2);
  z << 0, 2;
  KernelSpec spec;
  spec.bandwidths = {1.0};
  double expected = std::sqrt(2.0 - 2.0 * std::exp(-2.0));
  CHECK(mmd(z, testing::one_hot({0, 1}, 2), spec) ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("one-vs-rest at two classes equals the binary statistic") {
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    Matrix z = r.gaussian_matrix(3, 12);
    std::vector<int> s = testing::alternating_labels(12, 2);
    double general = mmd(z, testing::one_hot(s, 2), KernelSpec{});
    double direct = testing::binary_mmd_direct(z, s, KernelSpec{});
    CHECK(general == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("mmd is non-negative and rejects empty classes when told to") {
  Rng rng(13);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    Matrix z = r.gaussian_matrix(2, 9);
    CHECK(mmd(z, testing::one_hot(testing::alternating_labels(9, 3), 3),
              KernelSpec{}) >= 0.0);
  }
  Matrix z = rng.gaussian_matrix(2, 4);
  Matrix labels = Matrix::Zero(4, 3);
  for (int i = 0; i < 4; ++i) labels(i, i % 2) = 1;  // class 2 empty
  CHECK_THROWS_AS(mmd(z, labels, KernelSpec{}, EmptyClassPolicy::kReject),
                  ContractError);
  CHECK_NOTHROW(mmd(z, labels, KernelSpec{}, EmptyClassPolicy::kSkip));
}

TEST_CASE("kdi closed-form two-sample value") {
  Matrix z(1, 2);
  z << 0, 2;
  Matrix p(2, 1);
  p << 0, 1;
  KernelSpec spec;
  spec.bandwidths = {1.0};
  const double lambda = 1.0 - std::exp(-2.0);
  const double expected = 0.5 * lambda / (lambda + 1e-4);
  CHECK(kdi(z, p, spec, 1e-4) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("kdi of a constant label column is zero") {
  Rng rng(17);
  Matrix z = rng.gaussian_matrix(3, 7);
  Matrix p = Matrix::Ones(7, 1);
  CHECK(std::abs(kdi(z, p, KernelSpec{}, 1e-4)) <= 1e-9);
}

TEST_CASE("resolvent kdi equals the eigendecomposition pseudo-inverse form") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    Matrix z = rng.gaussian_matrix(3, 10);
    Matrix p = testing::one_hot(testing::alternating_labels(10, 2), 2);
    double via_solve = kdi(z, p, KernelSpec{}, 1e-4);
    double via_eig = testing::kdi_eig_oracle(z, p, KernelSpec{}, 1e-4);
    CHECK(std::abs(via_solve - via_eig) <= 1e-8);
  }
}

TEST_CASE("linear-kernel kdi matches the ridge oracle identity") {
  // KDI = ||P centered||_F^2 - MLPD for explicit linear features.
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    Matrix z = rng.gaussian_matrix(3, 8);
    Matrix p = testing::one_hot(testing::alternating_labels(8, 2), 2);
    double kdi_linear = kdi_from_kernel(z.transpose() * z, p, 1e-3);
    Matrix pc = p.rowwise() - p.colwise().mean();
    double identity = pc.squaredNorm() - mlpd_linear_oracle(z, p, 1e-3);
    CHECK(std::abs(kdi_linear - identity) <= 1e-6);
  }
}

TEST_CASE("mlpd oracle limits") {
  Rng rng(23);
  Matrix z = rng.gaussian_matrix(3, 9);
  Matrix constant = Matrix::Ones(9, 1);
  CHECK(mlpd_linear_oracle(z, constant, 1e-4) <= 1e-9);

  Matrix p = testing::one_hot(testing::alternating_labels(9, 3), 3);
  Matrix pc = p.rowwise() - p.colwise().mean();
  double huge_ridge = mlpd_linear_oracle(z, p, 1e9);
  CHECK(huge_ridge == doctest::Approx(pc.squaredNorm()).epsilon(1e-3));
}

TEST_CASE("kdi sandwich between scaled squared mmd") {
  KernelSpec spec;
  spec.bandwidths = {1.5};
  const double rho = 1e-4;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const int n = 8 + static_cast<int>(seed % 5);
    Matrix z = rng.gaussian_matrix(3, n);
    std::vector<int> s = testing::alternating_labels(n, 2);
    Matrix p(n, 1);
    for (int i = 0; i < n; ++i) p(i, 0) = s[static_cast<std::size_t>(i)];
    double value = kdi(z, p, spec, rho);
    double m = mmd(z, testing::one_hot(s, 2), spec);
    double n1 = p.sum();
    double n0 = n - n1;
    double delta = (n1 * n0 / n) * (n1 * n0 / n);
    CHECK(value >= delta / (n + rho) * m * m - 1e-9);
    CHECK(value <= delta / rho * m * m + 1e-9);
  }
}

TEST_CASE("kdi stays within [0, centered label energy]") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    Matrix z = rng.gaussian_matrix(2, 9);
    Matrix p = testing::one_hot(testing::alternating_labels(9, 3), 3);
    double value = kdi(z, p, KernelSpec{}, 1e-4);
    Matrix pc = p.rowwise() - p.colwise().mean();
    CHECK(value >= -1e-10);
    CHECK(value <= pc.squaredNorm() + 1e-10);
  }
  CHECK_THROWS_AS(kdi(Matrix::Ones(2, 4), Matrix::Ones(4, 1), KernelSpec{}, 0.0),
                  ContractError);
}

TEST_CASE("random fourier features are unit-norm and approximate the kernel") {
  KernelSpec spec;
  spec.variant = KernelVariant::kRandomFourier;
  spec.bandwidths = {2.0};
  spec.rf_dim = 1000;
  spec.rf_seed = 5;

  Rng rng(31);
  Matrix z = rng.gaussian_matrix(4, 9);
  Matrix phi = rf_feature_map(z, spec);
  CHECK(phi.rows() == 1000);
  CHECK(phi.cols() == 9);
  for (Index i = 0; i < 9; ++i)
    CHECK(phi.col(i).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));

  KernelSpec exact;
  exact.bandwidths = {2.0};
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    Matrix x = rng.gaussian_matrix(4, 1);
    Matrix y = rng.gaussian_matrix(4, 1);
    double approx = (rf_feature_map(x, spec).transpose() * rf_feature_map(y, spec))(0, 0);
    double truth = kernel_matrix(x, y, exact)(0, 0);
    worst = std::max(worst, std::abs(approx - truth));
  }
  CHECK(worst <= 0.05);

  CHECK_THROWS_AS(rf_feature_map(z, exact), ContractError);
}

TEST_CASE("rf frequency table is fixed by the seed") {
  KernelSpec spec;
  spec.variant = KernelVariant::kRandomFourier;
  spec.rf_dim = 100;
  spec.rf_seed = 9;
  Matrix a = rf_frequencies(3, spec);
  Matrix b = rf_frequencies(3, spec);
  CHECK((a.array() == b.array()).all());
  spec.rf_seed = 10;
  CHECK((a - rf_frequencies(3, spec)).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("permutation test on identical multisets reports p = 1") {
  Matrix z(1, 6);
  z << 0, 1, 2, 0, 1, 2;
  std::vector<int> s = {0, 0, 0, 1, 1, 1};
  PermutationTestResult r = permutation_test(z, s, KernelSpec{}, 99, 7);
  CHECK(r.observed <= 1e-6);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("permutation test under strong separation hits the floor") {
  KernelSpec spec;
  spec.bandwidths = {1.0};
  Rng rng(41);
  Matrix z(1, 40);
  std::vector<int> s(40);
  for (int i = 0; i < 40; ++i) {
    s[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
    z(0, i) = (i < 20 ? 0.0 : 100.0) + 0.01 * rng.gaussian();
  }
  PermutationTestResult r = permutation_test(z, s, spec, 199, 11);
  CHECK(r.p_value == doctest::Approx(1.0 / 200.0));
}

TEST_CASE("permutation test p-value is invariant to label flips") {
  Rng rng(43);
  Matrix z = rng.gaussian_matrix(2, 16);
  std::vector<int> s = testing::alternating_labels(16, 2);
  std::vector<int> flipped(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) flipped[i] = 1 - s[i];
  PermutationTestResult a = permutation_test(z, s, KernelSpec{}, 99, 13);
  PermutationTestResult b = permutation_test(z, flipped, KernelSpec{}, 99, 13);
  CHECK(a.p_value == b.p_value);
  CHECK(a.observed == doctest::Approx(b.observed).epsilon(1e-12));
}

TEST_CASE("permutation test contract errors") {
  Rng rng(47);
  Matrix z = rng.gaussian_matrix(2, 6);
  std::vector<int> single(6, 0);
  CHECK_THROWS_AS(permutation_test(z, single, KernelSpec{}, 99, 1), ContractError);
  std::vector<int> s = testing::alternating_labels(6, 2);
  CHECK_THROWS_AS(permutation_test(z, s, KernelSpec{}, 50, 1), ContractError);
}

}  // TEST_SUITE
