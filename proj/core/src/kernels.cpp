#include "privkit/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "privkit/rng.hpp"

namespace privkit {

void KernelSpec::validate() const {
  if (variant == KernelVariant::kGaussianMixture) {
    if (bandwidths.empty()) throw ContractError("kernel spec: no bandwidths");
    for (double s : bandwidths)
      if (!(s > 0)) throw ContractError("kernel spec: bandwidths must be positive");
  } else {
    if (bandwidths.empty()) throw ContractError("kernel spec: no bandwidths");
    for (double s : bandwidths)
      if (!(s > 0)) throw ContractError("kernel spec: bandwidths must be positive");
    if (rf_dim <= 0 || rf_dim % 2 != 0)
      throw ContractError("kernel spec: rf_dim must be positive and even");
  }
}

namespace {

Matrix mixture_kernel(const Matrix& a, const Matrix& b,
                      const std::vector<double>& bw) {
  Vector an = a.colwise().squaredNorm();
  Vector bn = b.colwise().squaredNorm();
  Matrix d = -2.0 * a.transpose() * b;
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  d = d.cwiseMax(0.0);
  Matrix k = Matrix::Zero(d.rows(), d.cols());
  for (double s : bw) k += (-d / (2.0 * s * s)).array().exp().matrix();
  return k / static_cast<double>(bw.size());
}

constexpr double kSqrtClampEps = 1e-12;

double clamped_sqrt(double x) { return std::sqrt(std::max(x, kSqrtClampEps)); }

}  // namespace

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
  spec.validate();
  if (a.rows() != b.rows())
    throw ContractError("kernel_matrix: feature dimensions disagree (" +
                        std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) +
                        ")");
  if (spec.variant == KernelVariant::kGaussianMixture)
    return mixture_kernel(a, b, spec.bandwidths);
  Matrix fa = rf_feature_map(a, spec);
  Matrix fb = rf_feature_map(b, spec);
  return fa.transpose() * fb;
}

Matrix center_kernel(const Matrix& k) {
  if (k.rows() != k.cols()) throw ContractError("center_kernel: matrix not square");
  Vector row_mean = k.rowwise().mean();
  Eigen::RowVectorXd col_mean = k.colwise().mean();
  double total = k.mean();
  Matrix out = k;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += total;
  return out;
}

double mmd(const Matrix& z, const Matrix& labels, const KernelSpec& spec,
           EmptyClassPolicy policy) {
  spec.validate();
  const Index n = z.cols();
  if (labels.rows() != n)
    throw ContractError("mmd: label rows must match sample count");
  const Index num_classes = labels.cols();
  if (num_classes < 2) throw ContractError("mmd: need at least two label columns");

  const Matrix k = kernel_matrix(z, z, spec);
  const Vector ones = Vector::Ones(n);
  double total = 0.0;
  for (Index l = 0; l < num_classes; ++l) {
    Vector p = labels.col(l);
    Vector q = ones - p;
    double nl = p.sum();
    double nr = q.sum();
    if (nl < 0.5 || nr < 0.5) {
      if (policy == EmptyClassPolicy::kReject)
        throw ContractError("mmd: class " + std::to_string(l) +
                            " is empty (or covers every sample)");
      continue;
    }
    Vector kp = k * p;
    Vector kq = k * q;
    double term = p.dot(kp) / (nl * nl) + q.dot(kq) / (nr * nr) -
                  2.0 * p.dot(kq) / (nl * nr);
    total += (nl / static_cast<double>(n)) * clamped_sqrt(term);
  }
  return total;
}

double kdi_from_kernel(const Matrix& k, const Matrix& p, double rho) {
  if (!(rho > 0)) throw ContractError("kdi: rho must be positive");
  const Index n = k.rows();
  if (n < 2) throw ContractError("kdi: need at least two samples");
  if (p.rows() != n) throw ContractError("kdi: label rows must match sample count");
  Matrix kc = center_kernel(k);
  Matrix a = kc;
  a.diagonal().array() += rho;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericError("kdi: centered kernel + rho*I is not positive definite");
  Matrix r = llt.solve(p);
  return (p.cwiseProduct(kc * r)).sum();
}

double kdi(const Matrix& z, const Matrix& p, const KernelSpec& spec, double rho) {
  spec.validate();
  if (p.rows() != z.cols())
    throw ContractError("kdi: label rows must match sample count");
  return kdi_from_kernel(kernel_matrix(z, z, spec), p, rho);
}

Matrix rf_frequencies(Index input_dim, const KernelSpec& spec) {
  spec.validate();
  if (spec.variant != KernelVariant::kRandomFourier)
    throw ContractError("rf_frequencies: spec variant is not random-fourier");
  const Index half = spec.rf_dim / 2;
  Rng rng(Rng::mix(spec.rf_seed, 0x8f1eull));
  Matrix omega(input_dim, half);
  const std::size_t t_count = spec.bandwidths.size();
  for (Index j = 0; j < half; ++j) {
    double sigma = spec.bandwidths[static_cast<std::size_t>(j) % t_count];
    for (Index i = 0; i < input_dim; ++i) omega(i, j) = rng.gaussian() / sigma;
  }
  return omega;
}

Matrix rf_feature_map(const Matrix& z, const KernelSpec& spec) {
  if (spec.variant != KernelVariant::kRandomFourier)
    throw ContractError("rf_feature_map: spec variant is not random-fourier");
  spec.validate();
  Matrix omega = rf_frequencies(z.rows(), spec);
  Matrix proj = omega.transpose() * z;  // (D/2) x N
  const double scale = std::sqrt(2.0 / static_cast<double>(spec.rf_dim));
  Matrix phi(spec.rf_dim, z.cols());
  phi.topRows(omega.cols()) = scale * proj.array().cos().matrix();
  phi.bottomRows(omega.cols()) = scale * proj.array().sin().matrix();
  return phi;
}

namespace {

double binary_mmd_from_kernel(const Matrix& k, const std::vector<int>& s) {
  const Index n = k.rows();
  Vector p(n);
  for (Index i = 0; i < n; ++i) p(i) = s[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  Vector q = Vector::Ones(n) - p;
  double n1 = p.sum(), n0 = q.sum();
  Vector kp = k * p;
  Vector kq = k * q;
  double term = p.dot(kp) / (n1 * n1) + q.dot(kq) / (n0 * n0) -
                2.0 * p.dot(kq) / (n0 * n1);
  return clamped_sqrt(term);
}

}  // namespace

PermutationTestResult permutation_test(const Matrix& z, const std::vector<int>& s,
                                       const KernelSpec& spec, int n_perm,
                                       std::uint64_t seed) {
  spec.validate();
  if (static_cast<Index>(s.size()) != z.cols())
    throw ContractError("permutation_test: label count must match sample count");
  if (n_perm < 99) throw ContractError("permutation_test: need n_perm >= 99");
  std::size_t ones = 0;
  for (int v : s) {
    if (v != 0 && v != 1) throw ContractError("permutation_test: labels must be 0/1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == s.size())
    throw ContractError("permutation_test: both classes must be non-empty");

  const Matrix k = kernel_matrix(z, z, spec);
  PermutationTestResult result;
  result.observed = binary_mmd_from_kernel(k, s);

  Rng rng(seed);
  std::vector<int> shuffled = s;
  result.permuted.reserve(static_cast<std::size_t>(n_perm));
  int at_least = 0;
  for (int t = 0; t < n_perm; ++t) {
    rng.shuffle(shuffled);
    double stat = binary_mmd_from_kernel(k, shuffled);
    result.permuted.push_back(stat);
    if (stat >= result.observed) ++at_least;
  }
  result.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_perm);
  return result;
}

double mlpd_linear_oracle(const Matrix& z, const Matrix& p, double rho) {
  if (!(rho > 0)) throw ContractError("mlpd_linear_oracle: rho must be positive");
  const Index n = z.cols();
  if (p.rows() != n)
    throw ContractError("mlpd_linear_oracle: label rows must match sample count");

  Vector mean = z.rowwise().mean();
  Matrix zc = z.colwise() - mean;
  Matrix pc = p.rowwise() - p.colwise().mean();
  Matrix scatter = zc * zc.transpose();
  scatter.diagonal().array() += rho;
  Eigen::LLT<Matrix> llt(scatter);
  if (llt.info() != Eigen::Success)
    throw NumericError("mlpd_linear_oracle: ridge system not positive definite");
  Matrix w = llt.solve(zc * pc);
  Eigen::RowVectorXd b =
      (p.colwise().sum() - (w.transpose() * z.rowwise().sum()).transpose()) /
      static_cast<double>(n);
  Matrix residual = z.transpose() * w - p;
  residual.rowwise() += b;
  return residual.squaredNorm() + rho * w.squaredNorm();
}

}  // namespace privkit
