#include "privkit/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "privkit/rng.hpp"

namespace privkit {

void PrivateSphereSpec::validate() const {
  if (input_dim <= 0 || funnel_dim <= 0)
    throw ContractError("private sphere spec: dimensions must be positive");
  if (funnel_dim > input_dim)
    throw ContractError("private sphere spec: funnel_dim must not exceed input_dim");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ContractError("private sphere spec: dropout_rate must be in [0,1)");
}

void PublicSphereSpec::validate() const {
  if (classes <= 0) throw ContractError("public sphere spec: classes must be positive");
  for (int h : hidden)
    if (h <= 0) throw ContractError("public sphere spec: hidden sizes must be positive");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ContractError("public sphere spec: dropout_rate must be in [0,1)");
}

void DiscriminatorSpec::validate() const {
  if (output_dim <= 0)
    throw ContractError("discriminator spec: output_dim must be positive");
  for (int h : hidden)
    if (h <= 0) throw ContractError("discriminator spec: hidden sizes must be positive");
  if (dropout || batch_norm)
    throw ContractError(
        "discriminator spec: dropout/batch-norm must stay off for the privacy "
        "discriminator");
}

void DucaConfig::validate() const {
  if (projection_dim <= 0)
    throw ContractError("duca config: projection_dim must be positive");
  if (lambda_p < 0) throw ContractError("duca config: lambda_p must be >= 0");
}

std::vector<ParamId> MlpNetwork::trainable_ids() const {
  std::vector<ParamId> ids = weights;
  ids.insert(ids.end(), biases.begin(), biases.end());
  return ids;
}

namespace {

// Scaled-uniform init, range +-sqrt(6 / (fan_in + fan_out)); biases zero.
MlpNetwork build_mlp(ParameterStore& store, const std::vector<int>& dims,
                     bool with_bias, bool relu_output, std::uint64_t seed,
                     const std::string& tag) {
  MlpNetwork net;
  net.dims = dims;
  net.relu_output = relu_output;
  Rng rng(seed);
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    const int fan_in = dims[j];
    const int fan_out = dims[j + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w = rng.uniform_matrix(fan_in, fan_out, -bound, bound);
    net.weights.push_back(
        store.add(std::move(w), true, tag + ".w" + std::to_string(j)));
    if (with_bias)
      net.biases.push_back(store.add(Matrix::Zero(fan_out, 1), true,
                                     tag + ".b" + std::to_string(j)));
  }
  return net;
}

}  // namespace

MlpNetwork build_private_sphere(ParameterStore& store, const PrivateSphereSpec& spec,
                                std::uint64_t seed) {
  spec.validate();
  const bool with_bias = spec.kind != FunnelKind::kLinear;
  MlpNetwork net = build_mlp(store, {spec.input_dim, spec.funnel_dim}, with_bias,
                             /*relu_output=*/with_bias, seed, "private");
  net.orthonormal_funnel = spec.kind == FunnelKind::kOrthonormalReluAffine;
  net.dropout_rate = spec.dropout_rate;
  return net;
}

MlpNetwork build_public_sphere(ParameterStore& store, const PublicSphereSpec& spec,
                               int input_dim, std::uint64_t seed) {
  spec.validate();
  if (input_dim <= 0) throw ContractError("public sphere: input_dim must be positive");
  std::vector<int> dims = {input_dim};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.classes);
  MlpNetwork net =
      build_mlp(store, dims, /*with_bias=*/true, /*relu_output=*/false, seed, "public");
  net.dropout_rate = spec.dropout_rate;
  return net;
}

MlpNetwork build_discriminator(ParameterStore& store, const DiscriminatorSpec& spec,
                               int input_dim, std::uint64_t seed) {
  spec.validate();
  if (input_dim <= 0) throw ContractError("discriminator: input_dim must be positive");
  std::vector<int> dims = {input_dim};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  return build_mlp(store, dims, /*with_bias=*/true, /*relu_output=*/false, seed,
                   "disc");
}

AffineStackNodes network_stack_nodes(Graph& g, const MlpNetwork& net, bool freeze) {
  AffineStackNodes stack;
  for (std::size_t j = 0; j < net.weights.size(); ++j) {
    NodeId w = g.parameter(net.weights[j]);
    if (freeze) w = g.stop_gradient(w);
    stack.weights.push_back(w);
    if (!net.biases.empty()) {
      NodeId b = g.parameter(net.biases[j]);
      if (freeze) b = g.stop_gradient(b);
      stack.biases.push_back(b);
    }
  }
  return stack;
}

NodeId network_forward(Graph& g, const MlpNetwork& net, NodeId input,
                       const ForwardOptions& opts) {
  if (g.rows(input) != net.input_dim())
    throw ContractError("network_forward: input feature dimension mismatch");
  AffineStackNodes stack = network_stack_nodes(g, net, opts.freeze);
  NodeId a = input;
  const std::size_t layers = stack.weights.size();
  for (std::size_t j = 0; j < layers; ++j) {
    NodeId pre = g.matmul(g.transpose(stack.weights[j]), a);
    if (!stack.biases.empty()) pre = g.add_col(pre, stack.biases[j]);
    const bool is_last = j + 1 == layers;
    a = (!is_last || net.relu_output) ? g.relu(pre) : pre;
    if (!is_last && opts.dropout_masks && !opts.dropout_masks->empty()) {
      if (opts.dropout_masks->size() != layers - 1)
        throw ContractError("network_forward: one dropout mask per hidden layer");
      a = g.mul(a, g.constant((*opts.dropout_masks)[j]));
    }
  }
  return a;
}

Matrix network_apply(const ParameterStore& store, const MlpNetwork& net,
                     const Matrix& input) {
  if (input.rows() != net.input_dim())
    throw ContractError("network_apply: input feature dimension mismatch");
  Matrix a = input;
  const std::size_t layers = net.weights.size();
  for (std::size_t j = 0; j < layers; ++j) {
    Matrix pre = store.value(net.weights[j]).transpose() * a;
    if (!net.biases.empty()) pre.colwise() += Vector(store.value(net.biases[j]).col(0));
    const bool is_last = j + 1 == layers;
    a = (!is_last || net.relu_output) ? pre.cwiseMax(0.0) : pre;
  }
  return a;
}

Matrix softmax_cols(const Matrix& logits) {
  Matrix out = logits;
  for (Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    double m = col.maxCoeff();
    Vector e = (col.array() - m).exp();
    col = e / e.sum();
  }
  return out;
}

std::pair<Vector, Matrix> sym_eig(const Matrix& a) {
  const Index n = a.rows();
  if (n != a.cols()) throw ContractError("sym_eig: matrix not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ContractError("sym_eig: matrix not symmetric within 1e-10");

  Matrix w = 0.5 * (a + a.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double norm = std::max(w.norm(), 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += 2.0 * w(p, q) * w(p, q);
    if (std::sqrt(off) <= 1e-15 * norm) break;

    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = w(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double tau = (w(q, q) - w(p, p)) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Index i = 0; i < n; ++i) {
          const double wip = w(i, p), wiq = w(i, q);
          w(i, p) = c * wip - s * wiq;
          w(i, q) = s * wip + c * wiq;
        }
        for (Index i = 0; i < n; ++i) {
          const double wpi = w(p, i), wqi = w(q, i);
          w(p, i) = c * wpi - s * wqi;
          w(q, i) = s * wpi + c * wqi;
        }
        for (Index i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return w(i, i) > w(j, j); });
  Vector evals(n);
  Matrix evecs(n, n);
  for (Index i = 0; i < n; ++i) {
    evals(i) = w(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    evecs.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {evals, evecs};
}

Matrix duca_projection(const Matrix& x, const Matrix& y, const Matrix& p,
                       const DucaConfig& cfg) {
  cfg.validate();
  const Index d = x.rows();
  const Index n = x.cols();
  if (n < 2) throw ContractError("duca_projection: need more than one sample");
  if (y.rows() != n || p.rows() != n)
    throw ContractError("duca_projection: label rows must match sample count");
  if (cfg.projection_dim > d)
    throw ContractError("duca_projection: projection_dim exceeds feature dimension");

  Vector mean = x.rowwise().mean();
  Matrix xc = x.colwise() - mean;
  Matrix scatter = xc * xc.transpose();
  const double rho =
      cfg.rho > 0 ? cfg.rho
                  : 1e-3 * scatter.trace() / static_cast<double>(d);
  Matrix constraint = scatter;
  constraint.diagonal().array() += std::max(rho, 1e-12);

  Matrix xy = xc * y;
  Matrix xp = xc * p;
  Matrix objective = xy * xy.transpose() - cfg.lambda_p * (xp * xp.transpose());
  objective.diagonal().array() -= cfg.rho_prime;

  Eigen::LLT<Matrix> llt(constraint);
  if (llt.info() != Eigen::Success)
    throw NumericError("duca_projection: constraint matrix not positive definite");
  Matrix l = llt.matrixL();
  Matrix li = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  Matrix whitened = li * objective * li.transpose();
  whitened = 0.5 * (whitened + whitened.transpose());

  auto [evals, evecs] = sym_eig(whitened);
  Matrix w = li.transpose() * evecs.leftCols(cfg.projection_dim);

  // Deterministic sign: largest-magnitude entry of each column positive.
  for (Index j = 0; j < w.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < w.rows(); ++i) {
      if (std::abs(w(i, j)) > best_abs) {
        best_abs = std::abs(w(i, j));
        best = i;
      }
    }
    if (w(best, j) < 0) w.col(j) = -w.col(j);
  }
  return w;
}

}  // namespace privkit
