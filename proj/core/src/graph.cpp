#include "privkit/graph.hpp"

#include <cmath>
#include <utility>

namespace privkit {
namespace {

const char* op_name(int op) {
  switch (op) {
    case 0: return "input";
    case 1: return "constant";
    case 2: return "parameter";
    case 3: return "stop_gradient";
    case 4: return "add";
    case 5: return "sub";
    case 6: return "mul";
    case 7: return "matmul";
    case 8: return "transpose";
    case 9: return "scale";
    case 10: return "add_col";
    case 11: return "relu";
    case 12: return "relu_mask";
    case 13: return "sqrt_clamped";
    case 14: return "log_softmax_cols";
    case 15: return "sum";
    case 16: return "cos";
    case 17: return "sin";
    case 18: return "center";
    case 19: return "gaussian_kernel";
    case 20: return "solve_spd";
    default: return "op";
  }
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  // a: q x n, b: q x m -> n x m matrix of ||a_i - b_j||^2
  Vector an = a.colwise().squaredNorm();
  Vector bn = b.colwise().squaredNorm();
  Matrix d = (-2.0 * a.transpose() * b);
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

Matrix mixture_from_sqdist(const Matrix& d, const std::vector<double>& bw) {
  Matrix k = Matrix::Zero(d.rows(), d.cols());
  for (double s : bw) k += (-d / (2.0 * s * s)).array().exp().matrix();
  return k / static_cast<double>(bw.size());
}

// dK/d(sqdist) contracted with the upstream adjoint.
Matrix mixture_sqdist_weight(const Matrix& d, const Matrix& g,
                             const std::vector<double>& bw) {
  Matrix w = Matrix::Zero(d.rows(), d.cols());
  for (double s : bw) {
    double inv = 1.0 / (2.0 * s * s);
    w -= inv * (-d * inv).array().exp().matrix();
  }
  return (w / static_cast<double>(bw.size())).cwiseProduct(g);
}

Matrix center_square(const Matrix& k) {
  Vector row_mean = k.rowwise().mean();
  Eigen::RowVectorXd col_mean = k.colwise().mean();
  double total = k.mean();
  Matrix out = k;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += total;
  return out;
}

}  // namespace

ParamId ParameterStore::add(Matrix init, bool trainable, std::string name) {
  if (!all_finite(init))
    throw NumericError("parameter '" + name + "' has non-finite initial values");
  Parameter p;
  p.id = static_cast<ParamId>(params_.size());
  p.value = std::move(init);
  p.trainable = trainable;
  p.name = std::move(name);
  params_.push_back(std::move(p));
  return params_.back().id;
}

Matrix& ParameterStore::value(ParamId id) {
  if (id < 0 || id >= static_cast<ParamId>(params_.size()))
    throw ContractError("unknown parameter id " + std::to_string(id));
  return params_[id].value;
}

const Matrix& ParameterStore::value(ParamId id) const {
  return const_cast<ParameterStore*>(this)->value(id);
}

const Parameter& ParameterStore::at(ParamId id) const {
  value(id);  // bounds check
  return params_[id];
}

void ParameterStore::set_value(ParamId id, const Matrix& v) {
  Matrix& cur = value(id);
  if (cur.rows() != v.rows() || cur.cols() != v.cols())
    throw ContractError("parameter '" + params_[id].name +
                        "' shape is immutable after creation");
  cur = v;
}

NodeId Graph::push(Node n) {
  if (n.a >= static_cast<NodeId>(nodes_.size()) ||
      n.b >= static_cast<NodeId>(nodes_.size()))
    throw ContractError("graph node inputs must precede the node");
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw ContractError("unknown graph node " + std::to_string(id));
  return nodes_[id];
}

std::string Graph::label(NodeId id) const {
  const Node& n = node(id);
  std::string s = op_name(static_cast<int>(n.op));
  s += "#" + std::to_string(id);
  if (!n.name.empty()) s += " ('" + n.name + "')";
  return s;
}

Index Graph::rows(NodeId id) const { return node(id).rows; }
Index Graph::cols(NodeId id) const { return node(id).cols; }

ParameterStore& Graph::store() {
  if (!store_) throw ContractError("graph has no parameter store");
  return *store_;
}

NodeId Graph::input(Index rows, Index cols, std::string name) {
  Node n;
  n.op = Op::kInput;
  n.rows = rows;
  n.cols = cols;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Matrix v, std::string name) {
  if (!all_finite(v)) throw NumericError("constant '" + name + "' is non-finite");
  Node n;
  n.op = Op::kConstant;
  n.rows = v.rows();
  n.cols = v.cols();
  n.value = std::move(v);
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::parameter(ParamId id) {
  const Parameter& p = store().at(id);
  Node n;
  n.op = Op::kParameter;
  n.param = id;
  n.rows = p.value.rows();
  n.cols = p.value.cols();
  n.name = p.name;
  return push(std::move(n));
}

NodeId Graph::stop_gradient(NodeId x) {
  Node n;
  n.op = Op::kStopGradient;
  n.a = x;
  n.rows = rows(x);
  n.cols = cols(x);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  if (rows(a) != rows(b) || cols(a) != cols(b))
    throw ContractError("add: shape mismatch between " + label(a) + " and " + label(b));
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  if (rows(a) != rows(b) || cols(a) != cols(b))
    throw ContractError("sub: shape mismatch between " + label(a) + " and " + label(b));
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  if (rows(a) != rows(b) || cols(a) != cols(b))
    throw ContractError("mul: shape mismatch between " + label(a) + " and " + label(b));
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  if (cols(a) != rows(b))
    throw ContractError("matmul: inner dimensions of " + label(a) + " and " +
                        label(b) + " disagree");
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.rows = rows(a);
  n.cols = cols(b);
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.rows = cols(a);
  n.cols = rows(a);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = c;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::add_col(NodeId m, NodeId col) {
  if (cols(col) != 1 || rows(col) != rows(m))
    throw ContractError("add_col: " + label(col) + " must be a column matching " +
                        label(m));
  Node n;
  n.op = Op::kAddCol;
  n.a = m;
  n.b = col;
  n.rows = rows(m);
  n.cols = cols(m);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::relu_mask(NodeId a) {
  Node n;
  n.op = Op::kReluMask;
  n.a = a;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::sqrt_clamped(NodeId a, double eps) {
  if (eps <= 0) throw ContractError("sqrt_clamped: epsilon must be positive");
  Node n;
  n.op = Op::kSqrtClamped;
  n.a = a;
  n.scalar = eps;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::log_softmax_cols(NodeId a) {
  Node n;
  n.op = Op::kLogSoftmaxCols;
  n.a = a;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

NodeId Graph::cosine(NodeId a) {
  Node n;
  n.op = Op::kCos;
  n.a = a;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::sine(NodeId a) {
  Node n;
  n.op = Op::kSin;
  n.a = a;
  n.rows = rows(a);
  n.cols = cols(a);
  return push(std::move(n));
}

NodeId Graph::center(NodeId k) {
  if (rows(k) != cols(k))
    throw ContractError("center: " + label(k) + " must be square");
  Node n;
  n.op = Op::kCenter;
  n.a = k;
  n.rows = rows(k);
  n.cols = cols(k);
  return push(std::move(n));
}

NodeId Graph::gaussian_kernel(NodeId a, NodeId b, std::vector<double> bandwidths) {
  if (bandwidths.empty()) throw ContractError("gaussian_kernel: no bandwidths");
  for (double s : bandwidths)
    if (!(s > 0)) throw ContractError("gaussian_kernel: bandwidths must be positive");
  if (rows(a) != rows(b))
    throw ContractError("gaussian_kernel: feature dimensions of " + label(a) +
                        " and " + label(b) + " disagree");
  Node n;
  n.op = Op::kGaussianKernel;
  n.a = a;
  n.b = b;
  n.bandwidths = std::move(bandwidths);
  n.rows = cols(a);
  n.cols = cols(b);
  return push(std::move(n));
}

NodeId Graph::solve_spd(NodeId a, NodeId b) {
  if (rows(a) != cols(a))
    throw ContractError("solve_spd: " + label(a) + " must be square");
  if (rows(b) != rows(a))
    throw ContractError("solve_spd: row counts of " + label(a) + " and " + label(b) +
                        " disagree");
  Node n;
  n.op = Op::kSolveSpd;
  n.a = a;
  n.b = b;
  n.rows = rows(b);
  n.cols = cols(b);
  return push(std::move(n));
}

void Graph::eval(Node& n) {
  const auto& A = [&]() -> const Matrix& { return nodes_[n.a].value; };
  const auto& B = [&]() -> const Matrix& { return nodes_[n.b].value; };
  switch (n.op) {
    case Op::kInput:
      break;  // set by bindings
    case Op::kConstant:
      break;
    case Op::kParameter:
      n.value = store().value(n.param);
      break;
    case Op::kStopGradient:
      n.value = A();
      break;
    case Op::kAdd:
      n.value = A() + B();
      break;
    case Op::kSub:
      n.value = A() - B();
      break;
    case Op::kMul:
      n.value = A().cwiseProduct(B());
      break;
    case Op::kMatMul:
      n.value = A() * B();
      break;
    case Op::kTranspose:
      n.value = A().transpose();
      break;
    case Op::kScale:
      n.value = n.scalar * A();
      break;
    case Op::kAddCol:
      n.value = A();
      n.value.colwise() += Vector(B().col(0));
      break;
    case Op::kRelu:
      n.value = A().cwiseMax(0.0);
      break;
    case Op::kReluMask:
      n.value = (A().array() > 0.0).cast<double>();
      break;
    case Op::kSqrtClamped:
      n.value = A().cwiseMax(n.scalar).cwiseSqrt();
      break;
    case Op::kLogSoftmaxCols: {
      n.value = A();
      for (Index j = 0; j < n.value.cols(); ++j) {
        auto col = n.value.col(j);
        double m = col.maxCoeff();
        double lse = m + std::log((col.array() - m).exp().sum());
        col.array() -= lse;
      }
      break;
    }
    case Op::kSum:
      n.value = Matrix::Constant(1, 1, A().sum());
      break;
    case Op::kCos:
      n.value = A().array().cos();
      break;
    case Op::kSin:
      n.value = A().array().sin();
      break;
    case Op::kCenter:
      n.value = center_square(A());
      break;
    case Op::kGaussianKernel: {
      n.sqdist = std::make_shared<Matrix>(squared_distances(A(), B()));
      n.value = mixture_from_sqdist(*n.sqdist, n.bandwidths);
      break;
    }
    case Op::kSolveSpd: {
      n.factor = std::make_shared<Eigen::LLT<Matrix>>(A());
      if (n.factor->info() != Eigen::Success)
        throw NumericError("solve_spd: matrix at " + label(n.a) +
                           " is not positive definite");
      n.value = n.factor->solve(B());
      break;
    }
  }
  if (n.op != Op::kInput && !all_finite(n.value))
    throw NumericError("non-finite value at node " +
                       label(static_cast<NodeId>(&n - nodes_.data())));
}

const Matrix& Graph::forward(const Bindings& bindings) {
  if (nodes_.empty()) throw ContractError("forward on empty graph");
  for (auto& n : nodes_)
    if (n.op == Op::kInput) n.bound = false;
  for (const auto& [id, v] : bindings) {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw ContractError("binding targets unknown node " + std::to_string(id));
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op != Op::kInput)
      throw ContractError("binding target " + label(id) + " is not an input");
    if (v.rows() != n.rows || v.cols() != n.cols)
      throw ContractError("binding for " + label(id) + " has wrong shape");
    if (!all_finite(v))
      throw NumericError("binding for " + label(id) + " is non-finite");
    n.value = v;
    n.bound = true;
  }
  for (auto& n : nodes_)
    if (n.op == Op::kInput && !n.bound)
      throw ContractError("input " + label(static_cast<NodeId>(&n - nodes_.data())) +
                          " is unbound");
  for (auto& n : nodes_) eval(n);
  evaluated_ = true;
  return nodes_.back().value;
}

const Matrix& Graph::value(NodeId id) const {
  if (!evaluated_) throw ContractError("value() before forward()");
  return node(id).value;
}

double Graph::scalar_value(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1)
    throw ContractError("node " + label(id) + " is not scalar");
  return v(0, 0);
}

GradMap Graph::backward(double seed) {
  if (!evaluated_) throw ContractError("backward() before forward()");
  const Node& root = nodes_.back();
  if (root.rows != 1 || root.cols != 1)
    throw ContractError("backward: root node " +
                        label(static_cast<NodeId>(nodes_.size() - 1)) +
                        " is not scalar");

  std::vector<Matrix> adj(nodes_.size());
  auto accum = [&](NodeId id, const Matrix& g) {
    if (adj[id].size() == 0)
      adj[id] = g;
    else
      adj[id] += g;
  };
  adj.back() = Matrix::Constant(1, 1, seed);

  GradMap grads;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (adj[id].size() == 0) continue;
    const Matrix& g = adj[id];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
      case Op::kStopGradient:
      case Op::kReluMask:
        break;
      case Op::kParameter: {
        auto it = grads.find(n.param);
        if (it == grads.end())
          grads.emplace(n.param, g);
        else
          it->second += g;
        break;
      }
      case Op::kAdd:
        accum(n.a, g);
        accum(n.b, g);
        break;
      case Op::kSub:
        accum(n.a, g);
        accum(n.b, -g);
        break;
      case Op::kMul:
        accum(n.a, g.cwiseProduct(nodes_[n.b].value));
        accum(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::kMatMul:
        accum(n.a, g * nodes_[n.b].value.transpose());
        accum(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::kTranspose:
        accum(n.a, g.transpose());
        break;
      case Op::kScale:
        accum(n.a, n.scalar * g);
        break;
      case Op::kAddCol:
        accum(n.a, g);
        accum(n.b, g.rowwise().sum());
        break;
      case Op::kRelu:
        accum(n.a, g.cwiseProduct(
                       (nodes_[n.a].value.array() > 0.0).cast<double>().matrix()));
        break;
      case Op::kSqrtClamped: {
        const Matrix& x = nodes_[n.a].value;
        Matrix d(x.rows(), x.cols());
        for (Index i = 0; i < x.size(); ++i)
          d(i) = x(i) > n.scalar ? 0.5 / n.value(i) : 0.0;
        accum(n.a, g.cwiseProduct(d));
        break;
      }
      case Op::kLogSoftmaxCols: {
        Matrix d = g;
        for (Index j = 0; j < d.cols(); ++j) {
          double colsum = g.col(j).sum();
          d.col(j) -= colsum * n.value.col(j).array().exp().matrix();
        }
        accum(n.a, d);
        break;
      }
      case Op::kSum:
        accum(n.a, Matrix::Constant(nodes_[n.a].value.rows(),
                                    nodes_[n.a].value.cols(), g(0, 0)));
        break;
      case Op::kCos:
        accum(n.a, -g.cwiseProduct(nodes_[n.a].value.array().sin().matrix()));
        break;
      case Op::kSin:
        accum(n.a, g.cwiseProduct(nodes_[n.a].value.array().cos().matrix()));
        break;
      case Op::kCenter:
        accum(n.a, center_square(g));
        break;
      case Op::kGaussianKernel: {
        Matrix w = mixture_sqdist_weight(*n.sqdist, g, n.bandwidths);
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        // d(sqdist_ij)/da_i = 2(a_i - b_j); contracted with w.
        Vector wr = w.rowwise().sum();
        Vector wc = w.colwise().sum().transpose();
        Matrix da = 2.0 * (av * wr.asDiagonal() - bv * w.transpose());
        Matrix db = 2.0 * (bv * wc.asDiagonal() - av * w);
        accum(n.a, da);
        accum(n.b, db);
        break;
      }
      case Op::kSolveSpd: {
        Matrix db = n.factor->solve(g);
        accum(n.b, db);
        accum(n.a, -db * n.value.transpose());
        break;
      }
    }
  }

  if (store_) {
    for (const auto& p : store_->all()) {
      if (!p.trainable) continue;
      if (grads.find(p.id) == grads.end())
        grads.emplace(p.id, Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  return grads;
}

NodeId affine_stack_forward(Graph& g, const AffineStackNodes& stack, NodeId input) {
  if (stack.weights.empty())
    throw ContractError("affine stack has no layers");
  if (!stack.biases.empty() && stack.biases.size() != stack.weights.size())
    throw ContractError("affine stack bias/weight count mismatch");
  NodeId a = input;
  for (std::size_t j = 0; j < stack.weights.size(); ++j) {
    NodeId pre = g.matmul(g.transpose(stack.weights[j]), a);
    if (!stack.biases.empty() && stack.biases[j] >= 0)
      pre = g.add_col(pre, stack.biases[j]);
    a = (j + 1 < stack.weights.size()) ? g.relu(pre) : pre;
  }
  return a;
}

NodeId input_gradient_graph(Graph& g, const AffineStackNodes& stack, NodeId input,
                            NodeId selector) {
  if (stack.weights.empty())
    throw ContractError("input_gradient_graph: affine stack has no layers");
  if (!stack.biases.empty() && stack.biases.size() != stack.weights.size())
    throw ContractError("input_gradient_graph: bias/weight count mismatch");
  const std::size_t k = stack.weights.size();

  std::vector<NodeId> pre(k);
  NodeId a = input;
  for (std::size_t j = 0; j < k; ++j) {
    NodeId p = g.matmul(g.transpose(stack.weights[j]), a);
    if (!stack.biases.empty() && stack.biases[j] >= 0) p = g.add_col(p, stack.biases[j]);
    pre[j] = p;
    if (j + 1 < k) a = g.relu(p);
  }

  if (g.rows(selector) != g.cols(stack.weights[k - 1]) ||
      g.cols(selector) != g.cols(input))
    throw ContractError("input_gradient_graph: selector must be (out_dim x N)");

  NodeId grad = g.matmul(stack.weights[k - 1], selector);
  for (std::size_t j = k - 1; j-- > 0;)
    grad = g.matmul(stack.weights[j], g.mul(g.relu_mask(pre[j]), grad));
  return grad;
}

double finite_diff_check(Graph& g, const Bindings& bindings,
                         const std::vector<ParamId>& params, double epsilon) {
  if (!(epsilon > 0)) throw ContractError("finite_diff_check: epsilon must be > 0");
  g.forward(bindings);
  GradMap analytic = g.backward();
  ParameterStore& store = g.store();

  double worst = 0.0;
  for (ParamId id : params) {
    Matrix& theta = store.value(id);
    const Matrix& ga = analytic.at(id);
    for (Index i = 0; i < theta.size(); ++i) {
      const double orig = theta(i);
      theta(i) = orig + epsilon;
      double fp = g.forward(bindings)(0, 0);
      theta(i) = orig - epsilon;
      double fm = g.forward(bindings)(0, 0);
      theta(i) = orig;
      double numeric = (fp - fm) / (2.0 * epsilon);
      double err = std::abs(ga(i) - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  g.forward(bindings);  // restore values at the unperturbed point
  return worst;
}

}  // namespace privkit
