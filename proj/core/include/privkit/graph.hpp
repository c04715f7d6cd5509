#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "privkit/errors.hpp"
#include "privkit/matrix.hpp"

namespace privkit {

using NodeId = int;
using ParamId = int;

// A named, trainable matrix. Shape is fixed at creation.
struct Parameter {
  ParamId id = -1;
  Matrix value;
  bool trainable = true;
  std::string name;
};

// Owns parameters shared across graphs (e.g. a feature map appearing in
// several loss expressions). Values are mutable, shapes are not.
class ParameterStore {
 public:
  ParamId add(Matrix init, bool trainable = true, std::string name = {});
  Matrix& value(ParamId id);
  const Matrix& value(ParamId id) const;
  const Parameter& at(ParamId id) const;
  void set_value(ParamId id, const Matrix& v);  // enforces the original shape
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<Parameter> params_;
};

using GradMap = std::map<ParamId, Matrix>;
using Bindings = std::map<NodeId, Matrix>;

// Reverse-mode tape over dense matrices. Nodes are appended in topological
// order; forward() evaluates the whole tape, backward() accumulates adjoints
// of the last node (which must be scalar) into every trainable parameter.
//
// Scalars are 1x1 matrices. All intermediates are checked for finiteness.
class Graph {
 public:
  explicit Graph(ParameterStore* store = nullptr) : store_(store) {}

  NodeId input(Index rows, Index cols, std::string name);
  NodeId constant(Matrix v, std::string name = {});
  NodeId parameter(ParamId id);
  NodeId stop_gradient(NodeId x);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId add_col(NodeId m, NodeId col);  // broadcast col over all columns
  NodeId relu(NodeId a);
  // Step function 1[x > 0]; its own derivative is defined as zero, which is
  // what makes gradient-penalty graphs first-order exact for ReLU nets.
  NodeId relu_mask(NodeId a);
  NodeId sqrt_clamped(NodeId a, double eps = 1e-12);
  NodeId log_softmax_cols(NodeId a);
  NodeId sum(NodeId a);  // -> 1x1
  NodeId cosine(NodeId a);
  NodeId sine(NodeId a);
  NodeId center(NodeId k);  // K -> C K C for square K
  // Entry (i,j) = (1/T) sum_t exp(-||a_i - b_j||^2 / (2 sigma_t^2)) over the
  // columns of a and b.
  NodeId gaussian_kernel(NodeId a, NodeId b, std::vector<double> bandwidths);
  // X solving A X = B for symmetric positive definite A (Cholesky).
  NodeId solve_spd(NodeId a, NodeId b);

  // Evaluates every node; returns the last node's value.
  const Matrix& forward(const Bindings& bindings);
  const Matrix& value(NodeId id) const;
  double scalar_value(NodeId id) const;

  // Adjoints of the last node w.r.t. every trainable parameter in the store.
  // Parameters off the path get explicit zero gradients.
  GradMap backward(double seed = 1.0);

  Index rows(NodeId id) const;
  Index cols(NodeId id) const;
  ParameterStore& store();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    kInput,
    kConstant,
    kParameter,
    kStopGradient,
    kAdd,
    kSub,
    kMul,
    kMatMul,
    kTranspose,
    kScale,
    kAddCol,
    kRelu,
    kReluMask,
    kSqrtClamped,
    kLogSoftmaxCols,
    kSum,
    kCos,
    kSin,
    kCenter,
    kGaussianKernel,
    kSolveSpd,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double scalar = 0.0;  // kScale factor / kSqrtClamped epsilon
    ParamId param = -1;
    std::vector<double> bandwidths;
    std::string name;
    Index rows = 0;
    Index cols = 0;
    Matrix value;
    bool bound = false;                            // kInput
    std::shared_ptr<Eigen::LLT<Matrix>> factor;    // kSolveSpd cache
    std::shared_ptr<Matrix> sqdist;                // kGaussianKernel cache
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;
  std::string label(NodeId id) const;
  void eval(Node& n);

  std::vector<Node> nodes_;
  ParameterStore* store_;
  bool evaluated_ = false;
};

// Feed-forward affine stack: weights[j] is (in_j x out_j), biases[j] is
// (out_j x 1) or -1 for no bias. ReLU between layers, linear last layer.
struct AffineStackNodes {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

// Output of the stack applied to `input` (columns are samples).
NodeId affine_stack_forward(Graph& g, const AffineStackNodes& stack, NodeId input);

// Node whose value is the input gradient of the selected stack output,
// column i holding  grad_z  selector_i^T f(z_i).  Built from explicit
// chain-rule products (weight transposes times active-unit masks), so the
// result stays differentiable w.r.t. the stack's weights under first-order
// reverse mode. `selector` must be (out_dim x N).
NodeId input_gradient_graph(Graph& g, const AffineStackNodes& stack, NodeId input,
                            NodeId selector);

// Max over all entries of the listed parameters of
//   |analytic - central difference| / max(1, |central difference|)
// for the scalar loss at the end of `g`.
double finite_diff_check(Graph& g, const Bindings& bindings,
                         const std::vector<ParamId>& params, double epsilon);

}  // namespace privkit
