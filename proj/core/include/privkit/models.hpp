#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "privkit/graph.hpp"

namespace privkit {

enum class FunnelKind { kLinear, kReluAffine, kOrthonormalReluAffine };

// The narrow layer at the private/public boundary; its output is the
// released representation.
struct PrivateSphereSpec {
  int input_dim = 0;
  int funnel_dim = 0;
  FunnelKind kind = FunnelKind::kReluAffine;
  double dropout_rate = 0.0;  // never applied to the funnel layer itself

  void validate() const;
};

struct PublicSphereSpec {
  std::vector<int> hidden = {500};
  int classes = 0;
  bool softmax_head = true;
  double dropout_rate = 0.0;

  void validate() const;
};

struct DiscriminatorSpec {
  std::vector<int> hidden = {1024};
  int output_dim = 0;
  // Present so misuse can be rejected: regularization must stay off here.
  bool dropout = false;
  bool batch_norm = false;

  void validate() const;
};

struct DucaConfig {
  int projection_dim = 0;
  double lambda_p = 1.0;
  double rho = -1.0;        // < 0 selects the scale default 1e-3 tr(Xc Xc^T)/d
  double rho_prime = 0.0;

  void validate() const;
};

// A built feed-forward network: parameter ids into a shared store plus the
// flags needed to rebuild its forward pass inside any graph.
struct MlpNetwork {
  std::vector<int> dims;  // input, hidden..., output
  std::vector<ParamId> weights;
  std::vector<ParamId> biases;  // empty when the net has no bias terms
  bool relu_output = false;
  bool orthonormal_funnel = false;
  double dropout_rate = 0.0;

  std::vector<ParamId> trainable_ids() const;
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
};

MlpNetwork build_private_sphere(ParameterStore& store, const PrivateSphereSpec& spec,
                                std::uint64_t seed);
MlpNetwork build_public_sphere(ParameterStore& store, const PublicSphereSpec& spec,
                               int input_dim, std::uint64_t seed);
MlpNetwork build_discriminator(ParameterStore& store, const DiscriminatorSpec& spec,
                               int input_dim, std::uint64_t seed);

struct ForwardOptions {
  bool freeze = false;  // wrap parameters in stop_gradient
  // Inverted-scaling dropout masks per hidden activation, pre-divided by the
  // keep probability. Supplied by the trainer; empty means no dropout.
  const std::vector<Matrix>* dropout_masks = nullptr;
};

// Parameter nodes of the network inside `g`, optionally frozen.
AffineStackNodes network_stack_nodes(Graph& g, const MlpNetwork& net, bool freeze);

// Builds the forward pass; returns the (output_dim x N) node.
NodeId network_forward(Graph& g, const MlpNetwork& net, NodeId input,
                       const ForwardOptions& opts = {});

// Plain evaluation without a graph, for scoring and adversaries.
Matrix network_apply(const ParameterStore& store, const MlpNetwork& net,
                     const Matrix& input);

Matrix softmax_cols(const Matrix& logits);

// Cyclic Jacobi eigensolver for symmetric matrices. Returns eigenvalues in
// descending order and the matching orthonormal eigenvectors as columns.
std::pair<Vector, Matrix> sym_eig(const Matrix& a);

// Top-q generalized eigenvectors of
//   (Xc Y Y^T Xc^T - rho' I - lambda_p Xc P P^T Xc^T)  w.r.t.  (Xc Xc^T + rho I),
// solved by Cholesky whitening + sym_eig. Columns ordered by descending
// eigenvalue with a deterministic sign convention.
Matrix duca_projection(const Matrix& x, const Matrix& y, const Matrix& p,
                       const DucaConfig& cfg);

}  // namespace privkit
