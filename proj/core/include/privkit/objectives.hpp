#pragma once

#include <optional>
#include <string>

#include "privkit/graph.hpp"
#include "privkit/kernels.hpp"
#include "privkit/models.hpp"

namespace privkit {

enum class PrivacyObjective { kMmd, kKdi, kWdn, kLsdn };

bool requires_discriminator(PrivacyObjective o);
bool supports_continuous_labels(PrivacyObjective o);
const char* objective_name(PrivacyObjective o);
PrivacyObjective objective_from_name(const std::string& name);

// A scalar node with the coefficient it enters the combined objective with.
struct LossTerm {
  NodeId node = -1;
  double weight = 1.0;
};

// Weight of the orthonormality penalty whenever the funnel is flagged
// orthonormal.
inline constexpr double kOrthonormalPenaltyWeight = 10.0;

// Mean cross-entropy of column logits against one-hot rows of y,
// log-sum-exp stabilized. logits: (C x N), y: (N x C).
NodeId utility_loss(Graph& g, NodeId logits, const Matrix& y);

// One-vs-rest MMD of the representation against one-hot privacy labels.
// Identical value to kernel-stats mmd on the same inputs.
NodeId privacy_loss_mmd(Graph& g, NodeId z, const Matrix& p, const KernelSpec& spec,
                        EmptyClassPolicy policy = EmptyClassPolicy::kSkip);

// Differentiable KDI through a symmetric linear-solve node.
NodeId privacy_loss_kdi(Graph& g, NodeId z, const Matrix& p, const KernelSpec& spec,
                        double rho);

// Adversarial losses. The privacy variants freeze the discriminator
// parameters; the discriminator variants freeze the representation.
NodeId privacy_loss_wdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc,
                        EmptyClassPolicy policy = EmptyClassPolicy::kSkip);
NodeId privacy_loss_lsdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc);
NodeId disc_loss_wdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc,
                     double lambda_r,
                     EmptyClassPolicy policy = EmptyClassPolicy::kSkip);
NodeId disc_loss_lsdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc);

// ||W^T W - I||_F^2 for a (p x k) projection, p >= k.
NodeId orthonormality_penalty(Graph& g, NodeId w);

// L_U + lambda_p * L_P (+ 10 * L_O when an orthonormal funnel is in play).
NodeId private_sphere_loss(Graph& g, NodeId utility, NodeId privacy,
                           std::optional<NodeId> ortho, double lambda_p);

}  // namespace privkit
