#include "privkit/objectives.hpp"

#include <cmath>

namespace privkit {

bool requires_discriminator(PrivacyObjective o) {
  return o == PrivacyObjective::kWdn || o == PrivacyObjective::kLsdn;
}

bool supports_continuous_labels(PrivacyObjective o) {
  return o == PrivacyObjective::kKdi || o == PrivacyObjective::kLsdn;
}

const char* objective_name(PrivacyObjective o) {
  switch (o) {
    case PrivacyObjective::kMmd: return "mmd";
    case PrivacyObjective::kKdi: return "kdi";
    case PrivacyObjective::kWdn: return "wdn";
    case PrivacyObjective::kLsdn: return "lsdn";
  }
  return "mmd";
}

PrivacyObjective objective_from_name(const std::string& name) {
  if (name == "mmd") return PrivacyObjective::kMmd;
  if (name == "kdi") return PrivacyObjective::kKdi;
  if (name == "wdn") return PrivacyObjective::kWdn;
  if (name == "lsdn") return PrivacyObjective::kLsdn;
  throw ContractError("unknown privacy objective '" + name + "'");
}

namespace {

NodeId dot_sum(Graph& g, NodeId a, NodeId b) { return g.sum(g.mul(a, b)); }

void check_one_hot(const Matrix& p, const char* where) {
  for (Index i = 0; i < p.rows(); ++i) {
    double row_sum = 0.0;
    for (Index j = 0; j < p.cols(); ++j) {
      double v = p(i, j);
      if (v != 0.0 && v != 1.0)
        throw ContractError(std::string(where) + ": labels must be one-hot");
      row_sum += v;
    }
    if (row_sum != 1.0)
      throw ContractError(std::string(where) + ": label rows must sum to one");
  }
}

// N x L matrix whose column l is (N_l/N) * (p_l/N_l - pbar_l/Nbar_l); zero for
// skipped classes. Contracting discriminator outputs with it gives the
// one-vs-rest linear loss in a single node.
Matrix class_contrast_weights(const Matrix& p, EmptyClassPolicy policy,
                              const char* where) {
  const Index n = p.rows();
  const Index classes = p.cols();
  Matrix w = Matrix::Zero(n, classes);
  for (Index l = 0; l < classes; ++l) {
    double nl = p.col(l).sum();
    double nr = static_cast<double>(n) - nl;
    if (nl < 0.5 || nr < 0.5) {
      if (policy == EmptyClassPolicy::kReject)
        throw ContractError(std::string(where) + ": class " + std::to_string(l) +
                            " is empty (or covers every sample)");
      continue;
    }
    const double share = nl / static_cast<double>(n);
    for (Index i = 0; i < n; ++i)
      w(i, l) = share * (p(i, l) > 0.5 ? 1.0 / nl : -1.0 / nr);
  }
  return w;
}

}  // namespace

NodeId utility_loss(Graph& g, NodeId logits, const Matrix& y) {
  const Index n = y.rows();
  if (g.rows(logits) != y.cols() || g.cols(logits) != n)
    throw ContractError("utility_loss: logits must be (classes x N) matching y");
  for (Index i = 0; i < n; ++i) {
    double s = y.row(i).sum();
    if (std::abs(s - 1.0) > 1e-9 || y.row(i).minCoeff() < 0)
      throw ContractError("utility_loss: label rows must lie on the simplex");
  }
  NodeId lsm = g.log_softmax_cols(logits);
  NodeId picked = dot_sum(g, g.constant(y.transpose(), "y"), lsm);
  return g.scale(picked, -1.0 / static_cast<double>(n));
}

NodeId privacy_loss_mmd(Graph& g, NodeId z, const Matrix& p, const KernelSpec& spec,
                        EmptyClassPolicy policy) {
  spec.validate();
  check_one_hot(p, "privacy_loss_mmd");
  const Index n = p.rows();
  if (g.cols(z) != n)
    throw ContractError("privacy_loss_mmd: sample counts of z and p disagree");
  const Index classes = p.cols();
  if (classes < 2)
    throw ContractError("privacy_loss_mmd: need at least two label columns");

  const bool rf = spec.variant == KernelVariant::kRandomFourier;
  NodeId kernel = -1;
  NodeId cos_feat = -1, sin_feat = -1;
  if (!rf) {
    kernel = g.gaussian_kernel(z, z, spec.bandwidths);
  } else {
    Matrix omega = rf_frequencies(g.rows(z), spec);
    NodeId proj = g.matmul(g.constant(omega.transpose(), "rf_omega_t"), z);
    cos_feat = g.cosine(proj);
    sin_feat = g.sine(proj);
  }

  NodeId total = -1;
  const Vector ones = Vector::Ones(n);
  for (Index l = 0; l < classes; ++l) {
    Vector pl = p.col(l);
    double nl = pl.sum();
    double nr = static_cast<double>(n) - nl;
    if (nl < 0.5 || nr < 0.5) {
      if (policy == EmptyClassPolicy::kReject)
        throw ContractError("privacy_loss_mmd: class " + std::to_string(l) +
                            " is empty (or covers every sample)");
      continue;
    }
    NodeId term = -1;
    if (!rf) {
      Vector ql = ones - pl;
      NodeId pn = g.constant(pl, "p" + std::to_string(l));
      NodeId qn = g.constant(ql, "q" + std::to_string(l));
      NodeId kp = g.matmul(kernel, pn);
      NodeId kq = g.matmul(kernel, qn);
      NodeId t1 = g.scale(dot_sum(g, pn, kp), 1.0 / (nl * nl));
      NodeId t2 = g.scale(dot_sum(g, qn, kq), 1.0 / (nr * nr));
      NodeId t3 = g.scale(dot_sum(g, pn, kq), -2.0 / (nl * nr));
      term = g.add(g.add(t1, t2), t3);
    } else {
      Vector contrast = pl / nl - (ones - pl) / nr;
      NodeId c = g.constant(contrast, "contrast" + std::to_string(l));
      NodeId dc = g.matmul(cos_feat, c);
      NodeId ds = g.matmul(sin_feat, c);
      term = g.scale(g.add(dot_sum(g, dc, dc), dot_sum(g, ds, ds)),
                     2.0 / static_cast<double>(spec.rf_dim));
    }
    NodeId root = g.sqrt_clamped(term);
    NodeId weighted = g.scale(root, nl / static_cast<double>(n));
    total = total < 0 ? weighted : g.add(total, weighted);
  }
  if (total < 0)
    throw ContractError("privacy_loss_mmd: every class term was skipped");
  return total;
}

NodeId privacy_loss_kdi(Graph& g, NodeId z, const Matrix& p, const KernelSpec& spec,
                        double rho) {
  spec.validate();
  if (!(rho > 0)) throw ContractError("privacy_loss_kdi: rho must be positive");
  const Index n = p.rows();
  if (g.cols(z) != n)
    throw ContractError("privacy_loss_kdi: sample counts of z and p disagree");
  if (n < 2) throw ContractError("privacy_loss_kdi: need at least two samples");

  NodeId kernel;
  if (spec.variant == KernelVariant::kGaussianMixture) {
    kernel = g.gaussian_kernel(z, z, spec.bandwidths);
  } else {
    Matrix omega = rf_frequencies(g.rows(z), spec);
    NodeId proj = g.matmul(g.constant(omega.transpose(), "rf_omega_t"), z);
    NodeId c = g.cosine(proj);
    NodeId s = g.sine(proj);
    NodeId gram = g.add(g.matmul(g.transpose(c), c), g.matmul(g.transpose(s), s));
    kernel = g.scale(gram, 2.0 / static_cast<double>(spec.rf_dim));
  }
  NodeId centered = g.center(kernel);
  NodeId shifted = g.add(centered, g.constant(rho * Matrix::Identity(n, n), "rho_i"));
  NodeId pn = g.constant(p, "p");
  NodeId resolvent = g.solve_spd(shifted, pn);
  return dot_sum(g, pn, g.matmul(centered, resolvent));
}

NodeId privacy_loss_wdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc,
                        EmptyClassPolicy policy) {
  check_one_hot(p, "privacy_loss_wdn");
  if (disc.output_dim() != p.cols())
    throw ContractError("privacy_loss_wdn: discriminator needs one output per class");
  if (g.cols(z) != p.rows())
    throw ContractError("privacy_loss_wdn: sample counts of z and p disagree");
  ForwardOptions opts;
  opts.freeze = true;
  NodeId out = network_forward(g, disc, z, opts);
  Matrix w = class_contrast_weights(p, policy, "privacy_loss_wdn");
  return g.scale(dot_sum(g, out, g.constant(w.transpose(), "class_contrast")), -1.0);
}

NodeId privacy_loss_lsdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc) {
  if (disc.output_dim() != p.cols())
    throw ContractError("privacy_loss_lsdn: output dim must match label dim");
  const Index n = p.rows();
  if (g.cols(z) != n)
    throw ContractError("privacy_loss_lsdn: sample counts of z and p disagree");
  ForwardOptions opts;
  opts.freeze = true;
  NodeId out = network_forward(g, disc, z, opts);
  Vector mu = p.colwise().mean();
  Matrix target = mu.replicate(1, n);
  NodeId diff = g.sub(out, g.constant(target, "label_mean"));
  return g.scale(dot_sum(g, diff, diff), 1.0 / static_cast<double>(n));
}

NodeId disc_loss_wdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc,
                     double lambda_r, EmptyClassPolicy policy) {
  check_one_hot(p, "disc_loss_wdn");
  if (lambda_r < 0) throw ContractError("disc_loss_wdn: lambda_r must be >= 0");
  if (disc.output_dim() != p.cols())
    throw ContractError("disc_loss_wdn: discriminator needs one output per class");
  const Index n = p.rows();
  if (g.cols(z) != n)
    throw ContractError("disc_loss_wdn: sample counts of z and p disagree");

  NodeId zc = g.stop_gradient(z);
  AffineStackNodes stack = network_stack_nodes(g, disc, /*freeze=*/false);
  NodeId out = affine_stack_forward(g, stack, zc);

  Matrix w = class_contrast_weights(p, policy, "disc_loss_wdn");
  NodeId linear = dot_sum(g, out, g.constant(w.transpose(), "class_contrast"));

  // One gradient penalty per sample, applied to the output indexed by the
  // sample's own privacy class.
  NodeId selector = g.constant(p.transpose(), "own_class_selector");
  NodeId grads = input_gradient_graph(g, stack, zc, selector);
  NodeId sq = g.mul(grads, grads);
  NodeId norms = g.sqrt_clamped(
      g.matmul(g.constant(Matrix::Ones(1, g.rows(grads)), "row_ones"), sq));
  NodeId dev = g.sub(norms, g.constant(Matrix::Ones(1, n), "unit"));
  NodeId penalty = g.scale(dot_sum(g, dev, dev), 1.0 / static_cast<double>(n));

  return g.add(linear, g.scale(penalty, lambda_r));
}

NodeId disc_loss_lsdn(Graph& g, NodeId z, const Matrix& p, const MlpNetwork& disc) {
  if (disc.output_dim() != p.cols())
    throw ContractError("disc_loss_lsdn: output dim must match label dim");
  const Index n = p.rows();
  if (g.cols(z) != n)
    throw ContractError("disc_loss_lsdn: sample counts of z and p disagree");
  NodeId zc = g.stop_gradient(z);
  NodeId out = network_forward(g, disc, zc);
  NodeId diff = g.sub(out, g.constant(p.transpose(), "p_t"));
  return g.scale(dot_sum(g, diff, diff), 1.0 / static_cast<double>(n));
}

NodeId orthonormality_penalty(Graph& g, NodeId w) {
  if (g.rows(w) < g.cols(w))
    throw ContractError(
        "orthonormality_penalty: no orthonormal frame exists with fewer rows "
        "than columns");
  NodeId gram = g.matmul(g.transpose(w), w);
  NodeId diff = g.sub(gram, g.constant(Matrix::Identity(g.cols(w), g.cols(w)), "i_k"));
  return dot_sum(g, diff, diff);
}

NodeId private_sphere_loss(Graph& g, NodeId utility, NodeId privacy,
                           std::optional<NodeId> ortho, double lambda_p) {
  if (lambda_p < 0) throw ContractError("private_sphere_loss: lambda_p must be >= 0");
  NodeId total = g.add(utility, g.scale(privacy, lambda_p));
  if (ortho) total = g.add(total, g.scale(*ortho, kOrthonormalPenaltyWeight));
  return total;
}

}  // namespace privkit
