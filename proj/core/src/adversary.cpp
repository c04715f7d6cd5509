#include "privkit/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "privkit/graph.hpp"
#include "privkit/objectives.hpp"
#include "privkit/rng.hpp"
#include "privkit/trainer.hpp"

namespace privkit {

Representation private_outputs(const ParameterStore& store,
                               const MlpNetwork& private_sphere, const Matrix& x) {
  return Representation{network_apply(store, private_sphere, x)};
}

const char* adversary_name(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::kLogistic: return "logistic";
    case AdversaryKind::kKernelRidge: return "kernel-ridge";
    case AdversaryKind::kNearestNeighbor: return "knn";
    case AdversaryKind::kMlp: return "mlp";
  }
  return "logistic";
}

AdversaryKind adversary_from_name(const std::string& name) {
  if (name == "logistic") return AdversaryKind::kLogistic;
  if (name == "kernel-ridge") return AdversaryKind::kKernelRidge;
  if (name == "knn") return AdversaryKind::kNearestNeighbor;
  if (name == "mlp") return AdversaryKind::kMlp;
  throw ContractError("unknown adversary '" + name + "'");
}

void AdversarySuiteConfig::validate() const {
  if (members.empty()) throw ContractError("adversary suite: no members");
  if (cv_folds < 2) throw ContractError("adversary suite: cv_folds must be >= 2");
  if (ridge_grid.empty() || bandwidth_factors.empty() || k_grid.empty())
    throw ContractError("adversary suite: hyperparameter grids must be non-empty");
  if (mlp_epochs <= 0 || mlp_batch <= 0 || !(mlp_step > 0))
    throw ContractError("adversary suite: invalid MLP settings");
}

// Fitted attack probe: predicts class ids from representations.
class FittedAdversary {
 public:
  virtual ~FittedAdversary() = default;
  virtual std::vector<int> predict(const Matrix& z) const = 0;
  virtual std::string hyperparams() const = 0;
  virtual const char* name() const = 0;
};

namespace {

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    m(static_cast<Index>(i), labels[i]) = 1.0;
  return m;
}

std::vector<int> argmax_cols(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.cols()));
  for (Index j = 0; j < scores.cols(); ++j) {
    Index best;
    scores.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

Matrix gather_cols(const Matrix& z, const std::vector<Index>& idx) {
  Matrix out(z.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Index>(i)) = z.col(idx[i]);
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<Index>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = labels[static_cast<std::size_t>(idx[i])];
  return out;
}

// --- multinomial logistic regression -------------------------------------

struct LogisticModel {
  Matrix w;  // q x L
  Vector b;  // L
};

LogisticModel fit_logistic(const Matrix& z, const std::vector<int>& labels,
                           int classes, double ridge, std::uint64_t seed) {
  ParameterStore store;
  Rng init(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(z.rows() + classes));
  ParamId w = store.add(init.uniform_matrix(z.rows(), classes, -bound, bound), true,
                        "logit.w");
  ParamId b = store.add(Matrix::Zero(classes, 1), true, "logit.b");
  Matrix y = one_hot(labels, classes);

  AdamOptimizer opt({w, b});
  for (int it = 0; it < 300; ++it) {
    Graph g(&store);
    NodeId x = g.input(z.rows(), z.cols(), "z");
    NodeId logits = g.add_col(g.matmul(g.transpose(g.parameter(w)), x), g.parameter(b));
    NodeId ce = utility_loss(g, logits, y);
    NodeId wn = g.parameter(w);
    NodeId reg = g.scale(g.sum(g.mul(wn, wn)), ridge);
    g.add(ce, reg);
    g.forward({{x, z}});
    opt.step(store, g.backward(), 0.05, "logistic fit");
  }
  return {store.value(w), store.value(b).col(0)};
}

std::vector<int> predict_logistic(const LogisticModel& m, const Matrix& z) {
  Matrix scores = m.w.transpose() * z;
  scores.colwise() += m.b;
  return argmax_cols(scores);
}

class LogisticAdversary : public FittedAdversary {
 public:
  LogisticAdversary(LogisticModel m, double ridge) : model_(std::move(m)), ridge_(ridge) {}
  std::vector<int> predict(const Matrix& z) const override {
    return predict_logistic(model_, z);
  }
  std::string hyperparams() const override {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "ridge=%g", ridge_);
    return buf;
  }
  const char* name() const override { return "logistic"; }

 private:
  LogisticModel model_;
  double ridge_;
};

// --- one-vs-rest kernel ridge ---------------------------------------------

double median_heuristic(const Matrix& z, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(z.cols()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t cap = std::min<std::size_t>(idx.size(), 256);
  std::vector<double> dists;
  for (std::size_t i = 0; i < cap; ++i)
    for (std::size_t j = i + 1; j < cap; ++j)
      dists.push_back((z.col(idx[i]) - z.col(idx[j])).norm());
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  double med = dists[dists.size() / 2];
  return med > 1e-12 ? med : 1.0;
}

struct KernelRidgeModel {
  Matrix train_z;
  Matrix alpha;  // N x L
  double sigma = 1.0;
  double ridge = 1.0;
};

KernelRidgeModel fit_kernel_ridge(const Matrix& z, const std::vector<int>& labels,
                                  int classes, double sigma, double ridge) {
  KernelSpec spec;
  spec.bandwidths = {sigma};
  Matrix k = kernel_matrix(z, z, spec);
  k.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success)
    throw NumericError("kernel ridge adversary: system not positive definite");
  KernelRidgeModel m;
  m.train_z = z;
  m.alpha = llt.solve(one_hot(labels, classes));
  m.sigma = sigma;
  m.ridge = ridge;
  return m;
}

std::vector<int> predict_kernel_ridge(const KernelRidgeModel& m, const Matrix& z) {
  KernelSpec spec;
  spec.bandwidths = {m.sigma};
  Matrix cross = kernel_matrix(m.train_z, z, spec);  // N_train x N_test
  Matrix scores = m.alpha.transpose() * cross;       // L x N_test
  return argmax_cols(scores);
}

class KernelRidgeAdversary : public FittedAdversary {
 public:
  explicit KernelRidgeAdversary(KernelRidgeModel m) : model_(std::move(m)) {}
  std::vector<int> predict(const Matrix& z) const override {
    return predict_kernel_ridge(model_, z);
  }
  std::string hyperparams() const override {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "sigma=%g ridge=%g", model_.sigma, model_.ridge);
    return buf;
  }
  const char* name() const override { return "kernel-ridge"; }

 private:
  KernelRidgeModel model_;
};

// --- k nearest neighbors ----------------------------------------------------

class KnnAdversary : public FittedAdversary {
 public:
  KnnAdversary(Matrix z, std::vector<int> labels, int classes, int k)
      : z_(std::move(z)), labels_(std::move(labels)), classes_(classes), k_(k) {}

  std::vector<int> predict(const Matrix& z) const override {
    std::vector<int> out(static_cast<std::size_t>(z.cols()));
    const Index n = z_.cols();
    const int k = std::min<int>(k_, static_cast<int>(n));
    std::vector<std::pair<double, int>> d(static_cast<std::size_t>(n));
    for (Index j = 0; j < z.cols(); ++j) {
      for (Index i = 0; i < n; ++i)
        d[static_cast<std::size_t>(i)] = {(z_.col(i) - z.col(j)).squaredNorm(),
                                          labels_[static_cast<std::size_t>(i)]};
      std::partial_sort(d.begin(), d.begin() + k, d.end());
      std::vector<int> votes(static_cast<std::size_t>(classes_), 0);
      for (int t = 0; t < k; ++t) ++votes[static_cast<std::size_t>(d[t].second)];
      out[static_cast<std::size_t>(j)] = static_cast<int>(
          std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    return out;
  }
  std::string hyperparams() const override { return "k=" + std::to_string(k_); }
  const char* name() const override { return "knn"; }

 private:
  Matrix z_;
  std::vector<int> labels_;
  int classes_;
  int k_;
};

// --- MLP probe shaped like the privacy discriminator ------------------------

struct MlpModel {
  std::shared_ptr<ParameterStore> store;
  MlpNetwork net;
};

MlpModel fit_mlp(const Matrix& z, const std::vector<int>& labels, int classes,
                 const AdversarySuiteConfig& cfg, std::uint64_t seed) {
  MlpModel model;
  model.store = std::make_shared<ParameterStore>();
  DiscriminatorSpec spec;  // no dropout, no batch-norm
  spec.hidden = cfg.mlp_hidden;
  spec.output_dim = classes;
  model.net = build_discriminator(*model.store, spec, static_cast<int>(z.rows()),
                                  Rng::mix(seed, 11));
  Matrix y = one_hot(labels, classes);

  AdamOptimizer opt(model.net.trainable_ids());
  Rng rng(Rng::mix(seed, 12));
  const int n = static_cast<int>(z.cols());
  const int batch = std::min(cfg.mlp_batch, n);
  const int batches = std::max(1, n / batch);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.mlp_epochs; ++epoch) {
    rng.shuffle(order);
    for (int b = 0; b < batches; ++b) {
      Matrix xb(z.rows(), batch);
      Matrix yb(batch, classes);
      for (int i = 0; i < batch; ++i) {
        Index src = order[static_cast<std::size_t>(b * batch + i)];
        xb.col(i) = z.col(src);
        yb.row(i) = y.row(src);
      }
      Graph g(model.store.get());
      NodeId x = g.input(z.rows(), batch, "z");
      NodeId logits = network_forward(g, model.net, x);
      utility_loss(g, logits, yb);
      g.forward({{x, xb}});
      opt.step(*model.store, g.backward(), cfg.mlp_step, "mlp adversary fit");
    }
  }
  return model;
}

class MlpAdversary : public FittedAdversary {
 public:
  MlpAdversary(MlpModel m, std::string arch)
      : model_(std::move(m)), arch_(std::move(arch)) {}
  std::vector<int> predict(const Matrix& z) const override {
    return argmax_cols(network_apply(*model_.store, model_.net, z));
  }
  std::string hyperparams() const override { return arch_; }
  const char* name() const override { return "mlp"; }

 private:
  MlpModel model_;
  std::string arch_;
};

// --- cross-validation -------------------------------------------------------

struct Folds {
  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> test;
};

Folds make_folds(Index n, int folds, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  Folds f;
  f.train.resize(static_cast<std::size_t>(folds));
  f.test.resize(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t fold = i % static_cast<std::size_t>(folds);
    for (std::size_t t = 0; t < static_cast<std::size_t>(folds); ++t)
      (t == fold ? f.test[t] : f.train[t]).push_back(order[i]);
  }
  return f;
}

template <typename FitPredict>
double cv_accuracy(const Matrix& z, const std::vector<int>& labels, const Folds& folds,
                   FitPredict&& fit_predict) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < folds.train.size(); ++f) {
    if (folds.test[f].empty()) continue;
    Matrix ztr = gather_cols(z, folds.train[f]);
    Matrix zte = gather_cols(z, folds.test[f]);
    std::vector<int> ltr = gather_labels(labels, folds.train[f]);
    std::vector<int> lte = gather_labels(labels, folds.test[f]);
    std::set<int> distinct(ltr.begin(), ltr.end());
    if (distinct.size() < 2) continue;  // degenerate fold
    std::vector<int> pred = fit_predict(ztr, ltr, zte);
    total += accuracy(pred, lte);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

AdversarySuite fit_adversaries(const Representation& train,
                               const std::vector<int>& labels,
                               const AdversarySuiteConfig& cfg) {
  cfg.validate();
  const Matrix& z = train.z;
  if (static_cast<Index>(labels.size()) != z.cols())
    throw ContractError("fit_adversaries: label count must match sample count");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw ContractError("fit_adversaries: training labels are single-class");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;

  Folds folds = make_folds(z.cols(), cfg.cv_folds, Rng::mix(cfg.seed, 21));
  AdversarySuite suite;

  for (std::size_t mi = 0; mi < cfg.members.size(); ++mi) {
    const AdversaryKind kind = cfg.members[mi];
    const std::uint64_t seed = Rng::mix(cfg.seed, 100 + mi);
    switch (kind) {
      case AdversaryKind::kLogistic: {
        double best_acc = -1.0, best_ridge = cfg.ridge_grid.front();
        for (double ridge : cfg.ridge_grid) {
          double acc = cv_accuracy(
              z, labels, folds,
              [&](const Matrix& ztr, const std::vector<int>& ltr, const Matrix& zte) {
                return predict_logistic(fit_logistic(ztr, ltr, classes, ridge, seed),
                                        zte);
              });
          if (acc > best_acc) {
            best_acc = acc;
            best_ridge = ridge;
          }
        }
        suite.members.push_back(std::make_shared<LogisticAdversary>(
            fit_logistic(z, labels, classes, best_ridge, seed), best_ridge));
        break;
      }
      case AdversaryKind::kKernelRidge: {
        const double base = median_heuristic(z, Rng::mix(seed, 3));
        double best_acc = -1.0;
        double best_sigma = base, best_ridge = cfg.ridge_grid.front();
        for (double factor : cfg.bandwidth_factors) {
          for (double ridge : cfg.ridge_grid) {
            double acc = cv_accuracy(
                z, labels, folds,
                [&](const Matrix& ztr, const std::vector<int>& ltr, const Matrix& zte) {
                  return predict_kernel_ridge(
                      fit_kernel_ridge(ztr, ltr, classes, base * factor, ridge), zte);
                });
            if (acc > best_acc) {
              best_acc = acc;
              best_sigma = base * factor;
              best_ridge = ridge;
            }
          }
        }
        suite.members.push_back(std::make_shared<KernelRidgeAdversary>(
            fit_kernel_ridge(z, labels, classes, best_sigma, best_ridge)));
        break;
      }
      case AdversaryKind::kNearestNeighbor: {
        double best_acc = -1.0;
        int best_k = cfg.k_grid.front();
        for (int k : cfg.k_grid) {
          double acc = cv_accuracy(
              z, labels, folds,
              [&](const Matrix& ztr, const std::vector<int>& ltr, const Matrix& zte) {
                return KnnAdversary(ztr, ltr, classes, k).predict(zte);
              });
          if (acc > best_acc) {
            best_acc = acc;
            best_k = k;
          }
        }
        suite.members.push_back(
            std::make_shared<KnnAdversary>(z, labels, classes, best_k));
        break;
      }
      case AdversaryKind::kMlp: {
        std::string arch = "hidden=";
        for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i)
          arch += (i ? "x" : "") + std::to_string(cfg.mlp_hidden[i]);
        arch += " epochs=" + std::to_string(cfg.mlp_epochs);
        suite.members.push_back(std::make_shared<MlpAdversary>(
            fit_mlp(z, labels, classes, cfg, seed), arch));
        break;
      }
    }
  }
  return suite;
}

AdversaryReport privacy_score(const AdversarySuite& suite, const Representation& test,
                              const std::vector<int>& labels) {
  if (suite.members.empty()) throw ContractError("privacy_score: suite not fitted");
  if (static_cast<Index>(labels.size()) != test.z.cols())
    throw ContractError("privacy_score: label count must match sample count");
  AdversaryReport report;
  for (const auto& member : suite.members) {
    AdversaryReport::Member m;
    m.name = member->name();
    m.accuracy = accuracy(member->predict(test.z), labels);
    m.hyperparams = member->hyperparams();
    report.members.push_back(std::move(m));
  }
  report.privacy_score = 0.0;
  for (const auto& m : report.members)
    report.privacy_score = std::max(report.privacy_score, m.accuracy);
  return report;
}

std::string report_to_json(const AdversaryReport& report, double utility,
                           const std::string& config_hash) {
  nlohmann::json j;
  j["privacy_score"] = report.privacy_score;
  j["utility_score"] = utility;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : report.members)
    members.push_back({{"member", m.name},
                       {"accuracy", m.accuracy},
                       {"hyperparams", m.hyperparams}});
  j["members"] = std::move(members);
  return j.dump(1);
}

double utility_score(const ParameterStore& store, const MlpNetwork& private_sphere,
                     const MlpNetwork& public_sphere, const Matrix& x_test,
                     const Matrix& y_test) {
  Matrix z = network_apply(store, private_sphere, x_test);
  Matrix probs = softmax_cols(network_apply(store, public_sphere, z));
  std::vector<int> pred = argmax_cols(probs);
  std::vector<int> truth(static_cast<std::size_t>(y_test.rows()));
  for (Index i = 0; i < y_test.rows(); ++i) {
    Index best;
    y_test.row(i).maxCoeff(&best);
    truth[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return accuracy(pred, truth);
}

}  // namespace privkit
