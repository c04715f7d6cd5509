#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "privkit/kernels.hpp"
#include "privkit/matrix.hpp"
#include "privkit/models.hpp"

namespace privkit {

// Released representation phi_P(X), q x N. Adversaries accept only this
// type, never raw features.
struct Representation {
  Matrix z;
};

Representation private_outputs(const ParameterStore& store,
                               const MlpNetwork& private_sphere, const Matrix& x);

enum class AdversaryKind { kLogistic, kKernelRidge, kNearestNeighbor, kMlp };

const char* adversary_name(AdversaryKind k);
AdversaryKind adversary_from_name(const std::string& name);

// Attack-probe bank standing in for the linear-SVM / RBF-SVM / random-forest
// / neural-network suite: multinomial logistic, one-vs-rest kernel ridge,
// k-NN, and an MLP shaped like the privacy discriminator.
struct AdversarySuiteConfig {
  std::vector<AdversaryKind> members = {
      AdversaryKind::kLogistic, AdversaryKind::kKernelRidge,
      AdversaryKind::kNearestNeighbor, AdversaryKind::kMlp};
  int cv_folds = 5;
  std::vector<double> ridge_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 100};
  std::vector<double> bandwidth_factors = {0.25, 0.5, 1, 2, 4};  // x median heuristic
  std::vector<int> k_grid = {1, 5, 15};
  std::vector<int> mlp_hidden = {1024};
  int mlp_epochs = 250;
  int mlp_batch = 500;
  double mlp_step = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

class FittedAdversary;

struct AdversarySuite {
  std::vector<std::shared_ptr<const FittedAdversary>> members;
};

// Hyperparameters chosen by cross-validated accuracy, then refit on the full
// training split. Deterministic given the config seed.
AdversarySuite fit_adversaries(const Representation& train,
                               const std::vector<int>& labels,
                               const AdversarySuiteConfig& cfg);

struct AdversaryReport {
  struct Member {
    std::string name;
    double accuracy = 0.0;
    std::string hyperparams;
  };
  std::vector<Member> members;
  double privacy_score = 0.0;  // max over members
};

AdversaryReport privacy_score(const AdversarySuite& suite, const Representation& test,
                              const std::vector<int>& labels);

// JSON with per-member accuracies plus the top-level scores.
std::string report_to_json(const AdversaryReport& report, double utility,
                           const std::string& config_hash);

// Top-1 accuracy of the softmax public-sphere predictions on raw test inputs.
double utility_score(const ParameterStore& store, const MlpNetwork& private_sphere,
                     const MlpNetwork& public_sphere, const Matrix& x_test,
                     const Matrix& y_test);

}  // namespace privkit
