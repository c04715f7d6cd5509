#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "privkit/data.hpp"
#include "privkit/graph.hpp"
#include "privkit/kernels.hpp"
#include "privkit/models.hpp"
#include "privkit/objectives.hpp"
#include "privkit/results.hpp"

namespace privkit {

struct TrainConfig {
  PrivacyObjective objective = PrivacyObjective::kMmd;
  double lambda_p = 0.0;
  double lambda_r = 10.0;  // gradient penalty weight
  double rho = 1e-4;       // KDI ridge
  // Step size defaults to 1e-3 for MMD/KDI, 1e-4 for the spheres under
  // WDN/LSDN; the discriminator keeps 1e-3.
  double step_size = -1.0;
  double disc_step_size = 1e-3;
  int batch_size = 500;
  int epochs = 250;  // fixed schedule (WDN/LSDN), cap otherwise
  double lr_decay = 0.1;
  std::vector<int> decay_epochs = {150, 200};  // WDN/LSDN milestones
  double convergence_tol = 1e-4;
  int patience = 10;
  int max_decays = 2;
  std::uint64_t seed = 0;
  KernelSpec kernel;

  double resolved_step_size() const;
  void validate() const;
};

struct AdamState {
  Matrix m;
  Matrix v;
  long t = 0;
};

// Standard bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8); one
// optimizer per network.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<ParamId> ids) : ids_(std::move(ids)) {}

  void step(ParameterStore& store, const GradMap& grads, double rate,
            const std::string& loss_name);
  const AdamState& state(ParamId id) const;

 private:
  std::vector<ParamId> ids_;
  std::map<ParamId, AdamState> states_;
};

struct LossRecord {
  int epoch = 0;
  int batch = 0;
  double l_u = 0.0;
  double l_p = 0.0;
  double l_disc = std::numeric_limits<double>::quiet_NaN();
  double l_o = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::shared_ptr<ParameterStore> store;
  MlpNetwork private_sphere;
  MlpNetwork public_sphere;
  std::optional<MlpNetwork> discriminator;
  std::vector<LossRecord> history;
  int epochs_run = 0;
};

// Joint minibatch optimization: per batch, in order, a private-sphere step
// on L_U + lambda_p L_P (+ the orthonormality penalty when the funnel asks
// for it), a public-sphere step on L_U, and, for adversarial objectives, a
// discriminator step on L_Disc on the frozen representation.
TrainResult train(const Dataset& data, const PrivateSphereSpec& private_spec,
                  const PublicSphereSpec& public_spec,
                  const std::optional<DiscriminatorSpec>& disc_spec,
                  const TrainConfig& cfg);

struct AdversarySuiteConfig;  // adversary.hpp

// Independent train + adversary evaluation per grid point, emitted in grid
// order; failures are recorded per point. Points may run concurrently.
std::vector<TradeoffPoint> sweep(const Dataset& train_data, const Dataset& test_data,
                                 const PrivateSphereSpec& private_spec,
                                 const PublicSphereSpec& public_spec,
                                 const std::optional<DiscriminatorSpec>& disc_spec,
                                 const TrainConfig& base_cfg,
                                 const std::vector<double>& lambda_grid,
                                 const AdversarySuiteConfig& adversaries,
                                 int jobs = 1);

// Versioned structured-text dump of all parameter tensors + the config hash.
void save_checkpoint(const TrainResult& result, const std::string& path,
                     const std::string& config_hash);
TrainResult load_checkpoint(const std::string& path, std::string* config_hash = nullptr);

// CSV columns epoch,batch,L_U,L_P,L_Disc,L_O.
void write_loss_history(const std::vector<LossRecord>& history, const std::string& path,
                        const std::string& config_hash = {});

}  // namespace privkit
