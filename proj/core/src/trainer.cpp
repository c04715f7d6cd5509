#include "privkit/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "privkit/adversary.hpp"
#include "privkit/rng.hpp"

namespace privkit {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double TrainConfig::resolved_step_size() const {
  if (step_size > 0) return step_size;
  return requires_discriminator(objective) ? 1e-4 : 1e-3;
}

void TrainConfig::validate() const {
  kernel.validate();
  if (lambda_p < 0) throw ContractError("train config: lambda_p must be >= 0");
  if (lambda_r < 0) throw ContractError("train config: lambda_r must be >= 0");
  if (!(rho > 0)) throw ContractError("train config: rho must be positive");
  if (!(resolved_step_size() > 0) || !(disc_step_size > 0))
    throw ContractError("train config: step sizes must be positive");
  if (batch_size <= 0) throw ContractError("train config: batch_size must be positive");
  if (epochs <= 0) throw ContractError("train config: epochs must be positive");
  if (!(lr_decay > 0) || lr_decay >= 1)
    throw ContractError("train config: lr_decay must be in (0,1)");
  if (patience <= 0) throw ContractError("train config: patience must be positive");
  if (max_decays < 0) throw ContractError("train config: max_decays must be >= 0");
  if (requires_discriminator(objective) && disc_step_size < resolved_step_size())
    throw ContractError(
        "train config: the discriminator step size must be at least the "
        "sphere step size");
}

void AdamOptimizer::step(ParameterStore& store, const GradMap& grads, double rate,
                         const std::string& loss_name) {
  for (ParamId id : ids_) {
    auto it = grads.find(id);
    if (it == grads.end())
      throw ContractError("adam: no gradient for parameter '" + store.at(id).name +
                          "' from " + loss_name);
    const Matrix& g = it->second;
    if (!all_finite(g))
      throw NumericError("adam: non-finite gradient for parameter '" +
                         store.at(id).name + "' in " + loss_name);
    Matrix& theta = store.value(id);
    AdamState& s = states_[id];
    if (s.t == 0) {
      s.m = Matrix::Zero(theta.rows(), theta.cols());
      s.v = Matrix::Zero(theta.rows(), theta.cols());
    }
    ++s.t;
    s.m = kBeta1 * s.m + (1.0 - kBeta1) * g;
    s.v = kBeta2 * s.v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(s.t));
    Matrix mhat = s.m / c1;
    Matrix vhat = s.v / c2;
    theta -= rate * (mhat.array() / (vhat.array().sqrt() + kAdamEps)).matrix();
  }
}

const AdamState& AdamOptimizer::state(ParamId id) const {
  auto it = states_.find(id);
  if (it == states_.end()) throw ContractError("adam: no state for parameter");
  return it->second;
}

namespace {

struct Batch {
  Matrix x;
  Matrix y;
  Matrix p;
};

Batch gather(const Dataset& ds, const std::vector<Index>& order, int begin, int size) {
  Batch b;
  b.x.resize(ds.dim(), size);
  b.y.resize(size, ds.y.cols());
  b.p.resize(size, ds.p.cols());
  for (int i = 0; i < size; ++i) {
    Index src = order[static_cast<std::size_t>(begin + i)];
    b.x.col(i) = ds.x.col(src);
    b.y.row(i) = ds.y.row(src);
    b.p.row(i) = ds.p.row(src);
  }
  return b;
}

NodeId build_privacy_loss(Graph& g, NodeId z, const Matrix& p, const TrainConfig& cfg,
                          const std::optional<MlpNetwork>& disc) {
  switch (cfg.objective) {
    case PrivacyObjective::kMmd:
      return privacy_loss_mmd(g, z, p, cfg.kernel, EmptyClassPolicy::kSkip);
    case PrivacyObjective::kKdi:
      return privacy_loss_kdi(g, z, p, cfg.kernel, cfg.rho);
    case PrivacyObjective::kWdn:
      return privacy_loss_wdn(g, z, p, *disc, EmptyClassPolicy::kSkip);
    case PrivacyObjective::kLsdn:
      return privacy_loss_lsdn(g, z, p, *disc);
  }
  throw ContractError("unknown privacy objective");
}

}  // namespace

TrainResult train(const Dataset& data, const PrivateSphereSpec& private_spec,
                  const PublicSphereSpec& public_spec,
                  const std::optional<DiscriminatorSpec>& disc_spec,
                  const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (cfg.batch_size > data.n())
    throw ContractError("train: batch_size exceeds the dataset size");
  if (private_spec.input_dim != data.dim())
    throw ContractError("train: private sphere input_dim must match the data");
  if (public_spec.classes != data.utility_count())
    throw ContractError("train: public sphere classes must match the labels");

  const bool needs_disc = requires_discriminator(cfg.objective);

  TrainResult result;
  result.store = std::make_shared<ParameterStore>();
  ParameterStore& store = *result.store;
  result.private_sphere =
      build_private_sphere(store, private_spec, Rng::mix(cfg.seed, 101));
  result.public_sphere =
      build_public_sphere(store, public_spec, private_spec.funnel_dim,
                          Rng::mix(cfg.seed, 202));
  if (needs_disc) {
    DiscriminatorSpec ds = disc_spec ? *disc_spec : DiscriminatorSpec{};
    ds.output_dim = static_cast<int>(data.privacy_count());
    result.discriminator =
        build_discriminator(store, ds, private_spec.funnel_dim, Rng::mix(cfg.seed, 303));
  }
  const MlpNetwork& priv = result.private_sphere;
  const MlpNetwork& pub = result.public_sphere;

  AdamOptimizer opt_p(priv.trainable_ids());
  AdamOptimizer opt_u(pub.trainable_ids());
  std::optional<AdamOptimizer> opt_d;
  if (needs_disc) opt_d.emplace(result.discriminator->trainable_ids());

  double alpha = cfg.resolved_step_size();
  double alpha_d = cfg.disc_step_size;
  const int batches = static_cast<int>(data.n()) / cfg.batch_size;
  if (batches == 0) throw ContractError("train: no full batch fits the dataset");

  Rng rng(Rng::mix(cfg.seed, 404));
  std::vector<Index> order(static_cast<std::size_t>(data.n()));
  std::iota(order.begin(), order.end(), Index{0});

  Rng dropout_rng(Rng::mix(cfg.seed, 505));
  auto dropout_masks = [&](const MlpNetwork& net, int cols) {
    std::vector<Matrix> masks;
    if (net.dropout_rate <= 0 || net.dims.size() < 3) return masks;
    const double keep = 1.0 - net.dropout_rate;
    for (std::size_t j = 0; j + 2 < net.dims.size(); ++j) {
      Matrix m(net.dims[j + 1], cols);
      for (Index i = 0; i < m.size(); ++i)
        m(i) = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
      masks.push_back(std::move(m));
    }
    return masks;
  };

  double prev_epoch_mean = std::numeric_limits<double>::infinity();
  int stalled = 0;
  int decays_done = 0;
  const bool fixed_schedule = needs_disc;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_combined = 0.0;

    for (int b = 0; b < batches; ++b) {
      Batch batch = gather(data, order, b * cfg.batch_size, cfg.batch_size);
      LossRecord rec;
      rec.epoch = epoch;
      rec.batch = b;

      {  // private sphere step on L_U + lambda_p L_P (+ ortho)
        Graph g(&store);
        NodeId x = g.input(data.dim(), cfg.batch_size, "x");
        ForwardOptions priv_opts;
        auto pub_masks = dropout_masks(pub, cfg.batch_size);
        NodeId z = network_forward(g, priv, x, priv_opts);
        ForwardOptions pub_opts;
        pub_opts.dropout_masks = &pub_masks;
        NodeId logits = network_forward(g, pub, z, pub_opts);
        NodeId lu = utility_loss(g, logits, batch.y);
        NodeId lp = build_privacy_loss(g, z, batch.p, cfg, result.discriminator);
        std::optional<NodeId> lo;
        if (priv.orthonormal_funnel)
          lo = orthonormality_penalty(g, g.parameter(priv.weights[0]));
        private_sphere_loss(g, lu, lp, lo, cfg.lambda_p);
        g.forward({{x, batch.x}});
        rec.l_u = g.scalar_value(lu);
        rec.l_p = g.scalar_value(lp);
        if (lo) rec.l_o = g.scalar_value(*lo);
        GradMap grads = g.backward();
        opt_p.step(store, grads, alpha, "private-sphere objective");
      }

      {  // public sphere step on L_U alone, gradients recomputed
        Graph g(&store);
        NodeId x = g.input(data.dim(), cfg.batch_size, "x");
        NodeId z = network_forward(g, priv, x);
        auto pub_masks = dropout_masks(pub, cfg.batch_size);
        ForwardOptions pub_opts;
        pub_opts.dropout_masks = &pub_masks;
        NodeId logits = network_forward(g, pub, z, pub_opts);
        utility_loss(g, logits, batch.y);
        g.forward({{x, batch.x}});
        GradMap grads = g.backward();
        opt_u.step(store, grads, alpha, "utility loss");
      }

      if (needs_disc) {  // discriminator step on the frozen representation
        Matrix zb = network_apply(store, priv, batch.x);
        Graph g(&store);
        NodeId z = g.input(zb.rows(), zb.cols(), "z");
        if (cfg.objective == PrivacyObjective::kWdn)
          disc_loss_wdn(g, z, batch.p, *result.discriminator, cfg.lambda_r,
                        EmptyClassPolicy::kSkip);
        else
          disc_loss_lsdn(g, z, batch.p, *result.discriminator);
        rec.l_disc = g.forward({{z, zb}})(0, 0);
        GradMap grads = g.backward();
        opt_d->step(store, grads, alpha_d, "discriminator loss");
      }

      epoch_combined += rec.l_u + cfg.lambda_p * rec.l_p;
      result.history.push_back(rec);
    }

    result.epochs_run = epoch + 1;
    if (fixed_schedule) {
      if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch + 1) !=
          cfg.decay_epochs.end()) {
        alpha *= cfg.lr_decay;
        alpha_d *= cfg.lr_decay;
      }
      continue;
    }

    // MMD/KDI: decay when the combined objective stops declining; stop after
    // max_decays further stalls.
    const double epoch_mean = epoch_combined / batches;
    const double improvement =
        (prev_epoch_mean - epoch_mean) / std::max(std::abs(prev_epoch_mean), 1e-12);
    prev_epoch_mean = epoch_mean;
    if (improvement < cfg.convergence_tol)
      ++stalled;
    else
      stalled = 0;
    if (stalled >= cfg.patience) {
      if (decays_done < cfg.max_decays) {
        alpha *= cfg.lr_decay;
        ++decays_done;
        stalled = 0;
      } else {
        break;
      }
    }
  }
  return result;
}

std::vector<TradeoffPoint> sweep(const Dataset& train_data, const Dataset& test_data,
                                 const PrivateSphereSpec& private_spec,
                                 const PublicSphereSpec& public_spec,
                                 const std::optional<DiscriminatorSpec>& disc_spec,
                                 const TrainConfig& base_cfg,
                                 const std::vector<double>& lambda_grid,
                                 const AdversarySuiteConfig& adversaries, int jobs) {
  if (lambda_grid.empty()) throw ContractError("sweep: empty lambda grid");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    if (lambda_grid[i] < lambda_grid[i - 1])
      throw ContractError("sweep: lambda grid must be ascending");
  if (jobs < 1) jobs = 1;

  std::vector<TradeoffPoint> points(lambda_grid.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= lambda_grid.size()) return;
      TradeoffPoint& pt = points[i];
      pt.lambda_p = lambda_grid[i];
      pt.seed = Rng::mix(base_cfg.seed, 7000 + i);
      try {
        TrainConfig cfg = base_cfg;
        cfg.lambda_p = lambda_grid[i];
        cfg.seed = pt.seed;
        TrainResult res = train(train_data, private_spec, public_spec, disc_spec, cfg);

        Representation train_rep =
            private_outputs(*res.store, res.private_sphere, train_data.x);
        Representation test_rep =
            private_outputs(*res.store, res.private_sphere, test_data.x);
        AdversarySuiteConfig adv = adversaries;
        adv.seed = Rng::mix(pt.seed, 9001);
        AdversarySuite suite =
            fit_adversaries(train_rep, train_data.privacy_labels(), adv);
        AdversaryReport report =
            privacy_score(suite, test_rep, test_data.privacy_labels());
        pt.utility_acc = utility_score(*res.store, res.private_sphere,
                                       res.public_sphere, test_data.x, test_data.y);
        pt.privacy_acc = report.privacy_score;
        for (const auto& m : report.members)
          pt.adversary_acc.emplace_back(m.name, m.accuracy);
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.ok = false;
        pt.error = e.what();
        pt.utility_acc = std::numeric_limits<double>::quiet_NaN();
        pt.privacy_acc = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return points;
}

namespace {

nlohmann::json network_to_json(const MlpNetwork& net) {
  return {{"dims", net.dims},
          {"weights", net.weights},
          {"biases", net.biases},
          {"relu_output", net.relu_output},
          {"orthonormal_funnel", net.orthonormal_funnel},
          {"dropout_rate", net.dropout_rate}};
}

MlpNetwork network_from_json(const nlohmann::json& j) {
  MlpNetwork net;
  net.dims = j.at("dims").get<std::vector<int>>();
  net.weights = j.at("weights").get<std::vector<ParamId>>();
  net.biases = j.at("biases").get<std::vector<ParamId>>();
  net.relu_output = j.at("relu_output").get<bool>();
  net.orthonormal_funnel = j.at("orthonormal_funnel").get<bool>();
  net.dropout_rate = j.at("dropout_rate").get<double>();
  return net;
}

}  // namespace

void save_checkpoint(const TrainResult& result, const std::string& path,
                     const std::string& config_hash) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = "network";
  j["config_hash"] = config_hash;
  j["private_sphere"] = network_to_json(result.private_sphere);
  j["public_sphere"] = network_to_json(result.public_sphere);
  if (result.discriminator)
    j["discriminator"] = network_to_json(*result.discriminator);
  j["epochs_run"] = result.epochs_run;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : result.store->all()) {
    nlohmann::json pj;
    pj["id"] = p.id;
    pj["name"] = p.name;
    pj["trainable"] = p.trainable;
    pj["rows"] = p.value.rows();
    pj["cols"] = p.value.cols();
    std::vector<std::string> values;
    values.reserve(static_cast<std::size_t>(p.value.size()));
    for (Index c = 0; c < p.value.cols(); ++c)
      for (Index r = 0; r < p.value.rows(); ++r)
        values.push_back(format_double(p.value(r, c)));
    pj["values"] = values;
    params.push_back(std::move(pj));
  }
  j["parameters"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(1) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

TrainResult load_checkpoint(const std::string& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("checkpoint parse error in '" + path + "': " + e.what());
  }
  if (j.value("version", 0) != 1)
    throw IoError("unsupported checkpoint version in '" + path + "'");

  TrainResult result;
  result.store = std::make_shared<ParameterStore>();
  if (config_hash) *config_hash = j.value("config_hash", "");
  for (const auto& pj : j.at("parameters")) {
    Index rows = pj.at("rows").get<Index>();
    Index cols = pj.at("cols").get<Index>();
    const auto& values = pj.at("values");
    if (static_cast<Index>(values.size()) != rows * cols)
      throw IoError("checkpoint parameter size mismatch in '" + path + "'");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r)
        m(r, c) = std::strtod(values[k++].get<std::string>().c_str(), nullptr);
    ParamId id = result.store->add(std::move(m), pj.at("trainable").get<bool>(),
                                   pj.at("name").get<std::string>());
    if (id != pj.at("id").get<ParamId>())
      throw IoError("checkpoint parameter ids out of order in '" + path + "'");
  }
  result.private_sphere = network_from_json(j.at("private_sphere"));
  result.public_sphere = network_from_json(j.at("public_sphere"));
  if (j.contains("discriminator"))
    result.discriminator = network_from_json(j.at("discriminator"));
  result.epochs_run = j.value("epochs_run", 0);
  return result;
}

void write_loss_history(const std::vector<LossRecord>& history, const std::string& path,
                        const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "epoch,batch,L_U,L_P,L_Disc,L_O\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.batch << ',' << format_double(r.l_u) << ','
        << format_double(r.l_p) << ',' << format_double(r.l_disc) << ','
        << format_double(r.l_o) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace privkit
