#include "privkit/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "privkit/adversary.hpp"
#include "privkit/data.hpp"
#include "privkit/kernels.hpp"
#include "privkit/models.hpp"
#include "privkit/objectives.hpp"
#include "privkit/results.hpp"
#include "privkit/rng.hpp"
#include "privkit/trainer.hpp"

namespace privkit::cli {
namespace {

using nlohmann::json;

// Exit codes: 0 success, 2 config error, 1 runtime failure.
struct ConfigError : privkit::Error {
  using privkit::Error::Error;
};

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void require_keys(const json& obj, const std::string& section,
                  const std::vector<std::string>& allowed) {
  if (!obj.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  require_keys(j, "<top>", {"dataset", "model", "objective", "trainer", "adversaries",
                            "output"});
  require_keys(j.value("dataset", json::object()), "dataset",
               {"kind", "dim", "utility_classes", "privacy_classes",
                "utility_subspace_dim", "privacy_subspace_dim", "overlap_angle_deg",
                "encoding", "noise_scale", "n", "seed", "utility_separation",
                "privacy_separation", "within_scale", "radius_base", "radius_step",
                "path", "utility_col", "privacy_col", "features", "test_fraction",
                "split_seed", "joint_stratify", "standardize"});
  require_keys(j.value("model", json::object()), "model",
               {"funnel_dim", "funnel", "public_hidden", "disc_hidden", "dropout",
                "duca_rho", "duca_rho_prime"});
  require_keys(j.value("objective", json::object()), "objective",
               {"kind", "lambda_p", "lambda_grid", "kernel", "rho", "lambda_r"});
  if (j.contains("objective") && j["objective"].contains("kernel"))
    require_keys(j["objective"]["kernel"], "objective.kernel",
                 {"variant", "bandwidths", "rf_dim", "rf_seed"});
  require_keys(j.value("trainer", json::object()), "trainer",
               {"step_size", "disc_step_size", "batch_size", "epochs", "decay_epochs",
                "lr_decay", "convergence_tol", "patience", "max_decays"});
  require_keys(j.value("adversaries", json::object()), "adversaries",
               {"members", "cv_folds", "ridge_grid", "bandwidth_factors", "k_grid",
                "mlp_hidden", "mlp_epochs", "mlp_batch", "mlp_step"});
  require_keys(j.value("output", json::object()), "output", {"dir", "prefix", "seed"});
  return j;
}

SyntheticSpec synthetic_spec_from(const json& d) {
  SyntheticSpec s;
  s.dim = d.value("dim", 0);
  s.utility_classes = d.value("utility_classes", 0);
  s.privacy_classes = d.value("privacy_classes", 0);
  s.utility_subspace_dim = d.value("utility_subspace_dim", 0);
  s.privacy_subspace_dim = d.value("privacy_subspace_dim", 0);
  s.overlap_angle_deg = d.value("overlap_angle_deg", 90.0);
  std::string enc = d.value("encoding", "linear");
  if (enc == "linear")
    s.encoding = PrivacyEncoding::kLinear;
  else if (enc == "sign-symmetric")
    s.encoding = PrivacyEncoding::kSignSymmetric;
  else
    throw ConfigError("dataset.encoding must be 'linear' or 'sign-symmetric'");
  s.noise_scale = d.value("noise_scale", 0.5);
  s.n = d.value("n", 0);
  s.seed = d.value("seed", 0ull);
  s.utility_separation = d.value("utility_separation", 5.0);
  s.privacy_separation = d.value("privacy_separation", 4.0);
  s.within_scale = d.value("within_scale", 1.0);
  s.radius_base = d.value("radius_base", 2.0);
  s.radius_step = d.value("radius_step", 1.5);
  return s;
}

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData prepare_dataset(const json& cfg) {
  const json d = cfg.value("dataset", json::object());
  std::string kind = d.value("kind", "");
  Dataset full;
  if (kind == "synthetic") {
    full = gen_synthetic(synthetic_spec_from(d));
  } else if (kind == "csv") {
    CsvSchema schema;
    schema.utility_col = d.value("utility_col", "utility");
    schema.privacy_col = d.value("privacy_col", "privacy");
    if (d.contains("features"))
      schema.features = d["features"].get<std::vector<std::string>>();
    if (!d.contains("path")) throw ConfigError("dataset.path is required for csv");
    full = load_csv(d["path"].get<std::string>(), schema);
  } else {
    throw ConfigError("dataset.kind must be 'synthetic' or 'csv'");
  }

  auto [train, test] = stratified_split(full, d.value("test_fraction", 0.2),
                                        d.value("split_seed", 1ull),
                                        d.value("joint_stratify", false));
  if (d.value("standardize", true)) {
    auto [tr, te, transform] = standardize(train, test);
    return {std::move(tr), std::move(te)};
  }
  return {std::move(train), std::move(test)};
}

KernelSpec kernel_spec_from(const json& obj) {
  KernelSpec spec;
  if (!obj.contains("kernel")) return spec;
  const json& k = obj["kernel"];
  std::string variant = k.value("variant", "gaussian-mixture");
  if (variant == "gaussian-mixture")
    spec.variant = KernelVariant::kGaussianMixture;
  else if (variant == "random-fourier")
    spec.variant = KernelVariant::kRandomFourier;
  else
    throw ConfigError("objective.kernel.variant must be 'gaussian-mixture' or "
                      "'random-fourier'");
  if (k.contains("bandwidths"))
    spec.bandwidths = k["bandwidths"].get<std::vector<double>>();
  spec.rf_dim = k.value("rf_dim", 1000);
  spec.rf_seed = k.value("rf_seed", 0ull);
  return spec;
}

PrivateSphereSpec private_spec_from(const json& model, int input_dim) {
  PrivateSphereSpec spec;
  spec.input_dim = input_dim;
  spec.funnel_dim = model.value("funnel_dim", 0);
  std::string kind = model.value("funnel", "relu-affine");
  if (kind == "linear")
    spec.kind = FunnelKind::kLinear;
  else if (kind == "relu-affine")
    spec.kind = FunnelKind::kReluAffine;
  else if (kind == "orthonormal-relu-affine")
    spec.kind = FunnelKind::kOrthonormalReluAffine;
  else
    throw ConfigError("model.funnel must be linear, relu-affine or "
                      "orthonormal-relu-affine");
  spec.dropout_rate = model.value("dropout", 0.0);
  return spec;
}

PublicSphereSpec public_spec_from(const json& model, int classes) {
  PublicSphereSpec spec;
  spec.classes = classes;
  if (model.contains("public_hidden"))
    spec.hidden = model["public_hidden"].get<std::vector<int>>();
  spec.dropout_rate = model.value("dropout", 0.0);
  return spec;
}

std::optional<DiscriminatorSpec> disc_spec_from(const json& model,
                                                PrivacyObjective objective,
                                                int privacy_classes) {
  if (!requires_discriminator(objective)) return std::nullopt;
  DiscriminatorSpec spec;
  if (model.contains("disc_hidden"))
    spec.hidden = model["disc_hidden"].get<std::vector<int>>();
  spec.output_dim = privacy_classes;
  return spec;
}

TrainConfig train_config_from(const json& cfg) {
  const json obj = cfg.value("objective", json::object());
  const json tr = cfg.value("trainer", json::object());
  TrainConfig c;
  c.objective = objective_from_name(obj.value("kind", "mmd"));
  c.lambda_p = obj.value("lambda_p", 0.0);
  c.lambda_r = obj.value("lambda_r", 10.0);
  c.rho = obj.value("rho", 1e-4);
  c.kernel = kernel_spec_from(obj);
  c.step_size = tr.value("step_size", -1.0);
  c.disc_step_size = tr.value("disc_step_size", 1e-3);
  c.batch_size = tr.value("batch_size", 500);
  c.epochs = tr.value("epochs", 250);
  c.lr_decay = tr.value("lr_decay", 0.1);
  if (tr.contains("decay_epochs"))
    c.decay_epochs = tr["decay_epochs"].get<std::vector<int>>();
  c.convergence_tol = tr.value("convergence_tol", 1e-4);
  c.patience = tr.value("patience", 10);
  c.max_decays = tr.value("max_decays", 2);
  c.seed = cfg.value("output", json::object()).value("seed", 0ull);
  return c;
}

AdversarySuiteConfig adversaries_from(const json& cfg) {
  const json a = cfg.value("adversaries", json::object());
  AdversarySuiteConfig c;
  if (a.contains("members")) {
    c.members.clear();
    for (const auto& name : a["members"])
      c.members.push_back(adversary_from_name(name.get<std::string>()));
  }
  c.cv_folds = a.value("cv_folds", 5);
  if (a.contains("ridge_grid")) c.ridge_grid = a["ridge_grid"].get<std::vector<double>>();
  if (a.contains("bandwidth_factors"))
    c.bandwidth_factors = a["bandwidth_factors"].get<std::vector<double>>();
  if (a.contains("k_grid")) c.k_grid = a["k_grid"].get<std::vector<int>>();
  if (a.contains("mlp_hidden")) c.mlp_hidden = a["mlp_hidden"].get<std::vector<int>>();
  c.mlp_epochs = a.value("mlp_epochs", 250);
  c.mlp_batch = a.value("mlp_batch", 500);
  c.mlp_step = a.value("mlp_step", 1e-3);
  return c;
}

struct OutputPaths {
  std::filesystem::path dir;
  std::string prefix;
  std::string hash;

  std::string file(const std::string& stem) const {
    return (dir / (prefix + "_" + stem)).string();
  }
};

OutputPaths output_paths(const json& cfg) {
  const json o = cfg.value("output", json::object());
  OutputPaths p;
  std::string dir = o.value("dir", "out");
  if (const char* env = std::getenv("PRIVKIT_OUTPUT_DIR")) dir = env;
  p.dir = dir;
  p.prefix = o.value("prefix", "run");
  std::filesystem::create_directories(p.dir);
  return p;
}

void append_run_log(const OutputPaths& paths, const std::string& command,
                    double seconds) {
  std::ofstream log(paths.file("run.log"), std::ios::app);
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%F %T", std::gmtime(&now));
  log << stamp << " " << command << " config_hash=" << paths.hash << " elapsed="
      << seconds << "s\n";
}

// DUCA has no public sphere; its utility is probed the same way privacy is:
// the strongest predictor in the suite, fit on utility labels.
double suite_utility(const Representation& train_rep, const std::vector<int>& y_train,
                     const Representation& test_rep, const std::vector<int>& y_test,
                     AdversarySuiteConfig adv, std::uint64_t seed) {
  adv.seed = seed;
  AdversarySuite suite = fit_adversaries(train_rep, y_train, adv);
  return privacy_score(suite, test_rep, y_test).privacy_score;
}

void save_duca_checkpoint(const Matrix& w, const std::string& path,
                          const std::string& hash) {
  json j;
  j["version"] = 1;
  j["kind"] = "duca";
  j["config_hash"] = hash;
  j["rows"] = w.rows();
  j["cols"] = w.cols();
  std::vector<std::string> values;
  char buf[40];
  for (Index c = 0; c < w.cols(); ++c)
    for (Index r = 0; r < w.rows(); ++r) {
      std::snprintf(buf, sizeof(buf), "%.17g", w(r, c));
      values.emplace_back(buf);
    }
  j["values"] = values;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(1) << "\n";
}

Matrix load_duca_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  in >> j;
  if (j.value("kind", "") != "duca")
    throw IoError("'" + path + "' is not a duca checkpoint");
  Index rows = j.at("rows").get<Index>();
  Index cols = j.at("cols").get<Index>();
  Matrix w(rows, cols);
  std::size_t k = 0;
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r)
      w(r, c) = std::strtod(j.at("values")[k++].get<std::string>().c_str(), nullptr);
  return w;
}

std::string checkpoint_kind(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  in >> j;
  return j.value("kind", "network");
}

struct Options {
  std::string config_path;
  std::string checkpoint;
  std::optional<double> lambda_p;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out_dir;
  int ovr_class = -1;  // permtest one-vs-rest class
  int n_perm = 199;
};

json effective_config(const Options& opt) {
  json cfg = load_config(opt.config_path);
  if (opt.lambda_p) cfg["objective"]["lambda_p"] = *opt.lambda_p;
  if (opt.seed) cfg["output"]["seed"] = *opt.seed;
  if (!opt.out_dir.empty()) cfg["output"]["dir"] = opt.out_dir;
  return cfg;
}

int cmd_gen_synth(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  if (cfg.value("dataset", json::object()).value("kind", "") != "synthetic")
    throw ConfigError("gen-synth needs dataset.kind = synthetic");
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();
  Dataset ds = gen_synthetic(synthetic_spec_from(cfg["dataset"]));
  std::string file = paths.file("data.csv");
  write_csv(ds, file);
  out << "wrote " << file << " (" << ds.n() << " samples, " << ds.dim()
      << " features)\n";
  append_run_log(paths, "gen-synth",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

int cmd_train(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();

  LoadedData data = prepare_dataset(cfg);
  TrainConfig tc = train_config_from(cfg);
  const json model = cfg.value("model", json::object());
  PrivateSphereSpec ps = private_spec_from(model, static_cast<int>(data.train.dim()));
  PublicSphereSpec us =
      public_spec_from(model, static_cast<int>(data.train.utility_count()));
  auto ds = disc_spec_from(model, tc.objective,
                           static_cast<int>(data.train.privacy_count()));

  TrainResult result = train(data.train, ps, us, ds, tc);
  save_checkpoint(result, paths.file("checkpoint.json"), paths.hash);
  write_loss_history(result.history, paths.file("losses.csv"), paths.hash);
  out << "trained " << objective_name(tc.objective) << " for " << result.epochs_run
      << " epochs; checkpoint " << paths.file("checkpoint.json") << "\n";
  append_run_log(paths, "train",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

int cmd_sweep(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();

  const json obj = cfg.value("objective", json::object());
  if (!obj.contains("lambda_grid") || obj["lambda_grid"].empty())
    throw ConfigError("sweep needs a non-empty objective.lambda_grid");
  std::vector<double> grid = obj["lambda_grid"].get<std::vector<double>>();

  LoadedData data = prepare_dataset(cfg);
  TrainConfig tc = train_config_from(cfg);
  const json model = cfg.value("model", json::object());
  PrivateSphereSpec ps = private_spec_from(model, static_cast<int>(data.train.dim()));
  PublicSphereSpec us =
      public_spec_from(model, static_cast<int>(data.train.utility_count()));
  auto ds = disc_spec_from(model, tc.objective,
                           static_cast<int>(data.train.privacy_count()));
  AdversarySuiteConfig adv = adversaries_from(cfg);

  std::vector<TradeoffPoint> points =
      sweep(data.train, data.test, ps, us, ds, tc, grid, adv, opt.jobs);
  write_results(points, paths.file("tradeoff.csv"), paths.hash);
  for (const auto& pt : points) {
    out << "lambda_p=" << pt.lambda_p;
    if (pt.ok)
      out << " utility=" << pt.utility_acc << " privacy=" << pt.privacy_acc << "\n";
    else
      out << " FAILED: " << pt.error << "\n";
  }
  out << "wrote " << paths.file("tradeoff.csv") << "\n";
  append_run_log(paths, "sweep",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();

  std::string ck = opt.checkpoint.empty() ? paths.file("checkpoint.json")
                                          : opt.checkpoint;
  LoadedData data = prepare_dataset(cfg);
  AdversarySuiteConfig adv = adversaries_from(cfg);
  adv.seed = Rng::mix(cfg.value("output", json::object()).value("seed", 0ull), 31);

  Representation train_rep, test_rep;
  double utility = 0.0;
  if (checkpoint_kind(ck) == "duca") {
    Matrix w = load_duca_checkpoint(ck);
    train_rep.z = w.transpose() * data.train.x;
    test_rep.z = w.transpose() * data.test.x;
    utility = suite_utility(train_rep, data.train.utility_labels(), test_rep,
                            data.test.utility_labels(), adv, Rng::mix(adv.seed, 1));
  } else {
    TrainResult result = load_checkpoint(ck);
    train_rep = private_outputs(*result.store, result.private_sphere, data.train.x);
    test_rep = private_outputs(*result.store, result.private_sphere, data.test.x);
    utility = utility_score(*result.store, result.private_sphere, result.public_sphere,
                            data.test.x, data.test.y);
  }
  AdversarySuite suite = fit_adversaries(train_rep, data.train.privacy_labels(), adv);
  AdversaryReport report = privacy_score(suite, test_rep, data.test.privacy_labels());

  std::string file = paths.file("report.json");
  std::ofstream rf(file, std::ios::binary);
  rf << report_to_json(report, utility, paths.hash) << "\n";
  out << "utility=" << utility << " privacy=" << report.privacy_score << " -> " << file
      << "\n";
  append_run_log(paths, "eval",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

int cmd_permtest(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();

  LoadedData data = prepare_dataset(cfg);
  Matrix z = data.test.x;
  if (!opt.checkpoint.empty()) {
    TrainResult result = load_checkpoint(opt.checkpoint);
    z = private_outputs(*result.store, result.private_sphere, data.test.x).z;
  }
  std::vector<int> labels = data.test.privacy_labels();
  std::vector<int> binary(labels.size());
  if (opt.ovr_class >= 0) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      binary[i] = labels[i] == opt.ovr_class ? 1 : 0;
  } else {
    if (data.test.privacy_count() != 2)
      throw ConfigError(
          "permtest needs binary privacy labels; pass --class for one-vs-rest");
    binary = labels;
  }

  KernelSpec kernel = kernel_spec_from(cfg.value("objective", json::object()));
  std::uint64_t seed = Rng::mix(cfg.value("output", json::object()).value("seed", 0ull), 47);
  PermutationTestResult r = permutation_test(z, binary, kernel, opt.n_perm, seed);

  json j;
  j["observed_statistic"] = r.observed;
  j["p_value"] = r.p_value;
  j["n_perm"] = opt.n_perm;
  j["config_hash"] = paths.hash;
  j["seed"] = seed;
  std::string file = paths.file("permtest.json");
  std::ofstream rf(file, std::ios::binary);
  rf << j.dump(1) << "\n";
  out << "observed=" << r.observed << " p_value=" << r.p_value << " -> " << file
      << "\n";
  append_run_log(paths, "permtest",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

int cmd_duca(const Options& opt, std::ostream& out) {
  json cfg = effective_config(opt);
  OutputPaths paths = output_paths(cfg);
  paths.hash = fnv1a_hex(cfg.dump());
  auto t0 = std::chrono::steady_clock::now();

  LoadedData data = prepare_dataset(cfg);
  const json model = cfg.value("model", json::object());
  DucaConfig dc;
  dc.projection_dim = model.value("funnel_dim", 0);
  dc.lambda_p = cfg.value("objective", json::object()).value("lambda_p", 0.0);
  dc.rho = model.value("duca_rho", -1.0);
  dc.rho_prime = model.value("duca_rho_prime", 0.0);

  Matrix w = duca_projection(data.train.x, data.train.y, data.train.p, dc);
  save_duca_checkpoint(w, paths.file("duca_checkpoint.json"), paths.hash);

  Representation train_rep{w.transpose() * data.train.x};
  Representation test_rep{w.transpose() * data.test.x};
  AdversarySuiteConfig adv = adversaries_from(cfg);
  adv.seed = Rng::mix(cfg.value("output", json::object()).value("seed", 0ull), 53);
  double utility = suite_utility(train_rep, data.train.utility_labels(), test_rep,
                                 data.test.utility_labels(), adv, Rng::mix(adv.seed, 1));
  AdversarySuite suite = fit_adversaries(train_rep, data.train.privacy_labels(), adv);
  AdversaryReport report = privacy_score(suite, test_rep, data.test.privacy_labels());

  std::string file = paths.file("duca_report.json");
  std::ofstream rf(file, std::ios::binary);
  rf << report_to_json(report, utility, paths.hash) << "\n";
  out << "duca lambda_p=" << dc.lambda_p << " utility=" << utility
      << " privacy=" << report.privacy_score << " -> " << file << "\n";
  append_run_log(paths, "duca",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"privacy-preserving representation learning toolkit"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* c = sub->add_option("--config,-c", opt.config_path, "JSON run configuration");
    if (needs_config) c->required();
    sub->add_option("--lambda-p", opt.lambda_p, "override objective.lambda_p");
    sub->add_option("--seed", opt.seed, "override output.seed");
    sub->add_option("--out-dir", opt.out_dir, "override output.dir");
    return sub;
  };

  CLI::App* gen = add_common(app.add_subcommand("gen-synth", "generate a synthetic dataset CSV"));
  CLI::App* train = add_common(app.add_subcommand("train", "train one configuration"));
  CLI::App* sweep = add_common(
      app.add_subcommand("sweep", "trace the utility/privacy trade-off over a grid"));
  sweep->add_option("--jobs", opt.jobs, "parallel grid points")->check(CLI::PositiveNumber);
  CLI::App* eval = add_common(
      app.add_subcommand("eval", "score a checkpoint with the adversary suite"));
  eval->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
  CLI::App* permtest = add_common(
      app.add_subcommand("permtest", "permutation independence test on representations"));
  permtest->add_option("--checkpoint", opt.checkpoint, "apply this private sphere first");
  permtest->add_option("--class", opt.ovr_class, "one-vs-rest privacy class");
  permtest->add_option("--n-perm", opt.n_perm, "number of permutations");
  CLI::App* duca = add_common(
      app.add_subcommand("duca", "linear generalized-eigenvector baseline"));

  std::vector<const char*> argv;
  argv.push_back("privkit");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(opt, out);
    if (train->parsed()) return cmd_train(opt, out);
    if (sweep->parsed()) return cmd_sweep(opt, out);
    if (eval->parsed()) return cmd_eval(opt, out);
    if (permtest->parsed()) return cmd_permtest(opt, out);
    if (duca->parsed()) return cmd_duca(opt, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no subcommand\n";
  return 2;
}

}  // namespace privkit::cli
