#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "privkit/errors.hpp"
#include "privkit/matrix.hpp"

namespace privkit {

// Training tuple: features X (d x N), one-hot utility labels Y (N x C_u),
// one-hot privacy labels P (N x L), plus naming metadata.
struct Dataset {
  Matrix x;
  Matrix y;
  Matrix p;
  std::vector<std::string> feature_names;
  std::vector<std::string> utility_classes;
  std::vector<std::string> privacy_classes;
  std::string provenance;

  Index n() const { return x.cols(); }
  Index dim() const { return x.rows(); }
  Index utility_count() const { return y.cols(); }
  Index privacy_count() const { return p.cols(); }
  std::vector<int> utility_labels() const;
  std::vector<int> privacy_labels() const;
  void validate() const;
};

struct CsvSchema {
  std::vector<std::string> features;  // empty: all non-label columns, file order
  std::string utility_col = "utility";
  std::string privacy_col = "privacy";
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);
void write_csv(const Dataset& ds, const std::string& path);

// Per privacy class (or per (utility, privacy) pair with joint = true):
// shuffled, rounded 20% (or `test_fraction`) to the test side.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed, bool joint = false);

struct StandardizeTransform {
  Vector mean;
  Vector scale;  // 1 for zero-variance features
  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& x) const;
};

// Zero mean / unit variance per feature, fitted on train only.
std::tuple<Dataset, Dataset, StandardizeTransform> standardize(const Dataset& train,
                                                               const Dataset& test);

enum class PrivacyEncoding { kLinear, kSignSymmetric };

// Desk-scale generator with disentangled utility and privacy subspaces.
// linear: privacy classes are mean offsets in the privacy subspace.
// sign-symmetric: privacy classes are coded purely in the magnitude of a
// zero-mean component, so first-order statistics carry no privacy signal.
struct SyntheticSpec {
  int dim = 0;
  int utility_classes = 0;
  int privacy_classes = 0;
  int utility_subspace_dim = 0;
  int privacy_subspace_dim = 0;
  double overlap_angle_deg = 90.0;
  PrivacyEncoding encoding = PrivacyEncoding::kLinear;
  double noise_scale = 0.5;
  int n = 0;
  std::uint64_t seed = 0;

  double utility_separation = 5.0;   // min distance between class centers
  double privacy_separation = 4.0;   // min distance between offsets (linear)
  double within_scale = 1.0;         // in-subspace jitter
  double radius_base = 2.0;          // sign-symmetric shell radii:
  double radius_step = 1.5;          //   radius_base + l * radius_step

  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace privkit
