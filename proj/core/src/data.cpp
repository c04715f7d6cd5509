#include "privkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "privkit/rng.hpp"

namespace privkit {
namespace {

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best;
    m.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

void check_one_hot_rows(const Matrix& m, const char* what) {
  for (Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0 && m(i, j) != 1.0)
        throw ContractError(std::string(what) + " labels must be one-hot (row " +
                            std::to_string(i) + ")");
      s += m(i, j);
    }
    if (s != 1.0)
      throw ContractError(std::string(what) + " label rows must sum to 1 (row " +
                          std::to_string(i) + ")");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Matrix one_hot_from_names(const std::vector<std::string>& values,
                          std::vector<std::string>& classes) {
  std::set<std::string> uniq(values.begin(), values.end());
  classes.assign(uniq.begin(), uniq.end());  // sorted label order
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i)
    index[classes[i]] = static_cast<int>(i);
  Matrix m = Matrix::Zero(static_cast<Index>(values.size()),
                          static_cast<Index>(classes.size()));
  for (std::size_t i = 0; i < values.size(); ++i)
    m(static_cast<Index>(i), index[values[i]]) = 1.0;
  return m;
}

std::string padded_name(const char* prefix, int i, int count) {
  int width = 1;
  for (int c = count - 1; c >= 10; c /= 10) ++width;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8s%0*d", prefix, width, i);
  return buf;
}

// Gram-Schmidt-free orthonormal basis via Householder QR of a seeded
// Gaussian matrix.
Matrix random_orthonormal(Index rows, Index cols, Rng& rng) {
  Matrix g = rng.gaussian_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  return q;
}

// Points at pairwise distance >= min_dist, drawn on a sphere of radius
// `min_dist` with rejection.
std::vector<Vector> separated_points(int count, Index dim, double min_dist,
                                     Rng& rng) {
  std::vector<Vector> points;
  for (int c = 0; c < count; ++c) {
    Vector best;
    double best_min = -1.0;
    for (int attempt = 0; attempt < 256; ++attempt) {
      Vector cand = rng.gaussian_matrix(dim, 1);
      cand *= min_dist / std::max(cand.norm(), 1e-12);
      double closest = 1e300;
      for (const auto& prev : points) closest = std::min(closest, (cand - prev).norm());
      if (closest >= min_dist) {
        best = cand;
        best_min = closest;
        break;
      }
      if (closest > best_min) {
        best = cand;
        best_min = closest;
      }
    }
    points.push_back(best);
  }
  return points;
}

}  // namespace

std::vector<int> Dataset::utility_labels() const { return argmax_rows(y); }
std::vector<int> Dataset::privacy_labels() const { return argmax_rows(p); }

void Dataset::validate() const {
  if (x.cols() != y.rows() || x.cols() != p.rows())
    throw ContractError("dataset: sample counts of X, Y, P disagree");
  if (!all_finite(x)) throw NumericError("dataset: non-finite features");
  check_one_hot_rows(y, "utility");
  check_one_hot_rows(p, "privacy");
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  std::vector<std::string> header = split_line(line);

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw IoError("schema error: missing column '" + name + "' in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::size_t util_col = column_of(schema.utility_col);
  std::size_t priv_col = column_of(schema.privacy_col);

  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names;
  if (schema.features.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == util_col || i == priv_col) continue;
      feature_cols.push_back(i);
      feature_names.push_back(header[i]);
    }
  } else {
    for (const auto& name : schema.features) {
      feature_cols.push_back(column_of(name));
      feature_names.push_back(name);
    }
  }
  if (feature_cols.empty()) throw IoError("schema error: no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> util_values, priv_values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw IoError("row " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(header.size()));
    std::vector<double> feat(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::string& cell = cells[feature_cols[j]];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw IoError("parse error: non-numeric feature '" + cell + "' at row " +
                      std::to_string(line_no));
      feat[j] = v;
    }
    rows.push_back(std::move(feat));
    util_values.push_back(cells[util_col]);
    priv_values.push_back(cells[priv_col]);
  }
  if (rows.empty()) throw IoError("'" + path + "' contains no data rows");

  Dataset ds;
  ds.feature_names = feature_names;
  ds.x.resize(static_cast<Index>(feature_cols.size()), static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.x(static_cast<Index>(j), static_cast<Index>(i)) = rows[i][j];
  ds.y = one_hot_from_names(util_values, ds.utility_classes);
  ds.p = one_hot_from_names(priv_values, ds.privacy_classes);
  ds.provenance = path;
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);  // LF endings
  if (!out) throw IoError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
    out << ds.feature_names[j] << ',';
  out << "utility,privacy\n";
  std::vector<int> u = ds.utility_labels();
  std::vector<int> p = ds.privacy_labels();
  for (Index i = 0; i < ds.n(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << format_double(ds.x(j, i)) << ',';
    out << ds.utility_classes[static_cast<std::size_t>(u[static_cast<std::size_t>(i)])]
        << ','
        << ds.privacy_classes[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])]
        << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<Index>& idx) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.utility_classes = ds.utility_classes;
  out.privacy_classes = ds.privacy_classes;
  out.provenance = ds.provenance;
  out.x.resize(ds.dim(), static_cast<Index>(idx.size()));
  out.y.resize(static_cast<Index>(idx.size()), ds.y.cols());
  out.p.resize(static_cast<Index>(idx.size()), ds.p.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.x.col(static_cast<Index>(i)) = ds.x.col(idx[i]);
    out.y.row(static_cast<Index>(i)) = ds.y.row(idx[i]);
    out.p.row(static_cast<Index>(i)) = ds.p.row(idx[i]);
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed, bool joint) {
  ds.validate();
  if (!(test_fraction > 0) || !(test_fraction < 1))
    throw ContractError("stratified_split: test_fraction must be in (0,1)");

  std::vector<int> priv = ds.privacy_labels();
  std::vector<int> util = ds.utility_labels();
  std::map<long, std::vector<Index>> strata;
  for (Index i = 0; i < ds.n(); ++i) {
    long key = joint ? static_cast<long>(util[static_cast<std::size_t>(i)]) *
                               ds.privacy_count() +
                           priv[static_cast<std::size_t>(i)]
                     : priv[static_cast<std::size_t>(i)];
    strata[key].push_back(i);
  }
  if (joint) {
    std::string bad;
    for (const auto& [key, members] : strata)
      if (members.size() < 2) bad += " (" + std::to_string(key) + ")";
    if (!bad.empty())
      throw ContractError("stratified_split: strata with fewer than 2 samples:" + bad);
  }

  Rng rng(seed);
  std::vector<Index> train_idx, test_idx;
  for (auto& [key, members] : strata) {
    rng.shuffle(members);
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i)
      (i < n_test ? test_idx : train_idx).push_back(members[i]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {take_rows(ds, train_idx), take_rows(ds, test_idx)};
}

Matrix StandardizeTransform::apply(const Matrix& x) const {
  Matrix out = x.colwise() - mean;
  out.array().colwise() /= scale.array();
  return out;
}

Matrix StandardizeTransform::invert(const Matrix& x) const {
  Matrix out = x;
  out.array().colwise() *= scale.array();
  out.colwise() += mean;
  return out;
}

std::tuple<Dataset, Dataset, StandardizeTransform> standardize(const Dataset& train,
                                                               const Dataset& test) {
  train.validate();
  if (train.n() == 0) throw ContractError("standardize: empty training set");
  StandardizeTransform t;
  t.mean = train.x.rowwise().mean();
  Matrix centered = train.x.colwise() - t.mean;
  Vector var = centered.cwiseProduct(centered).rowwise().mean();
  t.scale = var.cwiseSqrt();
  for (Index i = 0; i < t.scale.size(); ++i)
    if (t.scale(i) <= 0) {
      t.scale(i) = 1.0;  // zero-variance features pass through unscaled
      t.mean(i) = 0.0;
    }
  Dataset tr = train;
  tr.x = t.apply(train.x);
  Dataset te = test;
  if (te.n() > 0) te.x = t.apply(test.x);
  return {std::move(tr), std::move(te), std::move(t)};
}

void SyntheticSpec::validate() const {
  if (dim <= 0 || n <= 0) throw ContractError("synthetic spec: dim and n must be positive");
  if (utility_classes < 2 || privacy_classes < 2)
    throw ContractError("synthetic spec: need at least two classes per task");
  if (utility_subspace_dim <= 0 || privacy_subspace_dim <= 0)
    throw ContractError("synthetic spec: subspace dims must be positive");
  if (utility_subspace_dim + privacy_subspace_dim > dim)
    throw ContractError("synthetic spec: subspaces must fit inside dim");
  if (noise_scale < 0) throw ContractError("synthetic spec: noise_scale must be >= 0");
  if (overlap_angle_deg < 0 || overlap_angle_deg > 90)
    throw ContractError("synthetic spec: overlap angle must be in [0, 90] degrees");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Index d = spec.dim;
  const Index ud = spec.utility_subspace_dim;
  const Index pd = spec.privacy_subspace_dim;

  Matrix frame = random_orthonormal(d, ud + pd, rng);
  Matrix u_basis = frame.leftCols(ud);
  const double angle = spec.overlap_angle_deg * M_PI / 180.0;
  Matrix v_basis(d, pd);
  for (Index j = 0; j < pd; ++j)
    v_basis.col(j) =
        std::cos(angle) * frame.col(j % ud) + std::sin(angle) * frame.col(ud + j);

  std::vector<Vector> centers = separated_points(spec.utility_classes, ud,
                                                 spec.utility_separation, rng);
  std::vector<Vector> offsets;
  if (spec.encoding == PrivacyEncoding::kLinear)
    offsets = separated_points(spec.privacy_classes, pd, spec.privacy_separation, rng);

  Dataset ds;
  ds.x.resize(d, spec.n);
  ds.y = Matrix::Zero(spec.n, spec.utility_classes);
  ds.p = Matrix::Zero(spec.n, spec.privacy_classes);
  for (int j = 0; j < spec.dim; ++j)
    ds.feature_names.push_back(padded_name("f", j, spec.dim));
  for (int c = 0; c < spec.utility_classes; ++c)
    ds.utility_classes.push_back(padded_name("u", c, spec.utility_classes));
  for (int l = 0; l < spec.privacy_classes; ++l)
    ds.privacy_classes.push_back(padded_name("s", l, spec.privacy_classes));
  ds.provenance = "synthetic";

  for (Index i = 0; i < spec.n; ++i) {
    const int yc = static_cast<int>(i) % spec.utility_classes;
    const int pc = (static_cast<int>(i) / spec.utility_classes) % spec.privacy_classes;
    ds.y(i, yc) = 1.0;
    ds.p(i, pc) = 1.0;

    Vector util_part = centers[static_cast<std::size_t>(yc)] +
                       spec.within_scale * rng.gaussian_matrix(ud, 1).col(0);
    Vector priv_part;
    if (spec.encoding == PrivacyEncoding::kLinear) {
      priv_part = offsets[static_cast<std::size_t>(pc)] +
                  spec.within_scale * rng.gaussian_matrix(pd, 1).col(0);
    } else {
      // Zero-mean magnitude coding: class pc fixes the shell radius, the
      // direction is isotropic, so every linear statistic of the class is 0.
      Vector dir = rng.gaussian_matrix(pd, 1).col(0);
      dir /= std::max(dir.norm(), 1e-12);
      const double radius = spec.radius_base + pc * spec.radius_step;
      priv_part = radius * dir;
    }
    Vector sample = u_basis * util_part + v_basis * priv_part;
    if (spec.noise_scale > 0)
      sample += spec.noise_scale * rng.gaussian_matrix(d, 1).col(0);
    ds.x.col(i) = sample;
  }
  return ds;
}

}  // namespace privkit
