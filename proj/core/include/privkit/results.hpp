#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "privkit/errors.hpp"

namespace privkit {

// One point of a utility/privacy trade-off curve. The privacy accuracy is
// the maximum over the adversary suite.
struct TradeoffPoint {
  double lambda_p = 0.0;
  double utility_acc = 0.0;
  double privacy_acc = 0.0;
  std::vector<std::pair<std::string, double>> adversary_acc;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
};

// CSV with header lambda_p,utility_acc,privacy_acc,<member>_acc...,seed and
// 17 significant digits; rows preserve the given order. A non-empty
// config_hash is recorded in a leading comment line.
void write_results(const std::vector<TradeoffPoint>& points, const std::string& path,
                   const std::string& config_hash = {});

std::vector<TradeoffPoint> read_results(const std::string& path);

}  // namespace privkit
