#include "privkit/results.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace privkit {
namespace {

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

}  // namespace

void write_results(const std::vector<TradeoffPoint>& points, const std::string& path,
                   const std::string& config_hash) {
  if (points.empty()) throw ContractError("write_results: no points");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "lambda_p,utility_acc,privacy_acc";
  for (const auto& [name, acc] : points.front().adversary_acc) out << ',' << name << "_acc";
  out << ",seed\n";
  for (const auto& pt : points) {
    out << format_double(pt.lambda_p) << ',' << format_double(pt.utility_acc) << ','
        << format_double(pt.privacy_acc);
    for (const auto& [name, acc] : pt.adversary_acc) out << ',' << format_double(acc);
    out << ',' << pt.seed << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<TradeoffPoint> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_line(line);
    break;
  }
  if (header.size() < 4 || header[0] != "lambda_p")
    throw IoError("'" + path + "' is not a results file");

  std::vector<TradeoffPoint> points;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw IoError("results row with wrong cell count in '" + path + "'");
    TradeoffPoint pt;
    pt.lambda_p = std::strtod(cells[0].c_str(), nullptr);
    pt.utility_acc = std::strtod(cells[1].c_str(), nullptr);
    pt.privacy_acc = std::strtod(cells[2].c_str(), nullptr);
    for (std::size_t j = 3; j + 1 < cells.size(); ++j) {
      std::string name = header[j];
      if (name.size() > 4 && name.substr(name.size() - 4) == "_acc")
        name = name.substr(0, name.size() - 4);
      pt.adversary_acc.emplace_back(name, std::strtod(cells[j].c_str(), nullptr));
    }
    pt.seed = std::strtoull(cells.back().c_str(), nullptr, 10);
    pt.ok = std::isfinite(pt.utility_acc);
    points.push_back(std::move(pt));
  }
  return points;
}

}  // namespace privkit
