#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "mdenas/ranking.hpp"

namespace mdenas {

/// Malformed input file (CSV or JSON document).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes `content` next to `path` and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

/// Stages several files as temporaries and publishes them together, so a
/// failure before commit() leaves no partial outputs behind.
class StagedOutputs {
 public:
  void add(std::filesystem::path path, std::string content) {
    files_.emplace_back(std::move(path), std::move(content));
  }

  void commit() {
    for (const auto& [path, content] : files_) {
      auto tmp = path;
      tmp += ".tmp";
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    for (const auto& [path, content] : files_) {
      auto tmp = path;
      tmp += ".tmp";
      std::filesystem::rename(tmp, path);
    }
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

/// Score matrix read from "epoch,arch_id,accuracy" rows.
struct ScoreTable {
  std::vector<long long> epochs;     // ascending
  std::vector<std::string> arch_ids;  // ascending
  ScoreMatrix scores;                 // [epoch][arch]
};

inline ScoreTable parse_score_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<long long, std::map<std::string, double>> cells;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (line_no == 1 && !f.empty() && f[0] == "epoch") continue;
    if (f.size() != 3) throw InputError(fmt::format("line {}: expected 3 fields, got {}", line_no, f.size()));
    long long epoch = 0;
    double acc = 0.0;
    try {
      std::size_t used = 0;
      epoch = std::stoll(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("epoch");
      acc = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("accuracy");
    } catch (const std::exception&) {
      throw InputError(fmt::format("line {}: cannot parse '{}'", line_no, line));
    }
    if (!cells[epoch].emplace(f[1], acc).second) {
      throw InputError(fmt::format("line {}: duplicate score for epoch {} arch {}", line_no, epoch, f[1]));
    }
    ids.insert(f[1]);
  }
  ScoreTable t;
  t.arch_ids.assign(ids.begin(), ids.end());
  for (const auto& [epoch, row] : cells) {
    if (row.size() != ids.size()) {
      throw InputError(fmt::format("ragged scores: epoch {} has {} of {} architectures", epoch, row.size(), ids.size()));
    }
    t.epochs.push_back(epoch);
    std::vector<double> values;
    for (const auto& id : t.arch_ids) values.push_back(row.at(id));
    t.scores.push_back(std::move(values));
  }
  return t;
}

}  // namespace mdenas
