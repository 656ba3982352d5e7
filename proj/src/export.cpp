#include "cokv/export.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "cokv/error.hpp"

namespace cokv {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(where + ": cannot parse number '" + s + "'");
  }
  return v;
}

json labels_json(const PlayerSet& players) {
  json out = json::array();
  for (const auto& l : players.labels()) out.push_back(l.name);
  return out;
}

}  // namespace

std::string values_csv(const PlayerSet& players, const std::vector<double>& values,
                       const std::string& column) {
  if (static_cast<int>(values.size()) != players.size()) {
    throw ConfigError("value count does not match player count");
  }
  std::string out = "player_index,label," + column + "\n";
  for (int i = 0; i < players.size(); ++i) {
    out += std::to_string(i) + "," + csv_field(players.label(i).name) + "," +
           format_double(values[i]) + "\n";
  }
  return out;
}

std::string estimate_json(const PlayerSet& players, const SsvEstimate& estimate) {
  json doc{{"labels", labels_json(players)},
           {"values", estimate.values},
           {"per_slice_means", estimate.per_slice_means},
           {"slice_set", estimate.slice_set.sizes()},
           {"total_samples", estimate.total_samples},
           {"oracle_evaluations", estimate.oracle_evaluations},
           {"seed", estimate.seed}};
  return doc.dump(2) + "\n";
}

std::string plan_csv(const PlayerSet& players, const AllocationPlan& plan) {
  std::string out = "player_index,label,nsv,c\n";
  for (int i = 0; i < players.size(); ++i) {
    out += std::to_string(i) + "," + csv_field(players.label(i).name) + "," +
           format_double(plan.normalized[i]) + "," + std::to_string(plan.cache_sizes[i]) + "\n";
  }
  return out;
}

std::string plan_json(const PlayerSet& players, const AllocationPlan& plan, int alpha) {
  json doc{{"labels", labels_json(players)},
           {"nsv", plan.normalized},
           {"c", plan.cache_sizes},
           {"budget", plan.budget},
           {"window", plan.window},
           {"alpha", alpha},
           {"shortfall", plan.shortfall},
           {"warnings", plan.warnings}};
  return doc.dump(2) + "\n";
}

ScoreColumn read_scores_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty score file");
  const auto header = split_csv_line(line);
  int value_col = -1;
  int label_col = -1;
  for (const char* name : {"ssv", "value", "score", "nsv"}) {
    for (std::size_t c = 0; c < header.size() && value_col < 0; ++c) {
      if (header[c] == name) value_col = static_cast<int>(c);
    }
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") label_col = static_cast<int>(c);
  }
  if (value_col < 0) throw FormatError(path.string() + ": no ssv/value/score column");
  ScoreColumn out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) <= value_col) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + " is short");
    }
    out.values.push_back(parse_double(fields[value_col], path.string() + " row " + std::to_string(row)));
    out.labels.push_back(label_col >= 0 && label_col < static_cast<int>(fields.size())
                             ? fields[label_col]
                             : "p" + std::to_string(out.values.size()));
  }
  return out;
}

std::vector<std::int64_t> read_plan_cache_sizes(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  if (path.extension() == ".json") {
    try {
      return json::parse(text).at("c").get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  int col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "c") col = static_cast<int>(c);
  }
  if (col < 0) throw FormatError(path.string() + ": plan CSV has no 'c' column");
  std::vector<std::int64_t> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) <= col) throw FormatError(path.string() + ": short row");
    out.push_back(static_cast<std::int64_t>(parse_double(fields[col], path.string())));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace cokv
