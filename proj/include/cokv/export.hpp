#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cokv/allocation.hpp"
#include "cokv/coalition.hpp"
#include "cokv/ssv.hpp"

namespace cokv {

// Shortest text that parses back to the same double.
std::string format_double(double v);

// CSV with columns player_index,label,<column>.
std::string values_csv(const PlayerSet& players, const std::vector<double>& values,
                       const std::string& column);

std::string estimate_json(const PlayerSet& players, const SsvEstimate& estimate);

// CSV with columns player_index,label,nsv,c.
std::string plan_csv(const PlayerSet& players, const AllocationPlan& plan);
std::string plan_json(const PlayerSet& players, const AllocationPlan& plan, int alpha);

struct ScoreColumn {
  std::vector<std::string> labels;
  std::vector<double> values;
};

// Reads a player_index,label,<value> CSV (as written by values_csv). The value
// column is the first of ssv, value, score, nsv present.
ScoreColumn read_scores_csv(const std::filesystem::path& path);

// Cache sizes from a plan CSV (column c) or plan JSON ("c" array).
std::vector<std::int64_t> read_plan_cache_sizes(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cokv
