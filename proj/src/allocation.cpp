#include "cokv/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cokv/error.hpp"

namespace cokv {

std::vector<double> normalize_scores(std::span<const double> scores, int alpha) {
  const int n = static_cast<int>(scores.size());
  if (n < 2) throw ConfigError("normalization needs at least 2 heads");
  if (alpha < 0 || alpha >= n) {
    throw ConfigError("alpha must lie in [0, " + std::to_string(n) + "), got " +
                      std::to_string(alpha));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ConfigError("scores must be finite");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });

  const double low = scores[order[std::max(alpha, 1) - 1]];
  const double high = scores[order[n - 1]];
  std::vector<double> nsv(n, 0.0);
  for (int r = alpha; r < n; ++r) {
    const int i = order[r];
    nsv[i] = high > low ? std::clamp((scores[i] - low) / (high - low), 0.0, 1.0) : 1.0;
  }
  return nsv;
}

std::vector<std::int64_t> apportion(std::int64_t total, std::span<const double> weights) {
  const std::size_t n = weights.size();
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (n == 0 || !(sum > 0)) throw ConfigError("apportionment needs a positive weight sum");
  std::vector<std::int64_t> out(n);
  std::vector<double> remainder(n);
  std::int64_t given = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::int64_t>(std::floor(share));
    remainder[i] = share - static_cast<double>(out[i]);
    given += out[i];
  }
  // Floating error can push the floors one unit either way of the total.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; given < total; k = (k + 1) % n) {
    ++out[order[k]];
    ++given;
  }
  for (std::size_t k = n; given > total; k = (k == 1 ? n : k - 1)) {
    const std::size_t i = order[k - 1];
    if (out[i] > 0) {
      --out[i];
      --given;
    }
  }
  return out;
}

AllocationPlan allocate(std::span<const double> normalized, const AllocationConfig& config) {
  if (config.budget < 0) throw ConfigError("budget must be >= 0");
  if (config.window < 0) throw ConfigError("window must be >= 0");
  const std::size_t n = normalized.size();
  if (n == 0) throw ConfigError("allocation needs at least one head");
  for (double v : normalized) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("normalized scores must lie in [0, 1]");
  }
  AllocationPlan plan;
  plan.normalized.assign(normalized.begin(), normalized.end());
  plan.budget = config.budget;
  plan.window = config.window;

  std::vector<double> weights(normalized.begin(), normalized.end());
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
    plan.warnings.push_back("all normalized scores are zero; budget split uniformly");
    std::fill(weights.begin(), weights.end(), 1.0);
  }
  const auto shares = apportion(config.budget, weights);
  plan.cache_sizes.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.cache_sizes[i] = shares[i] + config.window;
  return plan;
}

AllocationPlan allocate_from_scores(std::span<const double> scores, const AllocationConfig& config) {
  const auto nsv = normalize_scores(scores, config.alpha);
  return allocate(nsv, config);
}

AllocationPlan cap_and_redistribute(const AllocationPlan& plan,
                                    std::span<const std::int64_t> capacity) {
  const std::size_t n = plan.cache_sizes.size();
  if (capacity.size() != n) {
    throw ConfigError("capacity has " + std::to_string(capacity.size()) + " entries, plan has " +
                      std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (capacity[i] < plan.window) {
      throw ConfigError("capacity of head " + std::to_string(i) + " (" +
                        std::to_string(capacity[i]) + ") is below the window " +
                        std::to_string(plan.window));
    }
  }
  AllocationPlan out = plan;
  std::vector<bool> capped(n, false);
  std::int64_t excess = 0;
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) {
      if (out.cache_sizes[i] >= capacity[i] && !capped[i]) {
        excess += out.cache_sizes[i] - capacity[i];
        out.cache_sizes[i] = capacity[i];
        capped[i] = true;
      }
    }
    if (excess == 0) break;
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i]) open.push_back(i);
    }
    if (open.empty()) {
      out.shortfall = excess;
      out.warnings.push_back("total capacity below budget; shortfall " + std::to_string(excess));
      break;
    }
    std::vector<double> weights;
    for (auto i : open) weights.push_back(out.normalized[i]);
    if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
      std::fill(weights.begin(), weights.end(), 1.0);
    }
    const auto extra = apportion(excess, weights);
    for (std::size_t k = 0; k < open.size(); ++k) out.cache_sizes[open[k]] += extra[k];
    excess = 0;
  }
  return out;
}

}  // namespace cokv
