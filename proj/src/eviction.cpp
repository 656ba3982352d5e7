#include "cokv/eviction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cokv/error.hpp"

namespace cokv {

template <typename T>
Matrix<T>::Matrix(int rows, int cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("matrix payload does not match " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}

template class Matrix<float>;
template class Matrix<double>;

void HeadTensorBundle::validate() const {
  const int d = head_dim();
  if (d < 1) throw ConfigError("head dimension must be >= 1");
  auto check = [&](const MatrixF& m, int rows, const char* name) {
    if (m.cols() != d || m.rows() != rows) {
      throw ConfigError(std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(d));
    }
  };
  check(k_out, prefix(), "k_out");
  check(v_out, prefix(), "v_out");
  check(k_win, window(), "k_win");
  check(v_win, window(), "v_win");
  if (length() <= window()) throw ConfigError("sequence must be longer than the window");
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) total += static_cast<double>(a[t]) * b[t];
  return total;
}

// Softmax of the scaled logits of `query` against every row of `keys`.
std::vector<double> attention_row(std::span<const float> query, const MatrixF& keys) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
  std::vector<double> row(keys.rows());
  double peak = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < keys.rows(); ++c) {
    row[c] = dot(query, keys.row(c)) * scale;
    peak = std::max(peak, row[c]);
  }
  double total = 0.0;
  for (double& x : row) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : row) x /= total;
  return row;
}

}  // namespace

std::vector<double> pooled_scores(const MatrixF& q_win, const MatrixF& k_out,
                                  const PoolingConfig& pooling) {
  if (pooling.kernel < 1 || pooling.kernel % 2 == 0) {
    throw ConfigError("pooling kernel must be odd and >= 1, got " + std::to_string(pooling.kernel));
  }
  if (q_win.rows() == 0) {
    throw ConfigError("no window queries to score the prefix; use a positional policy instead");
  }
  if (k_out.rows() == 0) throw ConfigError("empty prefix");
  if (q_win.cols() != k_out.cols()) throw ConfigError("query/key dimension mismatch");

  const int len = k_out.rows();
  const int half = pooling.kernel / 2;
  std::vector<double> scores(len, 0.0);
  std::vector<double> pooled(len);
  for (int r = 0; r < q_win.rows(); ++r) {
    const std::vector<double> weights = attention_row(q_win.row(r), k_out);
    for (int c = 0; c < len; ++c) {
      const int lo = std::max(0, c - half);
      const int hi = std::min(len - 1, c + half);
      pooled[c] = *std::max_element(weights.begin() + lo, weights.begin() + hi + 1);
    }
    for (int c = 0; c < len; ++c) scores[c] += pooled[c];
  }
  for (double& s : scores) s /= q_win.rows();
  return scores;
}

std::vector<int> top_k_indices(std::span<const double> scores, int keep) {
  const int len = static_cast<int>(scores.size());
  keep = std::clamp(keep, 0, len);
  std::vector<int> idx(len);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](int a, int b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

EvictionResult evict(const HeadTensorBundle& bundle, std::int64_t cache_size,
                     const PoolingConfig& pooling) {
  bundle.validate();
  const int s = bundle.window();
  if (cache_size < s) {
    throw ConfigError("cache size " + std::to_string(cache_size) + " is below the window " +
                      std::to_string(s));
  }
  EvictionResult out;
  out.scores = pooled_scores(bundle.q_win, bundle.k_out, pooling);
  const auto keep = static_cast<int>(
      std::min<std::int64_t>(cache_size - s, static_cast<std::int64_t>(bundle.prefix())));
  out.retained_prefix_indices = top_k_indices(out.scores, keep);

  const int d = bundle.head_dim();
  out.k_hat = MatrixF(keep + s, d);
  out.v_hat = MatrixF(keep + s, d);
  int row = 0;
  auto copy_row = [&](const MatrixF& k, const MatrixF& v, int src) {
    std::copy_n(k.row(src).begin(), d, out.k_hat.row(row).begin());
    std::copy_n(v.row(src).begin(), d, out.v_hat.row(row).begin());
    ++row;
  };
  for (int i : out.retained_prefix_indices) copy_row(bundle.k_out, bundle.v_out, i);
  for (int w = 0; w < s; ++w) copy_row(bundle.k_win, bundle.v_win, w);
  return out;
}

std::vector<double> attention_readout(std::span<const float> query, const MatrixF& k_hat,
                                      const MatrixF& v_hat) {
  if (k_hat.rows() == 0) throw ConfigError("attention over an empty cache");
  if (k_hat.rows() != v_hat.rows() || k_hat.cols() != static_cast<int>(query.size()) ||
      v_hat.cols() != k_hat.cols()) {
    throw ConfigError("attention readout shape mismatch");
  }
  const std::vector<double> weights = attention_row(query, k_hat);
  std::vector<double> out(v_hat.cols(), 0.0);
  for (int r = 0; r < v_hat.rows(); ++r) {
    for (int c = 0; c < v_hat.cols(); ++c) out[c] += weights[r] * v_hat(r, c);
  }
  return out;
}

double retained_attention_mass(const HeadTensorBundle& bundle, const EvictionResult& result,
                               std::span<const float> probe) {
  if (static_cast<int>(result.retained_prefix_indices.size()) == bundle.prefix()) return 1.0;
  // Full key set in sequence order: prefix then window.
  MatrixF keys(bundle.length(), bundle.head_dim());
  for (int r = 0; r < bundle.prefix(); ++r) {
    std::copy_n(bundle.k_out.row(r).begin(), bundle.head_dim(), keys.row(r).begin());
  }
  for (int r = 0; r < bundle.window(); ++r) {
    std::copy_n(bundle.k_win.row(r).begin(), bundle.head_dim(),
                keys.row(bundle.prefix() + r).begin());
  }
  const std::vector<double> weights = attention_row(probe, keys);
  double mass = 0.0;
  for (int i : result.retained_prefix_indices) mass += weights[i];
  for (int r = 0; r < bundle.window(); ++r) mass += weights[bundle.prefix() + r];
  return std::clamp(mass, 0.0, 1.0);
}

}  // namespace cokv
