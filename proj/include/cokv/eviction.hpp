#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cokv {

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols) {}
  Matrix(int rows, int cols, std::vector<T> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::span<const T> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<T> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  T operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using MatrixF = Matrix<float>;

// One head's tensors. The prefix holds m - s tokens, the local window s.
struct HeadTensorBundle {
  MatrixF q_win;  // s x d_h
  MatrixF k_out;  // (m-s) x d_h
  MatrixF v_out;
  MatrixF k_win;  // s x d_h
  MatrixF v_win;

  int head_dim() const { return q_win.cols(); }
  int window() const { return q_win.rows(); }
  int prefix() const { return k_out.rows(); }
  int length() const { return prefix() + window(); }

  // Throws ConfigError on inconsistent shapes.
  void validate() const;
};

struct PoolingConfig {
  int kernel = 7;  // odd, stride 1, same-length output
};

struct EvictionResult {
  std::vector<int> retained_prefix_indices;  // strictly increasing, into [0, m-s)
  MatrixF k_hat;  // retained prefix rows followed by the window rows
  MatrixF v_hat;
  std::vector<double> scores;  // pooled score of every prefix position
};

// Rowwise softmax(q_win k_out^T / sqrt(d_h)), max-pooled along the key axis,
// then averaged over the window queries. Computed in double.
std::vector<double> pooled_scores(const MatrixF& q_win, const MatrixF& k_out,
                                  const PoolingConfig& pooling);

// Indices of the `keep` largest scores in ascending index order. Equal scores
// prefer the lower index.
std::vector<int> top_k_indices(std::span<const double> scores, int keep);

// Keeps the top (cache_size - s) prefix tokens by pooled score plus the whole
// window, so exactly min(cache_size, m) rows survive.
EvictionResult evict(const HeadTensorBundle& bundle, std::int64_t cache_size,
                     const PoolingConfig& pooling);

// softmax(query k_hat^T / sqrt(d_h)) v_hat.
std::vector<double> attention_readout(std::span<const float> query, const MatrixF& k_hat,
                                      const MatrixF& v_hat);

// Share of the probe's full-cache attention mass that lands on retained rows.
double retained_attention_mass(const HeadTensorBundle& bundle, const EvictionResult& result,
                               std::span<const float> probe);

}  // namespace cokv
