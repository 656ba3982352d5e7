#pragma once

#include <string>
#include <vector>

namespace cokv {

// Coalition sizes H subset of {1..n} at which complementary contributions are
// sampled. Sorted, unique, nonempty.
class SliceSet {
 public:
  SliceSet(std::vector<int> sizes, int n);

  static SliceSet All(int n);

  const std::vector<int>& sizes() const { return sizes_; }
  int size() const { return static_cast<int>(sizes_.size()); }
  int n() const { return n_; }
  bool contains(int j) const;

  std::string to_string() const;

  bool operator==(const SliceSet&) const = default;

 private:
  std::vector<int> sizes_;
  int n_;
};

}  // namespace cokv
