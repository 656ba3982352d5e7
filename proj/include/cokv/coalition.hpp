#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cokv {

// Identifier of one player. KV-cache players are attention head groups and
// carry their (layer, group) position; other players use an opaque name.
struct PlayerLabel {
  std::string name;
  std::optional<int> layer;
  std::optional<int> group;

  static PlayerLabel Opaque(std::string name);
  static PlayerLabel HeadGroup(int layer, int group);

  bool operator==(const PlayerLabel&) const = default;
};

class PlayerSet {
 public:
  // Players labelled "p1".."pn".
  explicit PlayerSet(int n);
  explicit PlayerSet(std::vector<PlayerLabel> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  const PlayerLabel& label(int i) const { return labels_.at(i); }
  const std::vector<PlayerLabel>& labels() const { return labels_; }

 private:
  std::vector<PlayerLabel> labels_;
};

// Membership bitset of a coalition S over n players.
class CoalitionMask {
 public:
  CoalitionMask() = default;
  explicit CoalitionMask(int n);

  static CoalitionMask Full(int n);
  static CoalitionMask FromMembers(int n, std::span<const int> members);
  // Bit i of `bits` is player i; requires n <= 64.
  static CoalitionMask FromBits(int n, std::uint64_t bits);
  // Inverse of hex_key().
  static CoalitionMask FromHexKey(int n, const std::string& key);

  int n() const { return n_; }
  bool contains(int player) const;
  void set(int player, bool member = true);
  int count() const;
  bool empty() const { return count() == 0; }

  CoalitionMask complement() const;
  std::vector<int> members() const;
  // Low 64 bits; exact when n <= 64.
  std::uint64_t low_bits() const { return words_.empty() ? 0 : words_[0]; }

  // Canonical key: 64-bit words from most to least significant, 16 hex digits
  // each. Identical membership always yields identical keys.
  std::string hex_key() const;

  bool operator==(const CoalitionMask&) const = default;

  std::size_t hash() const;

 private:
  void trim();

  int n_ = 0;
  std::vector<std::uint64_t> words_;
};

// Human-readable "{p1,p3}" rendering using 1-based player numbers.
std::string to_string(const CoalitionMask& mask);

}  // namespace cokv

template <>
struct std::hash<cokv::CoalitionMask> {
  std::size_t operator()(const cokv::CoalitionMask& m) const { return m.hash(); }
};
