#include "cokv/coalition.hpp"

#include <bit>
#include <set>

#include "cokv/error.hpp"

namespace cokv {

PlayerLabel PlayerLabel::Opaque(std::string name) {
  return PlayerLabel{std::move(name), std::nullopt, std::nullopt};
}

PlayerLabel PlayerLabel::HeadGroup(int layer, int group) {
  return PlayerLabel{"L" + std::to_string(layer) + ".G" + std::to_string(group),
                     layer, group};
}

PlayerSet::PlayerSet(int n) {
  if (n < 1) throw ConfigError("player count must be >= 1, got " + std::to_string(n));
  labels_.reserve(n);
  for (int i = 0; i < n; ++i) {
    labels_.push_back(PlayerLabel::Opaque("p" + std::to_string(i + 1)));
  }
}

PlayerSet::PlayerSet(std::vector<PlayerLabel> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw ConfigError("player set must not be empty");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l.name).second) {
      throw ConfigError("duplicate player label '" + l.name + "'");
    }
  }
}

CoalitionMask::CoalitionMask(int n) : n_(n), words_((n + 63) / 64, 0) {
  if (n < 0) throw ConfigError("negative coalition width");
}

CoalitionMask CoalitionMask::Full(int n) {
  CoalitionMask m(n);
  for (auto& w : m.words_) w = ~std::uint64_t{0};
  m.trim();
  return m;
}

CoalitionMask CoalitionMask::FromMembers(int n, std::span<const int> members) {
  CoalitionMask m(n);
  for (int p : members) m.set(p);
  return m;
}

CoalitionMask CoalitionMask::FromBits(int n, std::uint64_t bits) {
  if (n > 64) throw ConfigError("FromBits requires n <= 64");
  CoalitionMask m(n);
  if (n > 0) m.words_[0] = bits;
  m.trim();
  return m;
}

CoalitionMask CoalitionMask::FromHexKey(int n, const std::string& key) {
  CoalitionMask m(n);
  if (key.size() != m.words_.size() * 16) {
    throw FormatError("coalition key '" + key + "' has wrong length for n=" +
                      std::to_string(n));
  }
  for (std::size_t w = 0; w < m.words_.size(); ++w) {
    const std::string chunk = key.substr(w * 16, 16);
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
      value = std::stoull(chunk, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != 16) throw FormatError("malformed coalition key '" + key + "'");
    m.words_[m.words_.size() - 1 - w] = value;
  }
  const CoalitionMask copy = m;
  m.trim();
  if (!(copy == m)) throw FormatError("coalition key '" + key + "' has bits beyond n");
  return m;
}

bool CoalitionMask::contains(int player) const {
  if (player < 0 || player >= n_) return false;
  return (words_[player / 64] >> (player % 64)) & 1u;
}

void CoalitionMask::set(int player, bool member) {
  if (player < 0 || player >= n_) {
    throw ConfigError("player index " + std::to_string(player) +
                      " out of range [0, " + std::to_string(n_) + ")");
  }
  const std::uint64_t bit = std::uint64_t{1} << (player % 64);
  if (member) {
    words_[player / 64] |= bit;
  } else {
    words_[player / 64] &= ~bit;
  }
}

int CoalitionMask::count() const {
  int c = 0;
  for (auto w : words_) c += std::popcount(w);
  return c;
}

CoalitionMask CoalitionMask::complement() const {
  CoalitionMask m(*this);
  for (auto& w : m.words_) w = ~w;
  m.trim();
  return m;
}

std::vector<int> CoalitionMask::members() const {
  std::vector<int> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits) {
      out.push_back(static_cast<int>(w * 64) + std::countr_zero(bits));
      bits &= bits - 1;
    }
  }
  return out;
}

std::string CoalitionMask::hex_key() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(words_.size() * 16);
  for (auto it = words_.rbegin(); it != words_.rend(); ++it) {
    for (int shift = 60; shift >= 0; shift -= 4) {
      out.push_back(kDigits[(*it >> shift) & 0xF]);
    }
  }
  return out;
}

std::size_t CoalitionMask::hash() const {
  // FNV-1a over the words.
  std::uint64_t h = 1469598103934665603ull ^ static_cast<std::uint64_t>(n_);
  for (auto w : words_) {
    h ^= w;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

void CoalitionMask::trim() {
  const int rem = n_ % 64;
  if (rem != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << rem) - 1;
  }
}

std::string to_string(const CoalitionMask& mask) {
  std::string out = "{";
  bool first = true;
  for (int p : mask.members()) {
    if (!first) out += ",";
    out += "p" + std::to_string(p + 1);
    first = false;
  }
  return out + "}";
}

}  // namespace cokv
