#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cokv/coalition.hpp"
#include "cokv/error.hpp"

namespace cokv {

// Raised when a utility evaluation fails. Carries the coalition that was
// being evaluated.
class EvaluationError : public Error {
 public:
  enum class Reason { kTransport, kTimeout, kMalformed, kRange, kIdMismatch };

  EvaluationError(Reason reason, CoalitionMask coalition, const std::string& what);

  Reason reason() const { return reason_; }
  const CoalitionMask& coalition() const { return coalition_; }

 private:
  Reason reason_;
  CoalitionMask coalition_;
};

const char* to_string(EvaluationError::Reason reason);

// Maps a coalition to a real utility in a declared range [u_min, u_max].
// Implementations must be deterministic and safe to call concurrently.
class UtilityOracle {
 public:
  UtilityOracle(int n, double u_min, double u_max);
  virtual ~UtilityOracle() = default;

  UtilityOracle(const UtilityOracle&) = delete;
  UtilityOracle& operator=(const UtilityOracle&) = delete;

  int n() const { return n_; }
  double u_min() const { return u_min_; }
  double u_max() const { return u_max_; }
  double range() const { return u_max_ - u_min_; }

  // U(S). Checks the mask width and the declared range.
  double utility(const CoalitionMask& s) const;

  // Number of underlying evaluations performed so far. Caching wrappers
  // report cache misses only.
  virtual std::uint64_t evaluations() const { return calls_.load(); }

  // Stable identity of the game, used to keep evaluation caches apart.
  virtual std::string fingerprint() const = 0;

 protected:
  virtual double evaluate(const CoalitionMask& s) const = 0;

 private:
  int n_;
  double u_min_;
  double u_max_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

// U(S) - U(N \ S).
double complementary_contribution(const UtilityOracle& oracle, const CoalitionMask& s);

// 64-bit FNV-1a rendered as 16 hex digits.
std::string fingerprint_of(std::string_view text);

// ---------------------------------------------------------------------------
// Built-in utility families. Each has a closed form so that ground truth can
// be enumerated.

struct AdditiveParams {
  std::vector<double> weights;  // U(S) = sum of member weights
};

struct SymmetricParams {
  std::vector<double> by_size;  // U(S) = by_size[|S|], n+1 entries
};

struct WeightedVotingParams {
  std::vector<double> weights;
  double quota = 0.0;  // U(S) = 1 if member weight >= quota else 0
};

// U(S) = base + sum of gains of helpful members + sum of penalties (<= 0) of
// harmful members.
struct SaboteurParams {
  double base = 0.0;
  std::vector<std::pair<int, double>> helpful;
  std::vector<std::pair<int, double>> harmful;
};

struct ExternalParams {
  std::string command;            // subprocess mode
  std::string exchange_directory; // directory mode when non-empty
  double timeout_seconds = 1800.0;
  std::string cache_path;         // evaluation journal, optional
};

enum class GameFamily { kAdditive, kSymmetric, kWeightedVoting, kSaboteur, kExternal };

const char* to_string(GameFamily family);

struct GameSpec {
  GameFamily family = GameFamily::kAdditive;
  int n = 0;
  std::vector<PlayerLabel> labels;  // empty means p1..pn
  std::variant<AdditiveParams, SymmetricParams, WeightedVotingParams,
               SaboteurParams, ExternalParams>
      params;
  // Declared utility range; defaults come from the family.
  std::optional<std::pair<double, double>> range;

  PlayerSet players() const;
  // Throws ConfigError if the payload does not match n.
  void validate() const;
};

GameSpec parse_game_spec(const std::string& json_text);
std::string game_spec_to_json(const GameSpec& spec);

class AdditiveGame final : public UtilityOracle {
 public:
  explicit AdditiveGame(std::vector<double> weights);
  std::string fingerprint() const override;

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  std::vector<double> weights_;
};

class SymmetricGame final : public UtilityOracle {
 public:
  explicit SymmetricGame(std::vector<double> by_size);
  std::string fingerprint() const override;

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  std::vector<double> by_size_;
};

class WeightedVotingGame final : public UtilityOracle {
 public:
  WeightedVotingGame(std::vector<double> weights, double quota);
  std::string fingerprint() const override;

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  std::vector<double> weights_;
  double quota_;
};

class SaboteurGame final : public UtilityOracle {
 public:
  SaboteurGame(int n, SaboteurParams params);
  std::string fingerprint() const override;

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  SaboteurParams params_;
  std::vector<double> delta_;  // per-player signed contribution
};

// Pseudo-random game: U(S) is a hash of (seed, S) mapped to [0, 1]. Pure and
// defined for any n; used by self-checks and statistical tests.
class RandomGame final : public UtilityOracle {
 public:
  RandomGame(int n, std::uint64_t seed);
  std::string fingerprint() const override;

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  std::uint64_t seed_;
};

// Builds the oracle for any family except kExternal (see oracle_bridge.hpp).
std::unique_ptr<UtilityOracle> make_builtin_oracle(const GameSpec& spec);

}  // namespace cokv
