#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cokv/game.hpp"

namespace cokv {

// --- Wire format ------------------------------------------------------------
// Request line:  {"id": int, "n": int, "masked_players": [int, ...]}
// Response line: {"id": int, "utility": float, "diagnostics": {...}?}
// masked_players is N \ S, sorted ascending: the heads the evaluator masks.

struct OracleRequest {
  std::uint64_t id = 0;
  int n = 0;
  std::vector<int> masked_players;
};

struct OracleResponse {
  std::uint64_t id = 0;
  double utility = 0.0;
  std::string diagnostics_json;  // empty when absent
};

OracleRequest request_for(std::uint64_t id, const CoalitionMask& coalition);
CoalitionMask coalition_of(const OracleRequest& request);

std::string encode_request(const OracleRequest& request);
std::string encode_response(const OracleResponse& response);
// Both throw FormatError on malformed lines.
OracleRequest decode_request(const std::string& line);
OracleResponse decode_response(const std::string& line);

// --- Transports -------------------------------------------------------------

// Raised by transports when the channel itself breaks (process exit, I/O
// error). The client turns it into an EvaluationError.
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const std::string& line) = 0;
  // Next reply line, or nullopt when nothing arrived within `timeout`.
  virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
  // Re-establishes the channel after a failure.
  virtual void restart() = 0;
};

// Runs `/bin/sh -c command` and exchanges one JSON object per line over its
// standard input and output.
class SubprocessTransport final : public Transport {
 public:
  explicit SubprocessTransport(std::string command);
  ~SubprocessTransport() override;

  void send(const std::string& line) override;
  std::optional<std::string> receive(std::chrono::milliseconds timeout) override;
  void restart() override;

 private:
  void start();
  void stop();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Exchanges files for batch schedulers: each request is written to
// <dir>/requests/<id>.json; the evaluator answers with
// <dir>/responses/<id>.json, which is consumed (deleted) once read.
class DirectoryTransport final : public Transport {
 public:
  explicit DirectoryTransport(std::filesystem::path directory,
                              std::chrono::milliseconds poll_interval = std::chrono::milliseconds(20));

  void send(const std::string& line) override;
  std::optional<std::string> receive(std::chrono::milliseconds timeout) override;
  void restart() override {}

 private:
  std::filesystem::path directory_;
  std::chrono::milliseconds poll_interval_;
};

// --- Client -----------------------------------------------------------------

using EvalOutcome = std::variant<double, EvaluationError>;

// Matches replies to requests by id, enforces the timeout and the declared
// utility range, and retries each request once after a transport failure.
// Every request ends in exactly one outcome.
class OracleClient {
 public:
  OracleClient(std::unique_ptr<Transport> transport, int n, double u_min, double u_max,
               std::chrono::milliseconds timeout);

  // U(S); throws EvaluationError.
  double evaluate(const CoalitionMask& coalition);

  // Outcomes in input order with at most `parallelism` requests in flight.
  // Duplicates are not removed here (see evaluate_batch).
  std::vector<EvalOutcome> evaluate_many(std::span<const CoalitionMask> coalitions,
                                         int parallelism);

  std::uint64_t requests_sent() const { return requests_sent_.load(); }
  int n() const { return n_; }

 private:
  std::unique_ptr<Transport> transport_;
  int n_;
  double u_min_;
  double u_max_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  std::set<std::uint64_t> abandoned_;  // timed-out ids whose late replies are dropped
  std::atomic<std::uint64_t> requests_sent_{0};
};

// --- Evaluation cache -------------------------------------------------------

// Coalition -> utility map keyed by CoalitionMask::hex_key(), tied to one game
// fingerprint. Optionally journals every insertion to an append-only file of
// lines {"key": hex, "utility": float, "fingerprint": hex}.
class EvalCache {
 public:
  explicit EvalCache(std::string fingerprint);

  const std::string& fingerprint() const { return fingerprint_; }

  std::optional<double> lookup(const CoalitionMask& coalition) const;

  // Returns the cached value or runs `compute` once, even when several
  // threads ask for the same coalition concurrently. Failures are not cached.
  double get_or_compute(const CoalitionMask& coalition,
                        const std::function<double()>& compute);

  void insert(const CoalitionMask& coalition, double utility);

  // Appends future insertions to `path`.
  void attach_journal(const std::filesystem::path& path);

  std::size_t size() const;
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::uint64_t corrupt_lines() const { return corrupt_lines_; }
  std::uint64_t foreign_lines() const { return foreign_lines_; }

  std::map<std::string, double> snapshot() const;

 private:
  friend std::shared_ptr<EvalCache> load_cache(const std::filesystem::path&,
                                               const std::string&);
  void store(const std::string& key, double utility);

  std::string fingerprint_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, double> values_;
  std::unordered_map<std::string, std::shared_future<double>> pending_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
  std::uint64_t corrupt_lines_ = 0;
  std::uint64_t foreign_lines_ = 0;
  std::mutex journal_mutex_;
  std::ofstream journal_;
};

// Writes every entry as a fresh journal.
void persist_cache(const EvalCache& cache, const std::filesystem::path& path);

// Replays a journal. Corrupt lines are skipped and counted; entries recorded
// under another fingerprint are ignored and counted separately. A missing
// file yields an empty cache.
std::shared_ptr<EvalCache> load_cache(const std::filesystem::path& path, const std::string& fingerprint);

// --- Oracles ------------------------------------------------------------------

// Serves utilities from a cache in front of another oracle. evaluations()
// counts only cache misses that reached the inner oracle.
class CachedOracle final : public UtilityOracle {
 public:
  CachedOracle(const UtilityOracle& inner, std::shared_ptr<EvalCache> cache);

  std::uint64_t evaluations() const override { return computed_.load(); }
  std::string fingerprint() const override { return inner_.fingerprint(); }
  EvalCache& cache() { return *cache_; }

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  const UtilityOracle& inner_;
  std::shared_ptr<EvalCache> cache_;
  mutable std::atomic<std::uint64_t> computed_{0};
};

// Utility served by an external evaluator through an OracleClient.
class ExternalOracle final : public UtilityOracle {
 public:
  ExternalOracle(std::unique_ptr<OracleClient> client, double u_min, double u_max,
                 std::string identity);

  std::string fingerprint() const override;
  OracleClient& client() const { return *client_; }

 protected:
  double evaluate(const CoalitionMask& s) const override;

 private:
  std::unique_ptr<OracleClient> client_;
  std::string identity_;
};

struct BatchFailure {
  std::size_t index;  // first input position of the failed coalition
  CoalitionMask coalition;
  std::string reason;
  std::string message;
};

struct BatchResult {
  std::vector<std::optional<double>> values;  // input order; empty on failure
  std::vector<BatchFailure> failures;
  std::size_t oracle_calls = 0;
};

// Deduplicates within the batch and against the cache, evaluates the rest
// with at most `parallelism` requests in flight, and stores successes in the
// cache. Failed coalitions are reported, never filled in.
BatchResult evaluate_batch(std::span<const CoalitionMask> coalitions, OracleClient& client,
                           EvalCache& cache, int parallelism);

// Builds any game from its spec. External games get an OracleClient over the
// configured transport; a non-empty cache path (from the spec or the
// argument) puts a journaled EvalCache in front.
class OracleStack {
 public:
  explicit OracleStack(const GameSpec& spec, const std::string& cache_path = "");

  const UtilityOracle& oracle() const { return cached_ ? *cached_ : *base_; }
  const UtilityOracle& base() const { return *base_; }
  EvalCache* cache() const { return cache_.get(); }

 private:
  std::unique_ptr<UtilityOracle> base_;
  std::shared_ptr<EvalCache> cache_;
  std::unique_ptr<CachedOracle> cached_;
};

}  // namespace cokv
