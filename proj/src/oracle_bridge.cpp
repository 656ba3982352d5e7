#include "cokv/oracle_bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <iterator>
#include <thread>

#include "json.hpp"

namespace cokv {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// --- Wire format ------------------------------------------------------------

OracleRequest request_for(std::uint64_t id, const CoalitionMask& coalition) {
  return OracleRequest{id, coalition.n(), coalition.complement().members()};
}

CoalitionMask coalition_of(const OracleRequest& request) {
  return CoalitionMask::FromMembers(request.n, request.masked_players).complement();
}

std::string encode_request(const OracleRequest& request) {
  return json{{"id", request.id}, {"n", request.n}, {"masked_players", request.masked_players}}
      .dump();
}

std::string encode_response(const OracleResponse& response) {
  json doc{{"id", response.id}, {"utility", response.utility}};
  if (!response.diagnostics_json.empty()) {
    doc["diagnostics"] = json::parse(response.diagnostics_json);
  }
  return doc.dump();
}

OracleRequest decode_request(const std::string& line) {
  try {
    const json doc = json::parse(line);
    OracleRequest r;
    r.id = doc.at("id").get<std::uint64_t>();
    r.n = doc.at("n").get<int>();
    r.masked_players = doc.at("masked_players").get<std::vector<int>>();
    if (r.n < 1) throw FormatError("request n must be >= 1");
    for (std::size_t k = 0; k < r.masked_players.size(); ++k) {
      const int p = r.masked_players[k];
      if (p < 0 || p >= r.n || (k > 0 && p <= r.masked_players[k - 1])) {
        throw FormatError("masked_players must be sorted, unique and in [0, n)");
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed request line: ") + e.what());
  }
}

OracleResponse decode_response(const std::string& line) {
  try {
    const json doc = json::parse(line);
    if (!doc.is_object()) throw FormatError("response is not a JSON object");
    OracleResponse r;
    r.id = doc.at("id").get<std::uint64_t>();
    const json& u = doc.at("utility");
    if (!u.is_number()) throw FormatError("utility is not a number");
    r.utility = u.get<double>();
    if (doc.contains("diagnostics")) r.diagnostics_json = doc.at("diagnostics").dump();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed response line: ") + e.what());
  }
}

// --- SubprocessTransport ----------------------------------------------------

namespace {
std::once_flag ignore_sigpipe_once;
}  // namespace

SubprocessTransport::SubprocessTransport(std::string command) : command_(std::move(command)) {
  std::call_once(ignore_sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
  start();
}

SubprocessTransport::~SubprocessTransport() { stop(); }

void SubprocessTransport::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportFailure("pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw TransportFailure("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw TransportFailure("fork failed");
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

void SubprocessTransport::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks a well-behaved evaluator to exit.
    int status = 0;
    bool reaped = false;
    for (int attempt = 0; attempt < 20 && !reaped; ++attempt) {
      reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
      if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  buffer_.clear();
}

void SubprocessTransport::restart() {
  stop();
  start();
}

void SubprocessTransport::send(const std::string& line) {
  if (to_child_ < 0) throw TransportFailure("oracle process not running");
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t w = ::write(to_child_, data.data() + done, data.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportFailure(std::string("write to oracle failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(w);
  }
}

std::optional<std::string> SubprocessTransport::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    const auto eol = buffer_.find('\n');
    if (eol != std::string::npos) {
      std::string line = buffer_.substr(0, eol);
      buffer_.erase(0, eol + 1);
      return line;
    }
    if (from_child_ < 0) throw TransportFailure("oracle process not running");
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportFailure("poll failed");
    }
    if (ready == 0) return std::nullopt;
    char chunk[4096];
    const ssize_t r = ::read(from_child_, chunk, sizeof(chunk));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportFailure(std::string("read from oracle failed: ") + std::strerror(errno));
    }
    if (r == 0) throw TransportFailure("oracle process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(r));
  }
}

// --- DirectoryTransport -----------------------------------------------------

DirectoryTransport::DirectoryTransport(std::filesystem::path directory,
                                       std::chrono::milliseconds poll_interval)
    : directory_(std::move(directory)), poll_interval_(poll_interval) {
  std::filesystem::create_directories(directory_ / "requests");
  std::filesystem::create_directories(directory_ / "responses");
}

void DirectoryTransport::send(const std::string& line) {
  const OracleRequest r = decode_request(line);
  const auto final_path = directory_ / "requests" / (std::to_string(r.id) + ".json");
  const auto tmp = directory_ / "requests" / (std::to_string(r.id) + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw TransportFailure("cannot write " + tmp.string());
    out << line << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) throw TransportFailure("cannot publish " + final_path.string() + ": " + ec.message());
}

std::optional<std::string> DirectoryTransport::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    std::vector<std::filesystem::path> ready;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(directory_ / "responses", ec)) {
      if (entry.path().extension() == ".json") ready.push_back(entry.path());
    }
    if (ec) throw TransportFailure("cannot list responses: " + ec.message());
    std::sort(ready.begin(), ready.end());
    for (const auto& path : ready) {
      std::ifstream in(path);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      in.close();
      std::filesystem::remove(path, ec);
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      return text;
    }
    if (Clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(poll_interval_);
  }
}

// --- OracleClient -------------------------------------------------------------

OracleClient::OracleClient(std::unique_ptr<Transport> transport, int n, double u_min,
                           double u_max, std::chrono::milliseconds timeout)
    : transport_(std::move(transport)), n_(n), u_min_(u_min), u_max_(u_max), timeout_(timeout) {
  if (!transport_) throw ConfigError("oracle client needs a transport");
  if (n < 1) throw ConfigError("oracle client needs n >= 1");
  if (timeout.count() <= 0) throw ConfigError("oracle timeout must be positive");
}

double OracleClient::evaluate(const CoalitionMask& coalition) {
  auto outcome = evaluate_many(std::span<const CoalitionMask>(&coalition, 1), 1);
  if (auto* err = std::get_if<EvaluationError>(&outcome.front())) throw *err;
  return std::get<double>(outcome.front());
}

std::vector<EvalOutcome> OracleClient::evaluate_many(std::span<const CoalitionMask> coalitions,
                                                     int parallelism) {
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  for (const auto& c : coalitions) {
    if (c.n() != n_) {
      throw ConfigError("coalition has " + std::to_string(c.n()) + " players, oracle expects " +
                        std::to_string(n_));
    }
  }
  std::lock_guard lock(mutex_);

  struct Flight {
    std::size_t index;
    std::string line;
    bool retried;
    Clock::time_point deadline;
  };
  std::vector<std::optional<EvalOutcome>> out(coalitions.size());
  std::map<std::uint64_t, Flight> in_flight;
  using Reason = EvaluationError::Reason;

  auto fail = [&](std::map<std::uint64_t, Flight>::iterator it, Reason reason,
                  const std::string& what) {
    out[it->second.index] = EvaluationError(reason, coalitions[it->second.index], what);
    return in_flight.erase(it);
  };
  auto fail_all = [&](Reason reason, const std::string& what) {
    for (auto it = in_flight.begin(); it != in_flight.end();) it = fail(it, reason, what);
  };
  // One restart per failure; requests already retried once fail for good.
  auto recover = [&](const std::string& what) {
    try {
      transport_->restart();
    } catch (const std::exception& e) {
      fail_all(Reason::kTransport, what + "; restart failed: " + e.what());
      return;
    }
    for (auto it = in_flight.begin(); it != in_flight.end();) {
      if (it->second.retried) {
        it = fail(it, Reason::kTransport, what);
        continue;
      }
      it->second.retried = true;
      it->second.deadline = Clock::now() + timeout_;
      ++it;
    }
    for (auto& [id, flight] : in_flight) {
      try {
        transport_->send(flight.line);
        ++requests_sent_;
      } catch (const TransportFailure& e) {
        fail_all(Reason::kTransport, what + "; resend failed: " + e.what());
        return;
      }
    }
  };

  std::size_t next = 0;
  while (next < coalitions.size() || !in_flight.empty()) {
    while (in_flight.size() < static_cast<std::size_t>(parallelism) && next < coalitions.size()) {
      const std::uint64_t id = next_id_++;
      const std::string line = encode_request(request_for(id, coalitions[next]));
      in_flight.emplace(id, Flight{next, line, false, Clock::now() + timeout_});
      ++next;
      try {
        transport_->send(line);
        ++requests_sent_;
      } catch (const TransportFailure& e) {
        recover(e.what());
      }
    }
    if (in_flight.empty()) continue;

    auto earliest = Clock::time_point::max();
    for (const auto& [id, f] : in_flight) earliest = std::min(earliest, f.deadline);
    const auto wait = std::max(std::chrono::milliseconds(0),
                               std::chrono::duration_cast<std::chrono::milliseconds>(
                                   earliest - Clock::now()));
    std::optional<std::string> line;
    try {
      line = transport_->receive(wait);
    } catch (const TransportFailure& e) {
      recover(e.what());
      continue;
    }
    if (!line) {
      const auto now = Clock::now();
      for (auto it = in_flight.begin(); it != in_flight.end();) {
        if (it->second.deadline <= now) {
          abandoned_.insert(it->first);
          it = fail(it, Reason::kTimeout,
                    "no reply within " + std::to_string(timeout_.count()) + " ms");
        } else {
          ++it;
        }
      }
      continue;
    }
    OracleResponse reply;
    try {
      reply = decode_response(*line);
    } catch (const FormatError& e) {
      // Without a usable id the reply cannot be matched; every outstanding
      // request is failed so none is answered by a wrong line.
      fail_all(Reason::kMalformed, e.what());
      continue;
    }
    if (abandoned_.erase(reply.id) > 0) continue;  // late reply after a timeout
    auto it = in_flight.find(reply.id);
    if (it == in_flight.end()) {
      fail_all(Reason::kIdMismatch, "reply id " + std::to_string(reply.id) +
                                        " matches no outstanding request");
      continue;
    }
    if (!(reply.utility >= u_min_ && reply.utility <= u_max_)) {
      fail(it, Reason::kRange, "utility " + std::to_string(reply.utility) + " outside [" +
                                   std::to_string(u_min_) + ", " + std::to_string(u_max_) + "]");
      continue;
    }
    out[it->second.index] = reply.utility;
    in_flight.erase(it);
  }

  std::vector<EvalOutcome> result;
  result.reserve(out.size());
  for (auto& o : out) result.push_back(std::move(*o));
  return result;
}

// --- EvalCache ----------------------------------------------------------------

EvalCache::EvalCache(std::string fingerprint) : fingerprint_(std::move(fingerprint)) {}

std::optional<double> EvalCache::lookup(const CoalitionMask& coalition) const {
  std::shared_lock lock(mutex_);
  const auto it = values_.find(coalition.hex_key());
  if (it == values_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

double EvalCache::get_or_compute(const CoalitionMask& coalition,
                                 const std::function<double()>& compute) {
  const std::string key = coalition.hex_key();
  std::promise<double> promise;
  std::shared_future<double> shared;
  {
    std::unique_lock lock(mutex_);
    if (const auto it = values_.find(key); it != values_.end()) {
      ++hits_;
      return it->second;
    }
    if (const auto it = pending_.find(key); it != pending_.end()) {
      shared = it->second;
    } else {
      ++misses_;
      pending_.emplace(key, promise.get_future().share());
    }
  }
  if (shared.valid()) {
    ++hits_;
    return shared.get();
  }
  try {
    const double value = compute();
    store(key, value);
    {
      std::unique_lock lock(mutex_);
      pending_.erase(key);
    }
    promise.set_value(value);
    return value;
  } catch (...) {
    {
      std::unique_lock lock(mutex_);
      pending_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

void EvalCache::insert(const CoalitionMask& coalition, double utility) {
  store(coalition.hex_key(), utility);
}

void EvalCache::store(const std::string& key, double utility) {
  {
    std::unique_lock lock(mutex_);
    if (!values_.emplace(key, utility).second) return;
  }
  std::lock_guard journal_lock(journal_mutex_);
  if (journal_.is_open()) {
    journal_ << json{{"key", key}, {"utility", utility}, {"fingerprint", fingerprint_}}.dump()
             << '\n';
    journal_.flush();
  }
}

void EvalCache::attach_journal(const std::filesystem::path& path) {
  std::lock_guard journal_lock(journal_mutex_);
  bool needs_newline = false;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(-1, std::ios::end);
    needs_newline = in.get() != '\n';  // torn final line from a crash
  }
  journal_.close();
  journal_.open(path, std::ios::app);
  if (!journal_) throw FormatError("cannot open cache journal " + path.string());
  if (needs_newline) journal_ << '\n';
}

std::size_t EvalCache::size() const {
  std::shared_lock lock(mutex_);
  return values_.size();
}

std::map<std::string, double> EvalCache::snapshot() const {
  std::shared_lock lock(mutex_);
  return {values_.begin(), values_.end()};
}

void persist_cache(const EvalCache& cache, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    for (const auto& [key, utility] : cache.snapshot()) {
      out << json{{"key", key}, {"utility", utility}, {"fingerprint", cache.fingerprint()}}.dump()
          << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

std::shared_ptr<EvalCache> load_cache(const std::filesystem::path& path,
                                      const std::string& fingerprint) {
  auto cache = std::make_shared<EvalCache>(fingerprint);
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json doc = json::parse(line);
      const std::string key = doc.at("key").get<std::string>();
      const json& u = doc.at("utility");
      const std::string fp = doc.at("fingerprint").get<std::string>();
      if (!u.is_number() || key.empty() || key.size() % 16 != 0 ||
          key.find_first_not_of("0123456789abcdef") != std::string::npos) {
        ++cache->corrupt_lines_;
        continue;
      }
      if (fp != fingerprint) {
        ++cache->foreign_lines_;
        continue;
      }
      cache->values_.emplace(key, u.get<double>());
    } catch (const json::exception&) {
      ++cache->corrupt_lines_;
    }
  }
  return cache;
}

// --- Oracles ------------------------------------------------------------------

CachedOracle::CachedOracle(const UtilityOracle& inner, std::shared_ptr<EvalCache> cache)
    : UtilityOracle(inner.n(), inner.u_min(), inner.u_max()),
      inner_(inner),
      cache_(std::move(cache)) {
  if (!cache_) throw ConfigError("cached oracle needs a cache");
  if (cache_->fingerprint() != inner.fingerprint()) {
    throw ConfigError("cache fingerprint " + cache_->fingerprint() +
                      " does not match game fingerprint " + inner.fingerprint());
  }
}

double CachedOracle::evaluate(const CoalitionMask& s) const {
  return cache_->get_or_compute(s, [&] {
    ++computed_;
    return inner_.utility(s);
  });
}

ExternalOracle::ExternalOracle(std::unique_ptr<OracleClient> client, double u_min, double u_max,
                               std::string identity)
    : UtilityOracle(client ? client->n() : 0, u_min, u_max),
      client_(std::move(client)),
      identity_(std::move(identity)) {}

std::string ExternalOracle::fingerprint() const {
  return fingerprint_of("external:" + identity_ + ":n=" + std::to_string(n()));
}

double ExternalOracle::evaluate(const CoalitionMask& s) const { return client_->evaluate(s); }

BatchResult evaluate_batch(std::span<const CoalitionMask> coalitions, OracleClient& client,
                           EvalCache& cache, int parallelism) {
  BatchResult result;
  result.values.resize(coalitions.size());
  std::map<std::string, std::size_t> first_index;
  std::vector<CoalitionMask> todo;
  std::vector<std::size_t> todo_index;
  for (std::size_t i = 0; i < coalitions.size(); ++i) {
    if (coalitions[i].n() != client.n()) {
      throw ConfigError("batch coalition " + std::to_string(i) + " has wrong width");
    }
    const std::string key = coalitions[i].hex_key();
    if (!first_index.emplace(key, i).second) continue;
    if (!cache.lookup(coalitions[i])) {
      todo.push_back(coalitions[i]);
      todo_index.push_back(i);
    }
  }
  const auto outcomes = client.evaluate_many(todo, parallelism);
  result.oracle_calls = todo.size();
  std::set<std::string> failed;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (const auto* u = std::get_if<double>(&outcomes[k])) {
      cache.insert(todo[k], *u);
    } else {
      const auto& err = std::get<EvaluationError>(outcomes[k]);
      failed.insert(todo[k].hex_key());
      result.failures.push_back(
          BatchFailure{todo_index[k], todo[k], to_string(err.reason()), err.what()});
    }
  }
  const auto known = cache.snapshot();
  for (std::size_t i = 0; i < coalitions.size(); ++i) {
    const std::string key = coalitions[i].hex_key();
    if (failed.count(key)) continue;
    result.values[i] = known.at(key);
  }
  return result;
}

OracleStack::OracleStack(const GameSpec& spec, const std::string& cache_path) {
  spec.validate();
  std::string journal = cache_path;
  if (spec.family == GameFamily::kExternal) {
    const auto& ext = std::get<ExternalParams>(spec.params);
    std::unique_ptr<Transport> transport;
    std::string identity;
    if (!ext.exchange_directory.empty()) {
      transport = std::make_unique<DirectoryTransport>(ext.exchange_directory);
      identity = "dir:" + ext.exchange_directory;
    } else {
      transport = std::make_unique<SubprocessTransport>(ext.command);
      identity = "cmd:" + ext.command;
    }
    const auto [lo, hi] = spec.range.value_or(std::make_pair(0.0, 1.0));
    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(std::max(1.0, ext.timeout_seconds * 1000.0)));
    base_ = std::make_unique<ExternalOracle>(
        std::make_unique<OracleClient>(std::move(transport), spec.n, lo, hi, timeout), lo, hi,
        identity);
    if (journal.empty()) journal = ext.cache_path;
  } else {
    base_ = make_builtin_oracle(spec);
  }
  if (!journal.empty()) {
    cache_ = load_cache(journal, base_->fingerprint());
    cache_->attach_journal(journal);
    cached_ = std::make_unique<CachedOracle>(*base_, cache_);
  }
}

}  // namespace cokv
