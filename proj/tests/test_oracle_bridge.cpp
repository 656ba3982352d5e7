#include "doctest.h"

#include <fstream>
#include <set>
#include <thread>

#include "cokv/oracle_bridge.hpp"
#include "cokv/ssv.hpp"
#include "helpers.hpp"

using namespace cokv;
using namespace std::chrono_literals;
using Reason = EvaluationError::Reason;

namespace {

std::string fake(const std::string& args) {
  return std::string("'") + COKV_FAKE_ORACLE + "' --weights 1,2,3,4 " + args;
}

std::unique_ptr<OracleClient> client(const std::string& args,
                                     std::chrono::milliseconds timeout = 5000ms) {
  return std::make_unique<OracleClient>(std::make_unique<SubprocessTransport>(fake(args)), 4, 0.0,
                                        10.0, timeout);
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

CoalitionMask of(std::vector<int> members) { return CoalitionMask::FromMembers(4, members); }

Reason failure_reason(OracleClient& c, const CoalitionMask& s) {
  try {
    c.evaluate(s);
  } catch (const EvaluationError& e) {
    CHECK(e.coalition() == s);
    return e.reason();
  }
  FAIL("expected an evaluation error");
  return Reason::kTransport;
}

}  // namespace

TEST_SUITE("oracle_bridge") {

TEST_CASE("wire format") {
  const auto req = request_for(7, of({0, 2}));
  CHECK(req.masked_players == std::vector<int>{1, 3});
  CHECK(encode_request(req) == R"({"id":7,"masked_players":[1,3],"n":4})");
  const auto back = decode_request(encode_request(req));
  CHECK(coalition_of(back) == of({0, 2}));
  const auto resp = decode_response(R"({"id":3,"utility":0.25,"diagnostics":{"ms":12}})");
  CHECK(resp.id == 3);
  CHECK(resp.utility == 0.25);
  CHECK(resp.diagnostics_json == R"({"ms":12})");
  CHECK(decode_response(encode_response(resp)).utility == 0.25);
  CHECK_THROWS_AS(decode_response("{}"), FormatError);
  CHECK_THROWS_AS(decode_response("nonsense"), FormatError);
  CHECK_THROWS_AS(decode_request(R"({"id":1,"n":2,"masked_players":[5]})"), FormatError);
}

TEST_CASE("subprocess evaluation") {
  auto c = client("");
  CHECK(c->evaluate(CoalitionMask::Full(4)) == 10.0);  // nothing masked
  CHECK(c->evaluate(CoalitionMask(4)) == 0.0);         // everything masked
  CHECK(c->evaluate(of({1, 3})) == 6.0);
  std::vector<CoalitionMask> batch;
  for (std::uint64_t bits = 0; bits < 16; ++bits) batch.push_back(CoalitionMask::FromBits(4, bits));
  const auto out = c->evaluate_many(batch, 3);
  for (std::uint64_t bits = 0; bits < 16; ++bits) {
    double expect = 0;
    for (int i = 0; i < 4; ++i) expect += (bits >> i & 1) ? i + 1 : 0;
    CHECK(std::get<double>(out[bits]) == expect);
  }
  CHECK(c->requests_sent() == 19);
}

TEST_CASE("misbehaving evaluators yield typed errors") {
  { auto c = client("--mode garbage"); CHECK(failure_reason(*c, of({0})) == Reason::kMalformed); }
  { auto c = client("--mode wrong-id"); CHECK(failure_reason(*c, of({0})) == Reason::kIdMismatch); }
  { auto c = client("--mode out-of-range"); CHECK(failure_reason(*c, of({0})) == Reason::kRange); }
  { auto c = client("--mode hang", 200ms); CHECK(failure_reason(*c, of({0})) == Reason::kTimeout); }
  { auto c = client("--mode crash-after:0"); CHECK(failure_reason(*c, of({0})) == Reason::kTransport); }
  {
    auto c = client("", 5000ms);
    c.reset(new OracleClient(std::make_unique<SubprocessTransport>("exit 0"), 4, 0, 10, 1000ms));
    CHECK(failure_reason(*c, of({0})) == Reason::kTransport);
  }
}

TEST_CASE("late replies after a timeout are not matched to later requests") {
  auto c = client("--mode slow:300", 100ms);
  CHECK(failure_reason(*c, of({0})) == Reason::kTimeout);
  std::this_thread::sleep_for(400ms);
  // The stale reply for the first request is dropped; this one gets its own.
  auto c2 = std::make_unique<OracleClient>(std::make_unique<SubprocessTransport>(fake("--mode slow:300")),
                                           4, 0.0, 10.0, 2000ms);
  CHECK(c2->evaluate(of({1})) == 2.0);
  CHECK(c->evaluate_many(std::vector<CoalitionMask>{of({2})}, 1).size() == 1);
}

TEST_CASE("one retry after the evaluator crashes") {
  testing::TempDir dir("crash");
  const std::string marker = (dir / "marker").string();
  auto c = client("--mode crash-once:2:'" + marker + "'");
  std::vector<CoalitionMask> batch{of({0}), of({1}), of({2}), of({3}), of({0, 1})};
  const auto out = c->evaluate_many(batch, 2);
  const double expect[] = {1, 2, 3, 4, 3};
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::get<double>(out[i]) == expect[i]);
  CHECK(std::filesystem::exists(marker));
}

TEST_CASE("directory exchange") {
  testing::TempDir dir("xchg");
  const std::string cmd = "'" + std::string(COKV_FAKE_ORACLE) + "' --weights 1,2,3,4 --dir '" +
                          dir.path().string() + "' &";
  REQUIRE(std::system(cmd.c_str()) == 0);
  OracleClient c(std::make_unique<DirectoryTransport>(dir.path(), 5ms), 4, 0, 10, 5000ms);
  std::vector<CoalitionMask> batch{of({0}), of({1, 2}), CoalitionMask::Full(4)};
  const auto out = c.evaluate_many(batch, 3);
  std::ofstream(dir / "stop") << "\n";
  CHECK(std::get<double>(out[0]) == 1.0);
  CHECK(std::get<double>(out[1]) == 5.0);
  CHECK(std::get<double>(out[2]) == 10.0);
  std::this_thread::sleep_for(50ms);
}

TEST_CASE("cache deduplicates evaluations") {
  testing::TempDir dir("cache");
  const auto log = dir / "calls.log";
  auto c = client("--log '" + log.string() + "'");
  EvalCache cache("fp");

  std::vector<CoalitionMask> same(5, of({0, 2}));
  auto r = evaluate_batch(same, *c, cache, 2);
  CHECK(r.oracle_calls == 1);
  for (const auto& v : r.values) CHECK(*v == 4.0);

  std::vector<CoalitionMask> pair{of({0}), of({1, 2, 3})};
  r = evaluate_batch(pair, *c, cache, 2);
  CHECK(r.oracle_calls == 2);
  CHECK(*r.values[0] - *r.values[1] == 1.0 - 9.0);

  r = evaluate_batch(same, *c, cache, 2);  // fully cached
  CHECK(r.oracle_calls == 0);
  CHECK(lines_of(log).size() == 3);
}

TEST_CASE("batch failures are reported, never filled in") {
  EvalCache cache("fp");
  auto c = client("--mode out-of-range");
  std::vector<CoalitionMask> batch{of({0}), of({0}), of({1})};
  const auto r = evaluate_batch(batch, *c, cache, 2);
  CHECK(r.failures.size() == 2);
  CHECK(r.failures[0].index == 0);
  CHECK(r.failures[0].reason == "range violation");
  for (const auto& v : r.values) CHECK_FALSE(v.has_value());
  CHECK(cache.size() == 0);
}

TEST_CASE("cached oracle serves repeats from the cache") {
  AdditiveGame g({1, 2, 3, 4});
  auto cache = std::make_shared<EvalCache>(g.fingerprint());
  CachedOracle cached(g, cache);
  CHECK(cached.utility(of({0, 1})) == 3.0);
  CHECK(cached.utility(of({0, 1})) == 3.0);
  CHECK(cached.evaluations() == 1);
  CHECK(g.evaluations() == 1);
  CHECK_THROWS_AS(CachedOracle(g, std::make_shared<EvalCache>("other")), ConfigError);
}

TEST_CASE("concurrent requests for one coalition compute once") {
  EvalCache cache("fp");
  std::atomic<int> computed{0};
  std::vector<std::thread> threads;
  std::vector<double> got(8);
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      got[t] = cache.get_or_compute(of({3}), [&] {
        ++computed;
        std::this_thread::sleep_for(50ms);
        return 4.0;
      });
    });
  }
  for (auto& t : threads) t.join();
  CHECK(computed == 1);
  for (double v : got) CHECK(v == 4.0);

  int attempts = 0;
  auto boom = [&]() -> double {
    ++attempts;
    throw EvaluationError(Reason::kTimeout, of({1}), "slow");
  };
  CHECK_THROWS_AS(cache.get_or_compute(of({1}), boom), EvaluationError);
  CHECK_THROWS_AS(cache.get_or_compute(of({1}), boom), EvaluationError);
  CHECK(attempts == 2);
}

TEST_CASE("journal round trip, corruption and foreign entries") {
  testing::TempDir dir("journal");
  const auto path = dir / "cache.jsonl";
  {
    EvalCache cache("aaaa");
    cache.attach_journal(path);
    cache.insert(of({0}), 0.1);
    cache.insert(of({1, 2}), 1.0 / 3.0);
    cache.insert(CoalitionMask::Full(4), 10.0);
  }
  auto loaded = load_cache(path, "aaaa");
  CHECK(loaded->size() == 3);
  CHECK(*loaded->lookup(of({1, 2})) == 1.0 / 3.0);

  persist_cache(*loaded, dir / "copy.jsonl");
  CHECK(load_cache(dir / "copy.jsonl", "aaaa")->snapshot() == loaded->snapshot());

  {
    std::ofstream out(path, std::ios::app);
    out << "{\"key\":\"zz\",\"utility\":1,\"fingerprint\":\"aaaa\"}\n";
    out << "{\"key\":\"0000000000000008\",\"utility\":4,\"fingerprint\":\"bbbb\"}\n";
    out << "{\"key\":\"00000000000000";  // torn by a crash
  }
  auto damaged = load_cache(path, "aaaa");
  CHECK(damaged->size() == 3);
  CHECK(damaged->corrupt_lines() == 2);
  CHECK(damaged->foreign_lines() == 1);

  damaged->attach_journal(path);
  damaged->insert(of({3}), 4.0);
  auto again = load_cache(path, "aaaa");
  CHECK(again->size() == 4);
  CHECK(again->corrupt_lines() == 2);
  CHECK(load_cache(dir / "missing.jsonl", "aaaa")->size() == 0);
}

TEST_CASE("resumed run does not re-evaluate journaled coalitions") {
  testing::TempDir dir("resume");
  const auto log = dir / "calls.log";
  const auto journal = dir / "cache.jsonl";
  GameSpec spec = parse_game_spec(
      R"({"family":"external","n":4,"range":[0,10],"params":{"command":")" +
      fake("--log '" + log.string() + "'") + R"("}})");
  const SliceSet h({1, 2}, 4);
  ContributionTable first(4, h, 3);
  {
    OracleStack stack(spec, journal.string());
    run_samples(stack.oracle(), first, 10);  // then the process "dies"
  }
  const auto before = lines_of(log).size();
  CHECK(before > 0);
  ContributionTable resumed(4, h, 3);
  std::uint64_t second_calls = 0;
  {
    OracleStack stack(spec, journal.string());
    run_samples(stack.oracle(), resumed, 40);
    second_calls = stack.oracle().evaluations();
  }
  const auto calls = lines_of(log);
  CHECK(calls.size() == before + second_calls);
  CHECK(std::set<std::string>(calls.begin(), calls.end()).size() == calls.size());

  ContributionTable direct(4, h, 3);
  run_samples(AdditiveGame({1, 2, 3, 4}), direct, 40);
  CHECK(resumed == direct);
}

TEST_CASE("a shared cache saves work across estimator runs") {
  AdditiveGame g({0.5, 1, 1.5, 2, 2.5, 3});
  auto cache = std::make_shared<EvalCache>(g.fingerprint());
  CachedOracle cached(g, cache);
  const auto run1 = estimate_ssv(cached, SliceSet::All(6), 300, 1);
  const auto run2 = estimate_ssv(cached, SliceSet::All(6), 300, 2);
  CHECK(run1.oracle_evaluations > 0);
  CHECK(run2.oracle_evaluations < run1.oracle_evaluations);
}

}
