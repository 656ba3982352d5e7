#include "doctest.h"

#include <fstream>

#include "cokv/table_io.hpp"
#include "helpers.hpp"

using namespace cokv;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_SUITE("table_io") {

TEST_CASE("save then load is lossless") {
  testing::TempDir dir("tbl");
  RandomGame g(9, 5);
  for (SamplingOptions opt : {SamplingOptions{}, SamplingOptions{SliceSchedule::kIid, true}}) {
    ContributionTable t(9, SliceSet({2, 4, 7}, 9), 0xDEADBEEFCAFEull, opt);
    run_samples(g, t, 321);
    save_table(t, dir / "t.bin");
    const ContributionTable back = load_table(dir / "t.bin");
    CHECK(back == t);
    CHECK(load_table(dir / "t.bin", 9, SliceSet({2, 4, 7}, 9)) == t);
  }
}

TEST_CASE("mismatched expectations name expected and actual") {
  testing::TempDir dir("tbl");
  ContributionTable t(4, SliceSet({1, 2}, 4), 1);
  save_table(t, dir / "t.bin");
  try {
    load_table(dir / "t.bin", 5, SliceSet({1, 2}, 5));
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    const std::string what = e.what();
    CHECK(what.find("n=4") != std::string::npos);
    CHECK(what.find("n=5") != std::string::npos);
  }
  CHECK_THROWS_AS(load_table(dir / "t.bin", 4, SliceSet({1, 3}, 4)), FormatError);
}

TEST_CASE("corrupt files report byte offsets") {
  testing::TempDir dir("tbl");
  RandomGame g(4, 5);
  ContributionTable t(4, SliceSet({1, 2}, 4), 1);
  run_samples(g, t, 20);
  save_table(t, dir / "t.bin");
  const std::string good = slurp(dir / "t.bin");

  spit(dir / "bad.bin", "NOTATABLE" + good.substr(9));
  CHECK_THROWS_WITH_AS(load_table(dir / "bad.bin"), doctest::Contains("bad magic"), FormatError);

  spit(dir / "bad.bin", good.substr(0, good.size() - 3));
  CHECK_THROWS_WITH_AS(load_table(dir / "bad.bin"), doctest::Contains("byte offset"), FormatError);

  spit(dir / "bad.bin", good + "x");
  CHECK_THROWS_WITH_AS(load_table(dir / "bad.bin"), doctest::Contains("trailing"), FormatError);

  std::string bumped = good;
  bumped[8] = 9;  // version
  spit(dir / "bad.bin", bumped);
  CHECK_THROWS_WITH_AS(load_table(dir / "bad.bin"), doctest::Contains("version"), FormatError);

  CHECK_THROWS_AS(load_table(dir / "missing.bin"), FormatError);
}

TEST_CASE("resume from disk equals an uninterrupted run") {
  testing::TempDir dir("tbl");
  RandomGame g(6, 12);
  const SliceSet h({1, 3, 5}, 6);
  ContributionTable first(6, h, 99);
  run_samples(g, first, 400);
  save_table(first, dir / "t.bin");
  ContributionTable resumed = load_table(dir / "t.bin", 6, h);
  run_samples(g, resumed, 600);
  ContributionTable fresh(6, h, 99);
  run_samples(g, fresh, 1000);
  CHECK(resumed == fresh);
}

}
