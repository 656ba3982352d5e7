// Regenerates the eviction regression corpus in tests/data:
//   make_corpus <dir>
// writes corpus.cokvt, corpus_plan.csv and the expected evict.json/evict.csv.

#include <iostream>

#include "cokv/export.hpp"
#include "cokv/harness.hpp"
#include "cokv/tensor_io.hpp"
#include "tensor_helpers.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_corpus <dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::vector<cokv::HeadTensorBundle> heads;
  for (std::uint64_t h = 0; h < 4; ++h) heads.push_back(cokv::testing::random_bundle(1000 + h, 24, 4, 8));
  cokv::write_tensor_file(dir / "corpus.cokvt", heads);
  cokv::write_text(dir / "corpus_plan.csv",
                   "player_index,label,nsv,c\n0,h0,0,4\n1,h1,0.3,9\n2,h2,0.7,15\n3,h3,1,24\n");
  const auto sizes = cokv::read_plan_cache_sizes(dir / "corpus_plan.csv");
  cokv::cmd_evict(heads, sizes, cokv::PoolingConfig{}, dir / "expected");
  return 0;
}
