#pragma once

#include <filesystem>
#include <optional>

#include "cokv/ssv.hpp"

namespace cokv {

// Binary little-endian table file:
//   "COKVTBL\0", u32 version, u32 n, u32 flags, u32 |H|, u32 sizes[|H|],
//   u64 seed, u64 samples_drawn, f64 sums[n*n], u64 counts[n*n]
// flags bit 0: i.i.d. slice schedule, bit 1: mirror credit.
inline constexpr std::uint32_t kTableFormatVersion = 1;

void save_table(const ContributionTable& table, const std::filesystem::path& path);

ContributionTable load_table(const std::filesystem::path& path);

// Also refuses a table whose n or slice set differs from the expected ones.
ContributionTable load_table(const std::filesystem::path& path, int expected_n,
                             const SliceSet& expected_slices);

}  // namespace cokv
