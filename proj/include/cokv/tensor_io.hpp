#pragma once

#include <filesystem>
#include <vector>

#include "cokv/eviction.hpp"

namespace cokv {

// Tensor file: one UTF-8 JSON header line
//   {"magic":"cokvtensor","version":1,"m":M,"s":S,"d_h":D,"heads":H}
// followed by H head records, each the little-endian float32 row-major
// payloads q_win, k_out, v_out, k_win, v_win. "heads" defaults to 1.
inline constexpr int kTensorFormatVersion = 1;

void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<HeadTensorBundle>& heads);

// Errors are FormatError with the byte offset of the problem.
std::vector<HeadTensorBundle> read_tensor_file(const std::filesystem::path& path);

}  // namespace cokv
