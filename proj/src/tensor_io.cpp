#include "cokv/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "cokv/error.hpp"

namespace cokv {

using nlohmann::json;

namespace {

void append_matrix(std::string& out, const MatrixF& m) {
  for (float f : m.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<HeadTensorBundle>& heads) {
  if (heads.empty()) throw ConfigError("no heads to write");
  const auto& first = heads.front();
  for (const auto& h : heads) {
    h.validate();
    if (h.length() != first.length() || h.window() != first.window() ||
        h.head_dim() != first.head_dim()) {
      throw ConfigError("all heads in a tensor file must share m, s and d_h");
    }
  }
  std::string out = json{{"magic", "cokvtensor"},
                         {"version", kTensorFormatVersion},
                         {"m", first.length()},
                         {"s", first.window()},
                         {"d_h", first.head_dim()},
                         {"heads", heads.size()}}
                        .dump();
  out.push_back('\n');
  for (const auto& h : heads) {
    append_matrix(out, h.q_win);
    append_matrix(out, h.k_out);
    append_matrix(out, h.v_out);
    append_matrix(out, h.k_win);
    append_matrix(out, h.v_win);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<HeadTensorBundle> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open tensor file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto fail = [&](std::size_t offset, const std::string& what) -> FormatError {
    return FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
  };

  const std::size_t eol = bytes.find('\n');
  if (eol == std::string::npos) throw fail(0, "missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, eol));
  } catch (const json::exception& e) {
    throw fail(0, std::string("malformed header: ") + e.what());
  }
  int m = 0, s = 0, d = 0, count = 1;
  try {
    if (header.at("magic").get<std::string>() != "cokvtensor") throw fail(0, "bad magic");
    const int version = header.at("version").get<int>();
    if (version != kTensorFormatVersion) {
      throw fail(0, "unsupported version " + std::to_string(version));
    }
    m = header.at("m").get<int>();
    s = header.at("s").get<int>();
    d = header.at("d_h").get<int>();
    count = header.value("heads", 1);
  } catch (const json::exception& e) {
    throw fail(0, std::string("bad header field: ") + e.what());
  }
  if (!(m > s && s >= 0 && d >= 1 && count >= 1)) {
    throw fail(0, "header requires m > s >= 0, d_h >= 1, heads >= 1");
  }

  std::size_t pos = eol + 1;
  auto read_matrix = [&](int rows, const char* name) {
    const std::size_t need = static_cast<std::size_t>(rows) * d * 4;
    if (bytes.size() - pos < need) {
      throw fail(pos, std::string("truncated payload for ") + name + " (need " +
                          std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - pos) + ")");
    }
    std::vector<float> data(static_cast<std::size_t>(rows) * d);
    for (auto& v : data) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
      }
      v = std::bit_cast<float>(bits);
      pos += 4;
    }
    return MatrixF(rows, d, std::move(data));
  };

  std::vector<HeadTensorBundle> heads;
  for (int h = 0; h < count; ++h) {
    HeadTensorBundle b;
    b.q_win = read_matrix(s, "q_win");
    b.k_out = read_matrix(m - s, "k_out");
    b.v_out = read_matrix(m - s, "v_out");
    b.k_win = read_matrix(s, "k_win");
    b.v_win = read_matrix(s, "v_win");
    heads.push_back(std::move(b));
  }
  if (pos != bytes.size()) throw fail(pos, "trailing bytes after last head");
  return heads;
}

}  // namespace cokv
