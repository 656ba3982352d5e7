#include "cokv/table_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cokv {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'K', 'V', 'T', 'B', 'L', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const char* data, std::size_t size) { bytes_.append(data, size); }
  const std::string& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string raw(std::size_t size) {
    need(size);
    std::string out = bytes_.substr(pos_, size);
    pos_ += size;
    return out;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " (byte offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t size) const {
    if (bytes_.size() - pos_ < size) fail("truncated table file");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_table(const ContributionTable& table, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kTableFormatVersion);
  w.u32(static_cast<std::uint32_t>(table.n()));
  std::uint32_t flags = 0;
  if (table.options().schedule == SliceSchedule::kIid) flags |= 1u;
  if (table.options().mirror_credit) flags |= 2u;
  w.u32(flags);
  w.u32(static_cast<std::uint32_t>(table.slices().size()));
  for (int j : table.slices().sizes()) w.u32(static_cast<std::uint32_t>(j));
  w.u64(table.seed());
  w.u64(table.samples_drawn());
  for (double s : table.sums()) w.f64(s);
  for (std::uint64_t c : table.counts()) w.u64(c);

  // Write-then-rename so an interrupted save never leaves a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ContributionTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open table file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) r.fail("bad magic");
  const std::uint32_t version = r.u32();
  if (version != kTableFormatVersion) {
    r.fail("unsupported table version " + std::to_string(version) + " (expected " +
           std::to_string(kTableFormatVersion) + ")");
  }
  const std::uint32_t n = r.u32();
  if (n == 0 || n > (1u << 16)) r.fail("implausible player count " + std::to_string(n));
  const std::uint32_t flags = r.u32();
  if (flags & ~3u) r.fail("unknown flags");
  const std::uint32_t h = r.u32();
  if (h == 0 || h > n) r.fail("implausible slice count " + std::to_string(h));
  std::vector<int> sizes(h);
  for (auto& j : sizes) j = static_cast<int>(r.u32());
  SamplingOptions options;
  options.schedule = (flags & 1u) ? SliceSchedule::kIid : SliceSchedule::kRoundRobin;
  options.mirror_credit = (flags & 2u) != 0;
  const std::uint64_t seed = r.u64();
  const std::uint64_t drawn = r.u64();
  const std::size_t cells = static_cast<std::size_t>(n) * n;
  std::vector<double> sums(cells);
  for (auto& s : sums) s = r.f64();
  std::vector<std::uint64_t> counts(cells);
  for (auto& c : counts) c = r.u64();
  if (!r.at_end()) r.fail("trailing bytes after table payload");

  try {
    return ContributionTable::FromRaw(static_cast<int>(n), SliceSet(sizes, static_cast<int>(n)),
                                      seed, options, drawn, std::move(sums), std::move(counts));
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ContributionTable load_table(const std::filesystem::path& path, int expected_n,
                             const SliceSet& expected_slices) {
  ContributionTable t = load_table(path);
  if (t.n() != expected_n) {
    throw FormatError(path.string() + ": table has n=" + std::to_string(t.n()) +
                      ", expected n=" + std::to_string(expected_n));
  }
  if (!(t.slices() == expected_slices)) {
    throw FormatError(path.string() + ": table has slice set " + t.slices().to_string() +
                      ", expected " + expected_slices.to_string());
  }
  return t;
}

}  // namespace cokv
