#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "cokv/game.hpp"

namespace cokv::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cokv_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Additive game that throws once a call budget is spent. Used to simulate an
// interrupted run.
class FlakyAdditive final : public UtilityOracle {
 public:
  FlakyAdditive(std::vector<double> weights, std::uint64_t fail_after)
      : UtilityOracle(static_cast<int>(weights.size()), -1e9, 1e9),
        inner_(std::move(weights)),
        fail_after_(fail_after) {}
  std::string fingerprint() const override { return inner_.fingerprint(); }

 protected:
  double evaluate(const CoalitionMask& s) const override {
    if (served_++ >= fail_after_) {
      throw EvaluationError(EvaluationError::Reason::kTransport, s, "simulated crash");
    }
    return inner_.utility(s);
  }

 private:
  AdditiveGame inner_;
  std::uint64_t fail_after_;
  mutable std::atomic<std::uint64_t> served_{0};
};

}  // namespace cokv::testing
