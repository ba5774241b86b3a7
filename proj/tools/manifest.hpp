#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace conglude::cli {

/// Record of one command invocation, written next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(const std::filesystem::path& p) { config_ = p; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_threads(std::size_t n) { threads_ = n; }
  void add_input(const std::filesystem::path& p) { inputs_.push_back(p); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p); }
  const std::vector<std::filesystem::path>& outputs() const { return outputs_; }

  // Closes the current phase (if any) and starts timing `name`.
  void phase(const std::string& name);

  std::string to_json() const;
  // Checks that every referenced file exists, then writes via a temporary
  // file and rename.
  void write(const std::filesystem::path& path);

 private:
  using Clock = std::chrono::steady_clock;
  void close_phase();

  std::string command_;
  std::vector<std::string> argv_;
  std::optional<std::filesystem::path> config_;
  std::uint64_t seed_ = 0;
  std::size_t threads_ = 1;
  std::vector<std::filesystem::path> inputs_, outputs_;
  std::vector<std::pair<std::string, double>> timings_;
  std::string open_phase_;
  Clock::time_point phase_start_{};
};

std::string build_tag();

}  // namespace conglude::cli
