#include "manifest.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "conglude/errors.hpp"

#ifndef CONGLUDE_BUILD_TAG
#define CONGLUDE_BUILD_TAG "unknown"
#endif

namespace conglude::cli {

std::string build_tag() { return CONGLUDE_BUILD_TAG; }

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)) {}

void RunManifest::close_phase() {
  if (open_phase_.empty()) return;
  const double secs = std::chrono::duration<double>(Clock::now() - phase_start_).count();
  timings_.emplace_back(open_phase_, secs);
  open_phase_.clear();
}

void RunManifest::phase(const std::string& name) {
  close_phase();
  open_phase_ = name;
  phase_start_ = Clock::now();
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["cwd"] = std::filesystem::current_path().string();
  j["config"] = config_ ? nlohmann::ordered_json(config_->string()) : nlohmann::ordered_json(nullptr);
  auto paths = [](const std::vector<std::filesystem::path>& v) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& p : v) a.push_back(p.string());
    return a;
  };
  j["inputs"] = paths(inputs_);
  j["outputs"] = paths(outputs_);
  j["seed"] = seed_;
  j["threads"] = threads_;
  j["build"] = build_tag();
  auto t = nlohmann::ordered_json::object();
  for (const auto& [name, secs] : timings_) t[name] = secs;
  j["timings_s"] = t;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) {
  close_phase();
  for (const auto* list : {&inputs_, &outputs_}) {
    for (const auto& p : *list) {
      if (!std::filesystem::exists(p)) throw FormatError("manifest references missing file " + p.string());
    }
  }
  if (config_ && !std::filesystem::exists(*config_)) throw FormatError("manifest references missing config");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write manifest " + tmp.string());
    out << to_json();
    if (!out.flush()) throw FormatError("cannot write manifest " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace conglude::cli
