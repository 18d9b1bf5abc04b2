#include "latentlens/cli/manifest.hpp"

#include <chrono>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <latentlens/error.hpp>

#include "latentlens/cli/artifacts.hpp"

namespace latentlens::cli {

using nlohmann::json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

RunManifest RunManifest::load(const std::filesystem::path& dir) {
  RunManifest m;
  m.dir_ = dir;
  const auto path = dir / kFileName;
  std::ifstream in(path);
  if (!in) return m;
  json j;
  try {
    in >> j;
    m.tool_version = j.value("tool_version", "");
    m.config_digest = j.value("config_digest", "");
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    for (const auto& [name, s] : j.at("stages").items()) {
      StageRecord r;
      r.status = s.at("status").get<std::string>();
      r.digest = s.at("config_digest").get<std::string>();
      r.seed = s.at("master_seed").get<std::uint64_t>();
      r.outputs = s.at("outputs").get<std::vector<std::string>>();
      r.started = s.value("started", "");
      r.finished = s.value("finished", "");
      r.message = s.value("message", "");
      m.stages_.emplace(name, std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(fmt::format("run manifest '{}' is unreadable: {}", path.string(), e.what()));
  }
  return m;
}

bool RunManifest::up_to_date(const std::string& stage, const std::string& digest,
                             std::uint64_t seed) const {
  const auto it = stages_.find(stage);
  if (it == stages_.end()) return false;
  const StageRecord& r = it->second;
  if (r.status != "complete" || r.digest != digest || r.seed != seed) return false;
  for (const auto& out : r.outputs) {
    if (!std::filesystem::exists(dir_ / out)) return false;
  }
  return true;
}

void RunManifest::record(const std::string& stage, StageRecord record) {
  stages_[stage] = std::move(record);
}

void RunManifest::save() const {
  json stages = json::object();
  for (const auto& [name, r] : stages_) {
    stages[name] = {{"status", r.status},     {"config_digest", r.digest},
                    {"master_seed", r.seed},  {"outputs", r.outputs},
                    {"started", r.started},   {"finished", r.finished},
                    {"message", r.message}};
  }
  json j = {{"tool_version", tool_version},
            {"config_digest", config_digest},
            {"master_seed", master_seed},
            {"updated", utc_timestamp()},
            {"stages", stages}};
  write_file_atomic(dir_ / kFileName, j.dump(2) + "\n");
}

}  // namespace latentlens::cli
