#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace latentlens::cli {

struct StageRecord {
  std::string status;  ///< "complete" or "failed"
  std::string digest;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;  ///< paths relative to the output directory
  std::string started;
  std::string finished;
  std::string message;
};

/// run_manifest.json in the output directory. Saved atomically after every
/// stage.
class RunManifest {
 public:
  static constexpr const char* kFileName = "run_manifest.json";

  /// Reads the manifest in `dir`, or starts an empty one if there is none.
  static RunManifest load(const std::filesystem::path& dir);

  /// True when `stage` completed with this digest and seed and every
  /// listed output still exists.
  bool up_to_date(const std::string& stage, const std::string& digest, std::uint64_t seed) const;

  void record(const std::string& stage, StageRecord record);
  void save() const;

  const std::map<std::string, StageRecord>& stages() const noexcept { return stages_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::string tool_version;
  std::string config_digest;
  std::uint64_t master_seed = 0;

 private:
  std::filesystem::path dir_;
  std::map<std::string, StageRecord> stages_;
};

/// Current UTC time as an ISO-8601 string.
std::string utc_timestamp();

}  // namespace latentlens::cli
