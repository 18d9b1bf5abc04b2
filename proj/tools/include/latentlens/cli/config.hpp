#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <latentlens/error.hpp>
#include <latentlens/flow.hpp>
#include <latentlens/gmm.hpp>
#include <latentlens/mlp.hpp>
#include <latentlens/pool.hpp>

namespace latentlens::cli {

/// Bad or unreadable configuration; `key` is the dotted path of the
/// offending entry when there is one.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key.empty() ? "config: " + what : "config: " + key + ": " + what),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct MixtureSpec {
  std::string kind = "sphere";  ///< "sphere" or "explicit"
  int classes = 5;
  int dim = 8;
  double radius = 2.5;
  std::uint64_t seed = 42;
  std::vector<Component> components;  ///< explicit mixtures only
};

struct ScheduleSpec {
  std::string form = "linear";  ///< "linear" or "constant"
  double beta0 = 0.1;
  double beta1 = 20.0;
  double beta = 1.0;  ///< constant form only
  double horizon = 1.0;
};

struct PoolSpec {
  std::size_t size = 20000;
  int levels = 10;
  double test_fraction = 0.2;
  Sampler sampler = Sampler::ddim;
  std::uint64_t noise_stream = 0;
};

struct PredictSpec {
  std::size_t fresh = 5100;
  int bins = 10;
};

struct StructureSpec {
  double test_fraction = 0.2;
  std::size_t silhouette_limit = 4000;
};

struct CondGenSpec {
  std::size_t per_class = 200;
  std::size_t max_draws = 100000;
  std::optional<double> threshold;  ///< unset: per-class level-1/level-2 boundary
};

struct VerifySpec {
  std::size_t points = 100;
  int steps = 512;
  double tolerance = 1e-3;
  std::size_t transport_samples = 500;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 42;
  MixtureSpec mixture;
  ScheduleSpec schedule;
  IntegratorSpec integrator;
  PoolSpec pool;
  MlpHyper mlp;
  PredictSpec predict;
  StructureSpec structure;
  CondGenSpec condgen;
  VerifySpec verify;
};

/// Parses TOML text. Missing keys take defaults; unknown keys, wrong types
/// and out-of-range values throw ConfigError.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully populated TOML re-emitted in a fixed layout. Equivalent configs
/// produce identical text.
std::string canonical_text(const ExperimentConfig& config);
/// FNV-1a 64 of canonical_text, as 16 lowercase hex digits.
std::string config_digest(const ExperimentConfig& config);
std::uint64_t fnv1a64(std::string_view bytes);

MixtureModel build_mixture(const MixtureSpec& spec);
NoiseSchedule build_schedule(const ScheduleSpec& spec);

}  // namespace latentlens::cli
