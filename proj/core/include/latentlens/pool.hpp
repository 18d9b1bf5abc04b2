#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentlens/flow.hpp"
#include "latentlens/gmm.hpp"
#include "latentlens/rng.hpp"

namespace latentlens {

enum class Sampler { ddim, ddpm };
enum class Split { train, test };

std::string to_string(Sampler s);
Sampler parse_sampler(const std::string& text);

/// One seed with its generated sample and the classifier's verdict.
/// Levels are 1-based (1 = highest confidence); 0 means not stratified.
struct SeedRecord {
  std::int64_t index = 0;
  Vector seed;
  Vector sample;
  ClassPosterior posterior;
  int label = 0;
  double confidence = 0.0;
  int level = 0;
  Split split = Split::train;

  bool operator==(const SeedRecord&) const = default;
};

struct Provenance {
  std::uint64_t master_seed = 0;
  std::string config_digest;
  Sampler sampler = Sampler::ddim;
  std::string schedule;
  std::uint64_t noise_stream = 0;
  std::size_t excluded = 0;  ///< records dropped by the blow-up guard

  bool operator==(const Provenance&) const = default;
};

struct SeedPool {
  int dim = 0;
  int num_classes = 0;
  std::vector<SeedRecord> records;
  Provenance provenance;

  bool operator==(const SeedPool&) const = default;
};

/// Record counts keyed by (label, level).
std::map<std::pair<int, int>, std::size_t> pool_counts(const SeedPool& pool);
std::vector<std::size_t> label_counts(const SeedPool& pool);
int num_levels(const SeedPool& pool);

/// (argmax with lowest-index ties, top1 - top2).
std::pair<int, double> label_and_confidence(const ClassPosterior& p);

struct BuildOptions {
  std::uint64_t noise_stream = 0;  ///< salt for the DDPM injected noise
  std::string config_digest;
  std::size_t workers = 0;
};

/// Seeds come from substream(master_seed, i), so the pool does not depend
/// on the worker count. Records whose trajectory blows up are excluded and
/// counted in provenance.excluded.
SeedPool build_pool(const MixtureModel& m, const NoiseSchedule& s, std::size_t n,
                    Sampler sampler, IntegratorSpec spec, std::uint64_t master_seed,
                    const BuildOptions& options = {});

/// Uniform random subsample of each label down to the smallest label count.
SeedPool balance_pool(const SeedPool& pool, Rng& rng);

/// Per label: sort by confidence (descending), cut into `levels` bins with
/// the remainder spread one per bin from bin 1.
SeedPool stratify(const SeedPool& pool, int levels);

/// Stratified per (label, level) cell: round(test_fraction * cell) records
/// go to the test split.
SeedPool split_train_test(const SeedPool& pool, double test_fraction, Rng& rng);

/// Selects records matching level (0 = any) and split.
std::vector<SeedRecord> select_records(const SeedPool& pool, int level,
                                       std::optional<Split> split = std::nullopt);

/// Per-label confidence halfway between the lowest level-1 record and the
/// highest level-2 record.
std::vector<double> level_boundary(const SeedPool& pool, int upper_level = 1);

void write_pool_csv(const SeedPool& pool, std::ostream& out);
SeedPool read_pool_csv(std::istream& in);

/// Writes the CSV at `path` and the JSON manifest at manifest_path(path).
void save_pool(const SeedPool& pool, const std::filesystem::path& path);
SeedPool load_pool(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& pool_path);

}  // namespace latentlens
