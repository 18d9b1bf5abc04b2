#include "latentlens/pool.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "latentlens/error.hpp"
#include "latentlens/parallel.hpp"

namespace latentlens {

std::string to_string(Sampler s) { return s == Sampler::ddim ? "ddim" : "ddpm"; }

Sampler parse_sampler(const std::string& text) {
  if (text == "ddim") return Sampler::ddim;
  if (text == "ddpm") return Sampler::ddpm;
  throw DomainError(fmt::format("unknown sampler '{}' (expected ddim or ddpm)", text));
}

std::pair<int, double> label_and_confidence(const ClassPosterior& p) {
  return {argmax(p), top_margin(p)};
}

std::map<std::pair<int, int>, std::size_t> pool_counts(const SeedPool& pool) {
  std::map<std::pair<int, int>, std::size_t> counts;
  for (const auto& r : pool.records) ++counts[{r.label, r.level}];
  return counts;
}

std::vector<std::size_t> label_counts(const SeedPool& pool) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(pool.num_classes, 0)), 0);
  for (const auto& r : pool.records) ++counts.at(static_cast<std::size_t>(r.label));
  return counts;
}

int num_levels(const SeedPool& pool) {
  int levels = 0;
  for (const auto& r : pool.records) levels = std::max(levels, r.level);
  return levels;
}

SeedPool build_pool(const MixtureModel& m, const NoiseSchedule& s, std::size_t n,
                    Sampler sampler, IntegratorSpec spec, std::uint64_t master_seed,
                    const BuildOptions& options) {
  if (n < 1) throw DomainError("build_pool: n must be >= 1");
  const ProbabilityFlow flow(m, s, spec);
  const auto dim = static_cast<Eigen::Index>(m.dim());

  std::vector<SeedRecord> slots(n);
  std::vector<char> ok(n, 0);
  parallel_for(
      n,
      [&](std::size_t i) {
        SeedRecord& r = slots[i];
        r.index = static_cast<std::int64_t>(i);
        Rng seed_rng = substream(master_seed, Stream::seed, i);
        r.seed = standard_normal(seed_rng, dim);
        try {
          if (sampler == Sampler::ddim) {
            r.sample = flow.generate(r.seed);
          } else {
            Rng noise = substream(master_seed, Stream::ddpm_noise, i, options.noise_stream);
            r.sample = flow.reverse_sde(r.seed, noise);
          }
        } catch (const TrajectoryError&) {
          return;
        }
        r.posterior = m.class_posterior(r.sample);
        std::tie(r.label, r.confidence) = label_and_confidence(r.posterior);
        ok[i] = 1;
      },
      options.workers);

  SeedPool pool;
  pool.dim = m.dim();
  pool.num_classes = m.num_classes();
  pool.provenance = {master_seed, options.config_digest, sampler, s.describe(),
                     options.noise_stream, 0};
  pool.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) {
      pool.records.push_back(std::move(slots[i]));
    } else {
      ++pool.provenance.excluded;
    }
  }
  return pool;
}

SeedPool balance_pool(const SeedPool& pool, Rng& rng) {
  const auto counts = label_counts(pool);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw PoolError(fmt::format("balance: class {} has no records", c));
  }
  const std::size_t target = counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end());

  std::vector<char> keep(pool.records.size(), 0);
  for (int c = 0; c < pool.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pool.records.size(); ++i) {
      if (pool.records[i].label == c) members.push_back(i);
    }
    if (members.size() > target) std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < target; ++j) keep[members[j]] = 1;
  }

  SeedPool out = pool;
  out.records.clear();
  for (std::size_t i = 0; i < pool.records.size(); ++i) {
    if (keep[i]) out.records.push_back(pool.records[i]);
  }
  return out;
}

SeedPool stratify(const SeedPool& pool, int levels) {
  if (levels < 1) throw PoolError("stratify: levels must be >= 1");
  SeedPool out = pool;
  for (int c = 0; c < pool.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      if (out.records[i].label == c) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(levels)) {
      throw PoolError(fmt::format("stratify: class {} has {} records, fewer than {} levels", c,
                                  members.size(), levels));
    }
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto& ra = out.records[a];
      const auto& rb = out.records[b];
      if (ra.confidence != rb.confidence) return ra.confidence > rb.confidence;
      return ra.index < rb.index;
    });
    const std::size_t L = static_cast<std::size_t>(levels);
    const std::size_t base = members.size() / L;
    const std::size_t extra = members.size() % L;
    std::size_t pos = 0;
    for (std::size_t bin = 0; bin < L; ++bin) {
      const std::size_t size = base + (bin < extra ? 1 : 0);
      for (std::size_t j = 0; j < size; ++j) {
        out.records[members[pos++]].level = static_cast<int>(bin) + 1;
      }
    }
  }
  return out;
}

SeedPool split_train_test(const SeedPool& pool, double test_fraction, Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw PoolError(fmt::format("split: test_fraction must be in (0, 1), got {}", test_fraction));
  }
  SeedPool out = pool;
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    cells[{out.records[i].label, out.records[i].level}].push_back(i);
  }
  const int levels = num_levels(pool);
  for (int c = 0; c < pool.num_classes; ++c) {
    for (int l = levels == 0 ? 0 : 1; l <= levels; ++l) {
      auto it = cells.find({c, l});
      if (it == cells.end() || it->second.empty()) {
        throw PoolError(fmt::format("split: empty cell (label {}, level {})", c, l));
      }
    }
  }
  for (auto& [key, members] : cells) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < members.size(); ++j) {
      out.records[members[j]].split = j < n_test ? Split::test : Split::train;
    }
  }
  return out;
}

std::vector<SeedRecord> select_records(const SeedPool& pool, int level,
                                       std::optional<Split> split) {
  std::vector<SeedRecord> out;
  for (const auto& r : pool.records) {
    if (level != 0 && r.level != level) continue;
    if (split && r.split != *split) continue;
    out.push_back(r);
  }
  return out;
}

std::vector<double> level_boundary(const SeedPool& pool, int upper_level) {
  std::vector<double> out(static_cast<std::size_t>(pool.num_classes), 0.0);
  for (int c = 0; c < pool.num_classes; ++c) {
    double lowest_upper = std::numeric_limits<double>::infinity();
    double highest_lower = -std::numeric_limits<double>::infinity();
    for (const auto& r : pool.records) {
      if (r.label != c) continue;
      if (r.level == upper_level) lowest_upper = std::min(lowest_upper, r.confidence);
      if (r.level == upper_level + 1) highest_lower = std::max(highest_lower, r.confidence);
    }
    if (!std::isfinite(lowest_upper)) {
      throw PoolError(fmt::format("level boundary: class {} has no level-{} records", c,
                                  upper_level));
    }
    out[static_cast<std::size_t>(c)] =
        std::isfinite(highest_lower) ? 0.5 * (lowest_upper + highest_lower) : lowest_upper;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV / manifest

namespace {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view column) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(fmt::format("pool csv line {}: bad value '{}' in column {}", line, text,
                                 column),
                     line);
  }
  return value;
}

nlohmann::json manifest_json(const SeedPool& pool) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [key, n] : pool_counts(pool)) {
    counts[std::to_string(key.first)][std::to_string(key.second)] = n;
  }
  return {
      {"master_seed", pool.provenance.master_seed},
      {"config_digest", pool.provenance.config_digest},
      {"sampler", to_string(pool.provenance.sampler)},
      {"schedule", pool.provenance.schedule},
      {"noise_stream", pool.provenance.noise_stream},
      {"excluded", pool.provenance.excluded},
      {"dim", pool.dim},
      {"num_classes", pool.num_classes},
      {"records", pool.records.size()},
      {"counts", counts},
  };
}

}  // namespace

void write_pool_csv(const SeedPool& pool, std::ostream& out) {
  std::string line = "index,split,level,label,confidence";
  for (int i = 0; i < pool.dim; ++i) line += fmt::format(",z_{}", i);
  for (int i = 0; i < pool.dim; ++i) line += fmt::format(",x_{}", i);
  for (int i = 0; i < pool.num_classes; ++i) line += fmt::format(",p_{}", i);
  out << line << '\n';
  for (const auto& r : pool.records) {
    line = fmt::format("{},{},{},{},{}", r.index, r.split == Split::train ? "train" : "test",
                       r.level, r.label, format_double(r.confidence));
    for (Eigen::Index i = 0; i < r.seed.size(); ++i) line += "," + format_double(r.seed[i]);
    for (Eigen::Index i = 0; i < r.sample.size(); ++i) line += "," + format_double(r.sample[i]);
    for (Eigen::Index i = 0; i < r.posterior.size(); ++i) {
      line += "," + format_double(r.posterior[i]);
    }
    out << line << '\n';
  }
}

SeedPool read_pool_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("pool csv line 1: missing header", 1);
  const auto header = split_fields(line);
  if (header.size() < 5 || header[0] != "index" || header[1] != "split" ||
      header[2] != "level" || header[3] != "label" || header[4] != "confidence") {
    throw ParseError("pool csv line 1: unexpected header", 1);
  }
  SeedPool pool;
  for (std::size_t i = 5; i < header.size(); ++i) {
    const auto col = header[i];
    if (col.starts_with("z_")) {
      ++pool.dim;
    } else if (col.starts_with("p_")) {
      ++pool.num_classes;
    } else if (!col.starts_with("x_")) {
      throw ParseError(fmt::format("pool csv line 1: unknown column '{}'", col), 1);
    }
  }
  if (header.size() != 5 + 2 * static_cast<std::size_t>(pool.dim) +
                           static_cast<std::size_t>(pool.num_classes)) {
    throw ParseError("pool csv line 1: seed and sample column counts differ", 1);
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw ParseError(fmt::format("pool csv line {}: expected {} fields, got {}", line_no,
                                   header.size(), f.size()),
                       line_no);
    }
    SeedRecord r;
    r.index = parse_number<std::int64_t>(f[0], line_no, "index");
    if (f[1] == "train") {
      r.split = Split::train;
    } else if (f[1] == "test") {
      r.split = Split::test;
    } else {
      throw ParseError(fmt::format("pool csv line {}: bad split '{}'", line_no, f[1]), line_no);
    }
    r.level = parse_number<int>(f[2], line_no, "level");
    r.label = parse_number<int>(f[3], line_no, "label");
    if (r.label < 0 || r.label >= pool.num_classes) {
      throw ParseError(fmt::format("pool csv line {}: label {} out of range", line_no, r.label),
                       line_no);
    }
    r.confidence = parse_number<double>(f[4], line_no, "confidence");
    std::size_t col = 5;
    r.seed.resize(pool.dim);
    r.sample.resize(pool.dim);
    r.posterior.resize(pool.num_classes);
    for (int i = 0; i < pool.dim; ++i, ++col) r.seed[i] = parse_number<double>(f[col], line_no, header[col]);
    for (int i = 0; i < pool.dim; ++i, ++col) r.sample[i] = parse_number<double>(f[col], line_no, header[col]);
    for (int i = 0; i < pool.num_classes; ++i, ++col) {
      r.posterior[i] = parse_number<double>(f[col], line_no, header[col]);
    }
    pool.records.push_back(std::move(r));
  }
  return pool;
}

std::filesystem::path manifest_path(const std::filesystem::path& pool_path) {
  auto p = pool_path;
  p += ".manifest.json";
  return p;
}

void save_pool(const SeedPool& pool, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("save_pool: cannot write {}", path.string()));
    write_pool_csv(pool, out);
    if (!out) throw Error(fmt::format("save_pool: write failed for {}", path.string()));
  }
  std::ofstream meta(manifest_path(path), std::ios::binary);
  if (!meta) throw Error(fmt::format("save_pool: cannot write {}", manifest_path(path).string()));
  meta << manifest_json(pool).dump(2) << '\n';
}

SeedPool load_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("load_pool: cannot read {}", path.string()));
  SeedPool pool = read_pool_csv(in);
  std::ifstream meta(manifest_path(path), std::ios::binary);
  if (meta) {
    nlohmann::json j;
    try {
      meta >> j;
      auto& p = pool.provenance;
      p.master_seed = j.at("master_seed").get<std::uint64_t>();
      p.config_digest = j.at("config_digest").get<std::string>();
      p.sampler = parse_sampler(j.at("sampler").get<std::string>());
      p.schedule = j.at("schedule").get<std::string>();
      p.noise_stream = j.at("noise_stream").get<std::uint64_t>();
      p.excluded = j.at("excluded").get<std::size_t>();
      // Header-only files cannot carry dimensions; the manifest can.
      pool.dim = j.at("dim").get<int>();
      pool.num_classes = j.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(fmt::format("pool manifest {}: {}", manifest_path(path).string(), e.what()),
                       0);
    }
  }
  return pool;
}

}  // namespace latentlens
