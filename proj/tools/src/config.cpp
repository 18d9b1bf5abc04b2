#include "latentlens/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <toml.hpp>

namespace latentlens::cli {
namespace {

// Reads one TOML table, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  bool present() const { return table_ != nullptr; }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const toml::node* node(std::string_view key) {
    if (!table_) return nullptr;
    seen_.insert(std::string(key));
    return table_->get(key);
  }

  void read(std::string_view key, double& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (auto v = n->value_exact<double>()) {
      out = *v;
    } else if (auto i = n->value_exact<std::int64_t>()) {
      out = static_cast<double>(*i);
    } else {
      throw ConfigError(key_path(key), "expected a number");
    }
    if (!std::isfinite(out)) throw ConfigError(key_path(key), "must be finite");
  }

  void read(std::string_view key, std::string& out) {
    const toml::node* n = node(key);
    if (!n) return;
    auto v = n->value_exact<std::string>();
    if (!v) throw ConfigError(key_path(key), "expected a string");
    out = *v;
  }

  void read(std::string_view key, int& out) {
    std::int64_t wide = out;
    read_integer(key, wide);
    if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
      throw ConfigError(key_path(key), "integer out of range");
    }
    out = static_cast<int>(wide);
  }

  void read(std::string_view key, std::size_t& out) {
    std::int64_t wide = static_cast<std::int64_t>(out);
    read_integer(key, wide);
    if (wide < 0) throw ConfigError(key_path(key), "must be nonnegative");
    out = static_cast<std::size_t>(wide);
  }

  /// Seeds: a nonnegative integer, or a decimal string for values above
  /// the TOML integer range.
  void read_seed(std::string_view key, std::uint64_t& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (auto i = n->value_exact<std::int64_t>()) {
      if (*i < 0) throw ConfigError(key_path(key), "seed must be nonnegative");
      out = static_cast<std::uint64_t>(*i);
      return;
    }
    if (auto s = n->value_exact<std::string>()) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
      if (ec != std::errc() || ptr != s->data() + s->size()) {
        throw ConfigError(key_path(key), fmt::format("'{}' is not an unsigned 64-bit integer", *s));
      }
      out = v;
      return;
    }
    throw ConfigError(key_path(key), "expected an integer seed");
  }

  Section child(std::string_view key) {
    const toml::node* n = node(key);
    if (!n) return Section(nullptr, key_path(key));
    if (!n->is_table()) throw ConfigError(key_path(key), "expected a table");
    return Section(n->as_table(), key_path(key));
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError(key_path(k.str()), "unknown key");
      }
    }
  }

 private:
  void read_integer(std::string_view key, std::int64_t& out) {
    const toml::node* n = node(key);
    if (!n) return;
    auto v = n->value_exact<std::int64_t>();
    if (!v) throw ConfigError(key_path(key), "expected an integer");
    out = *v;
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

Vector read_vector(const toml::node& n, const std::string& key) {
  const toml::array* arr = n.as_array();
  if (!arr || arr->empty()) throw ConfigError(key, "expected a nonempty array of numbers");
  Vector v(static_cast<Eigen::Index>(arr->size()));
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const toml::node& e = *arr->get(i);
    if (auto d = e.value_exact<double>()) {
      v[static_cast<Eigen::Index>(i)] = *d;
    } else if (auto k = e.value_exact<std::int64_t>()) {
      v[static_cast<Eigen::Index>(i)] = static_cast<double>(*k);
    } else {
      throw ConfigError(key, fmt::format("entry {} is not a number", i));
    }
  }
  return v;
}

Component read_component(const toml::table& t, const std::string& path) {
  Section sec(&t, path);
  Component c;
  sec.read("weight", c.weight);
  sec.read("class", c.label);
  const toml::node* mean = sec.node("mean");
  if (!mean) throw ConfigError(sec.key_path("mean"), "missing");
  c.mean = read_vector(*mean, sec.key_path("mean"));
  const auto d = c.mean.size();
  const toml::node* cov = sec.node("covariance");
  if (!cov) {
    c.covariance = Matrix::Identity(d, d);
  } else if (cov->is_number()) {
    double scale = cov->value<double>().value_or(1.0);
    c.covariance = scale * Matrix::Identity(d, d);
  } else if (const toml::array* rows = cov->as_array()) {
    const std::string key = sec.key_path("covariance");
    if (static_cast<Eigen::Index>(rows->size()) != d) {
      throw ConfigError(key, fmt::format("expected {} rows, got {}", d, rows->size()));
    }
    c.covariance.resize(d, d);
    for (std::size_t i = 0; i < rows->size(); ++i) {
      Vector row = read_vector(*rows->get(i), fmt::format("{}[{}]", key, i));
      if (row.size() != d) throw ConfigError(key, fmt::format("row {} has {} entries", i, row.size()));
      c.covariance.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
  } else {
    throw ConfigError(sec.key_path("covariance"), "expected a number or a matrix");
  }
  sec.finish();
  return c;
}

void read_mixture(Section sec, MixtureSpec& m) {
  sec.read("kind", m.kind);
  sec.read("classes", m.classes);
  require(m.classes >= 1, sec.key_path("classes"), "must be at least 1");
  if (m.kind == "sphere") {
    sec.read("dim", m.dim);
    sec.read("radius", m.radius);
    sec.read_seed("seed", m.seed);
    require(m.dim >= 1, sec.key_path("dim"), "must be at least 1");
    require(m.radius >= 0.0, sec.key_path("radius"), "must be nonnegative");
  } else if (m.kind == "explicit") {
    const toml::node* comps = sec.node("component");
    const toml::array* arr = comps ? comps->as_array() : nullptr;
    if (!arr || arr->empty()) {
      throw ConfigError(sec.key_path("component"), "explicit mixtures need [[mixture.component]] entries");
    }
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const toml::table* t = arr->get(i)->as_table();
      const std::string path = fmt::format("{}[{}]", sec.key_path("component"), i);
      if (!t) throw ConfigError(path, "expected a table");
      m.components.push_back(read_component(*t, path));
    }
    m.dim = static_cast<int>(m.components.front().mean.size());
  } else {
    throw ConfigError(sec.key_path("kind"), fmt::format("unknown mixture kind '{}'", m.kind));
  }
  sec.finish();
}

void read_schedule(Section sec, ScheduleSpec& s) {
  sec.read("form", s.form);
  if (s.form == "linear") {
    sec.read("beta0", s.beta0);
    sec.read("beta1", s.beta1);
  } else if (s.form == "constant") {
    sec.read("beta", s.beta);
  } else {
    throw ConfigError(sec.key_path("form"), fmt::format("unknown schedule form '{}'", s.form));
  }
  sec.read("horizon", s.horizon);
  sec.finish();
}

void read_integrator(Section sec, IntegratorSpec& spec) {
  std::string method = spec.method == Method::rk4 ? "rk4" : "euler";
  sec.read("method", method);
  if (method == "rk4") {
    spec.method = Method::rk4;
  } else if (method == "euler") {
    spec.method = Method::euler;
  } else {
    throw ConfigError(sec.key_path("method"), fmt::format("unknown method '{}'", method));
  }
  sec.read("steps", spec.steps);
  require(spec.steps >= 1, sec.key_path("steps"), "must be at least 1");
  sec.finish();
}

void read_pool(Section sec, PoolSpec& p) {
  sec.read("size", p.size);
  sec.read("levels", p.levels);
  sec.read("test_fraction", p.test_fraction);
  std::string sampler = to_string(p.sampler);
  sec.read("sampler", sampler);
  try {
    p.sampler = parse_sampler(sampler);
  } catch (const Error& e) {
    throw ConfigError(sec.key_path("sampler"), e.what());
  }
  sec.read_seed("noise_stream", p.noise_stream);
  require(p.size >= 1, sec.key_path("size"), "must be at least 1");
  require(p.levels >= 1, sec.key_path("levels"), "must be at least 1");
  require(p.test_fraction >= 0.0 && p.test_fraction < 1.0, sec.key_path("test_fraction"),
          "must lie in [0, 1)");
  sec.finish();
}

void read_mlp(Section sec, MlpHyper& h) {
  sec.read("hidden1", h.hidden1);
  sec.read("hidden2", h.hidden2);
  sec.read("epochs", h.epochs);
  sec.read("batch_size", h.batch_size);
  sec.read("learning_rate", h.learning_rate);
  require(h.hidden1 >= 1 && h.hidden2 >= 1, sec.key_path("hidden1"), "layer widths must be positive");
  require(h.epochs >= 1, sec.key_path("epochs"), "must be at least 1");
  require(h.batch_size >= 1, sec.key_path("batch_size"), "must be at least 1");
  require(h.learning_rate > 0.0, sec.key_path("learning_rate"), "must be positive");
  sec.finish();
}

void read_condgen(Section sec, CondGenSpec& c) {
  sec.read("per_class", c.per_class);
  sec.read("max_draws", c.max_draws);
  require(c.per_class >= 1, sec.key_path("per_class"), "must be at least 1");
  require(c.max_draws >= 1, sec.key_path("max_draws"), "must be at least 1");
  if (const toml::node* n = sec.node("threshold")) {
    if (auto s = n->value_exact<std::string>()) {
      if (*s != "boundary") {
        throw ConfigError(sec.key_path("threshold"), "expected a number or \"boundary\"");
      }
      c.threshold.reset();
    } else if (auto d = n->value<double>()) {
      require(*d >= 0.0 && *d <= 1.0, sec.key_path("threshold"), "must lie in [0, 1]");
      c.threshold = *d;
    } else {
      throw ConfigError(sec.key_path("threshold"), "expected a number or \"boundary\"");
    }
  }
  sec.finish();
}

toml::array to_array(const Vector& v) {
  toml::array a;
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void put_seed(toml::table& t, std::string_view key, std::uint64_t v) {
  if (v <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    t.insert(key, static_cast<std::int64_t>(v));
  } else {
    t.insert(key, std::to_string(v));
  }
}

std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError("", fmt::format("{}: line {}: {}", origin, e.source().begin.line,
                                      e.description()));
  }
  ExperimentConfig cfg;
  Section top(&root, "");
  top.read_seed("master_seed", cfg.master_seed);
  read_mixture(top.child("mixture"), cfg.mixture);
  read_schedule(top.child("schedule"), cfg.schedule);
  read_integrator(top.child("integrator"), cfg.integrator);
  read_pool(top.child("pool"), cfg.pool);
  read_mlp(top.child("mlp"), cfg.mlp);
  {
    Section sec = top.child("predict");
    sec.read("fresh", cfg.predict.fresh);
    sec.read("bins", cfg.predict.bins);
    require(cfg.predict.fresh >= 1, sec.key_path("fresh"), "must be at least 1");
    require(cfg.predict.bins >= 1, sec.key_path("bins"), "must be at least 1");
    sec.finish();
  }
  {
    Section sec = top.child("structure");
    sec.read("test_fraction", cfg.structure.test_fraction);
    sec.read("silhouette_limit", cfg.structure.silhouette_limit);
    require(cfg.structure.test_fraction > 0.0 && cfg.structure.test_fraction < 1.0,
            sec.key_path("test_fraction"), "must lie in (0, 1)");
    require(cfg.structure.silhouette_limit >= 2, sec.key_path("silhouette_limit"),
            "must be at least 2");
    sec.finish();
  }
  read_condgen(top.child("condgen"), cfg.condgen);
  {
    Section sec = top.child("verify");
    sec.read("points", cfg.verify.points);
    sec.read("steps", cfg.verify.steps);
    sec.read("tolerance", cfg.verify.tolerance);
    sec.read("transport_samples", cfg.verify.transport_samples);
    require(cfg.verify.points >= 1, sec.key_path("points"), "must be at least 1");
    require(cfg.verify.steps >= 1, sec.key_path("steps"), "must be at least 1");
    require(cfg.verify.tolerance > 0.0, sec.key_path("tolerance"), "must be positive");
    require(cfg.verify.transport_samples >= 2, sec.key_path("transport_samples"),
            "must be at least 2");
    sec.finish();
  }
  top.finish();
  // Fail early on mixtures and schedules the core would reject.
  build_mixture(cfg.mixture);
  build_schedule(cfg.schedule);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", fmt::format("cannot read config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string canonical_text(const ExperimentConfig& c) {
  toml::table root;
  put_seed(root, "master_seed", c.master_seed);

  toml::table mixture;
  mixture.insert("kind", c.mixture.kind);
  mixture.insert("classes", c.mixture.classes);
  if (c.mixture.kind == "sphere") {
    mixture.insert("dim", c.mixture.dim);
    mixture.insert("radius", c.mixture.radius);
    put_seed(mixture, "seed", c.mixture.seed);
  } else {
    toml::array comps;
    for (const auto& comp : c.mixture.components) {
      toml::table t;
      t.insert("weight", comp.weight);
      t.insert("class", comp.label);
      t.insert("mean", to_array(comp.mean));
      toml::array rows;
      for (Eigen::Index i = 0; i < comp.covariance.rows(); ++i) {
        rows.push_back(to_array(comp.covariance.row(i).transpose()));
      }
      t.insert("covariance", std::move(rows));
      comps.push_back(std::move(t));
    }
    mixture.insert("component", std::move(comps));
  }
  root.insert("mixture", std::move(mixture));

  toml::table schedule;
  schedule.insert("form", c.schedule.form);
  if (c.schedule.form == "linear") {
    schedule.insert("beta0", c.schedule.beta0);
    schedule.insert("beta1", c.schedule.beta1);
  } else {
    schedule.insert("beta", c.schedule.beta);
  }
  schedule.insert("horizon", c.schedule.horizon);
  root.insert("schedule", std::move(schedule));

  root.insert("integrator",
              toml::table{{"method", c.integrator.method == Method::rk4 ? "rk4" : "euler"},
                          {"steps", c.integrator.steps}});

  toml::table pool{{"size", as_int(c.pool.size)},
                   {"levels", c.pool.levels},
                   {"test_fraction", c.pool.test_fraction},
                   {"sampler", to_string(c.pool.sampler)}};
  put_seed(pool, "noise_stream", c.pool.noise_stream);
  root.insert("pool", std::move(pool));

  root.insert("mlp", toml::table{{"hidden1", c.mlp.hidden1},
                                 {"hidden2", c.mlp.hidden2},
                                 {"epochs", c.mlp.epochs},
                                 {"batch_size", c.mlp.batch_size},
                                 {"learning_rate", c.mlp.learning_rate}});
  root.insert("predict",
              toml::table{{"fresh", as_int(c.predict.fresh)}, {"bins", c.predict.bins}});
  root.insert("structure", toml::table{{"test_fraction", c.structure.test_fraction},
                                       {"silhouette_limit", as_int(c.structure.silhouette_limit)}});

  toml::table condgen{{"per_class", as_int(c.condgen.per_class)},
                      {"max_draws", as_int(c.condgen.max_draws)}};
  if (c.condgen.threshold) {
    condgen.insert("threshold", *c.condgen.threshold);
  } else {
    condgen.insert("threshold", "boundary");
  }
  root.insert("condgen", std::move(condgen));

  root.insert("verify", toml::table{{"points", as_int(c.verify.points)},
                                    {"steps", c.verify.steps},
                                    {"tolerance", c.verify.tolerance},
                                    {"transport_samples", as_int(c.verify.transport_samples)}});

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_digest(const ExperimentConfig& config) {
  return fmt::format("{:016x}", fnv1a64(canonical_text(config)));
}

MixtureModel build_mixture(const MixtureSpec& spec) {
  try {
    if (spec.kind == "sphere") {
      return make_sphere_mixture(spec.classes, spec.dim, spec.radius, spec.seed);
    }
    return MixtureModel::normalized(spec.components, spec.classes);
  } catch (const Error& e) {
    throw ConfigError("mixture", e.what());
  }
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) {
  try {
    if (spec.form == "constant") return NoiseSchedule::constant(spec.beta, spec.horizon);
    return NoiseSchedule::linear(spec.beta0, spec.beta1, spec.horizon);
  } catch (const Error& e) {
    throw ConfigError("schedule", e.what());
  }
}

}  // namespace latentlens::cli
