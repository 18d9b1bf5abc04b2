#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <fmt/format.h>

#include <latentlens/cli/artifacts.hpp>
#include <latentlens/cli/commands.hpp>
#include <latentlens/cli/config.hpp>
#include <latentlens/cli/manifest.hpp>

namespace fs = std::filesystem;
using namespace latentlens;
using namespace latentlens::cli;

namespace {

const fs::path kSmall = fs::path(LATENTLENS_TEST_DATA) / "small.toml";
const fs::path kStandardNormal = fs::path(LATENTLENS_CONFIG_DIR) / "standard_normal.toml";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("latentlens_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<std::string> csv_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults") {
    const auto c = parse_config("");
    CHECK(c.master_seed == 42);
    CHECK(c.mixture.classes == 5);
    CHECK(c.mixture.dim == 8);
    CHECK(c.pool.size == 20000);
    CHECK(c.pool.levels == 10);
    CHECK(c.predict.fresh == 5100);
    CHECK_FALSE(c.condgen.threshold.has_value());
    CHECK(c.integrator.steps == 256);
  }
  SUBCASE("explicit mixture and numeric threshold") {
    const auto c = parse_config(R"(
[mixture]
kind = "explicit"
classes = 2
[[mixture.component]]
weight = 3
mean = [1.0, 0.0]
class = 0
[[mixture.component]]
weight = 1
mean = [-1.0, 0.0]
covariance = [[2.0, 0.5], [0.5, 1.0]]
class = 1
[condgen]
threshold = 0.4
)");
    REQUIRE(c.mixture.components.size() == 2);
    const auto m = build_mixture(c.mixture);
    CHECK(m.dim() == 2);
    CHECK(m.components()[0].weight == doctest::Approx(0.75));
    CHECK(m.components()[1].covariance(0, 1) == 0.5);
    CHECK(*c.condgen.threshold == 0.4);
  }
  SUBCASE("errors name the key") {
    auto key_of = [](const std::string& text) {
      try {
        parse_config(text);
      } catch (const ConfigError& e) {
        return e.key();
      }
      return std::string("<none>");
    };
    CHECK(key_of("[pool]\nsizes = 3\n") == "pool.sizes");
    CHECK(key_of("[pool]\nlevels = 0\n") == "pool.levels");
    CHECK(key_of("[pool]\ntest_fraction = 1.5\n") == "pool.test_fraction");
    CHECK(key_of("[pool]\nsampler = \"euler\"\n") == "pool.sampler");
    CHECK(key_of("[mixture]\nradius = \"far\"\n") == "mixture.radius");
    CHECK(key_of("[condgen]\nthreshold = \"high\"\n") == "condgen.threshold");
    CHECK(key_of("bogus = 1\n") == "bogus");
    CHECK_THROWS_AS(parse_config("[pool\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/latentlens.toml"), ConfigError);
  }
  SUBCASE("digest is stable across equivalent texts") {
    const auto a = parse_config("master_seed = 3\n[pool]\nsize = 100\nlevels = 2\n");
    // Same settings: comments, order, spacing and explicit defaults differ.
    const auto b = parse_config("# comment\nmaster_seed = 3\n[pool]\nlevels   = 2\nsize = 100\n"
                                "sampler = \"ddim\"\n[mixture]\ndim = 8\n");
    CHECK(config_digest(a) == config_digest(b));
    CHECK(canonical_text(a) == canonical_text(b));
    const auto c = parse_config("master_seed = 4\n[pool]\nsize = 100\nlevels = 2\n");
    CHECK(config_digest(a) != config_digest(c));
    // Canonical text parses back to the same configuration.
    CHECK(config_digest(a) == config_digest(parse_config(canonical_text(a))));
    CHECK(config_digest(a).size() == 16);
    CHECK(canonical_text(parse_config("")) == canonical_text(ExperimentConfig{}));
  }
  SUBCASE("fnv1a") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }
}

TEST_CASE("tables and svg") {
  SUBCASE("csv") {
    Table t{{"a", "b", "c"}, {}};
    t.add({std::int64_t{1}, 0.1, std::string("x")});
    CHECK(to_csv(t) == "a,b,c\n1,0.10000000000000001,x\n");
    CHECK(t.number(0, "b") == 0.1);
    CHECK_THROWS_AS(t.column("d"), EmitError);
  }
  SUBCASE("one-cell heatmap") {
    Table t{{"row", "col", "value"}, {}};
    t.add({std::int64_t{1}, std::int64_t{1}, 0.98765});
    const auto svg = emit_svg(PlotKind::heatmap, t, "one");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "class=\"cell\"") == 1);
    CHECK(count(svg, ">0.988</text>") == 1);
  }
  SUBCASE("ten by ten heatmap agrees with its csv") {
    Table t{{"row", "col", "value"}, {}};
    for (int r = 1; r <= 10; ++r) {
      for (int c = 1; c <= 10; ++c) t.add({std::int64_t{r}, std::int64_t{c}, 1.0 / (r + c + 0.5)});
    }
    const auto svg = emit_svg(PlotKind::heatmap, t);
    CHECK(count(svg, "class=\"cell\"") == 100);
    const std::regex value_re("class=\"value\"[^>]*>([0-9.]+)</text>");
    std::vector<std::string> shown;
    for (std::sregex_iterator it(svg.begin(), svg.end(), value_re), end; it != end; ++it) {
      shown.push_back((*it)[1].str());
    }
    REQUIRE(shown.size() == 100);
    std::istringstream csv(to_csv(t));
    std::string line;
    std::getline(csv, line);
    std::multiset<std::string> expected;
    while (std::getline(csv, line)) {
      expected.insert(fmt::format("{:.3f}", std::stod(line.substr(line.rfind(',') + 1))));
    }
    CHECK(std::multiset<std::string>(shown.begin(), shown.end()) == expected);
  }
  SUBCASE("curve markers scale with counts") {
    Table t{{"x", "y", "count"}, {}};
    t.add({0.1, 0.5, std::int64_t{1}});
    t.add({0.9, 0.9, std::int64_t{100}});
    const auto svg = emit_svg(PlotKind::curve, t);
    CHECK(count(svg, "class=\"marker\"") == 2);
    CHECK(svg.find("r=\"15.00\"") != std::string::npos);
  }
  SUBCASE("scatter legend") {
    Table t{{"x", "y", "label"}, {}};
    for (int i = 0; i < 50; ++i) t.add({0.1 * i, 0.2 * i, std::int64_t{i % 5}});
    const auto svg = emit_svg(PlotKind::scatter, t);
    CHECK(count(svg, "class=\"legend\"") == 5);
  }
  SUBCASE("empty tables") {
    const Table t{{"row", "col", "value"}, {}};
    CHECK_THROWS_AS(emit_svg(PlotKind::heatmap, t), EmitError);
    CHECK_THROWS_AS(emit_svg(PlotKind::scatter, Table{{"x", "y", "label"}, {}}), EmitError);
  }
  SUBCASE("atomic writes") {
    const auto dir = fresh_dir("atomic");
    write_file_atomic(dir / "a.txt", "first");
    write_file_atomic(dir / "a.txt", "second");
    CHECK(slurp(dir / "a.txt") == "second");
    CHECK_FALSE(fs::exists(dir / "a.txt.tmp"));
  }
}

TEST_CASE("run manifest") {
  const auto dir = fresh_dir("manifest");
  {
    auto m = RunManifest::load(dir);
    CHECK(m.stages().empty());
    write_file_atomic(dir / "out.csv", "x\n");
    m.config_digest = "d1";
    m.record("pool", {"complete", "d1", 5, {"out.csv"}, utc_timestamp(), utc_timestamp(), ""});
    m.save();
  }
  const auto m = RunManifest::load(dir);
  CHECK(m.config_digest == "d1");
  CHECK(m.up_to_date("pool", "d1", 5));
  CHECK_FALSE(m.up_to_date("pool", "d2", 5));
  CHECK_FALSE(m.up_to_date("pool", "d1", 6));
  CHECK_FALSE(m.up_to_date("heatmap", "d1", 5));
  fs::remove(dir / "out.csv");
  CHECK_FALSE(m.up_to_date("pool", "d1", 5));
}

TEST_CASE("verify on standard-normal data") {
  const auto dir = fresh_dir("verify");
  const auto r = invoke({"verify", "--config", kStandardNormal.string(), "--out", dir.string()});
  CHECK(r.code == kSuccess);
  const std::string report = slurp(dir / "verify_report.json");
  const std::regex identity_re("\"limit\": 1e-10,\\s*\"name\": \"identity_flow_error\",\\s*\"pass\": true,\\s*\"value\": ([^\\s,}]+)");
  std::smatch match;
  REQUIRE(std::regex_search(report, match, identity_re));
  CHECK(std::stod(match[1].str()) <= 1e-10);
}

TEST_CASE("exit codes and messages") {
  const auto dir = fresh_dir("codes");
  SUBCASE("usage errors") {
    CHECK(invoke({"verify"}).code == kUsageError);
    CHECK(invoke({"--config", kSmall.string()}).code == kUsageError);
    CHECK(invoke({"frobnicate", "--config", kSmall.string()}).code == kUsageError);
    CHECK(invoke({"pool", "--config", kSmall.string(), "--sampler", "euler"}).code == kUsageError);
    const auto v = invoke({"--version", "verify", "--config", "x"});
    CHECK(v.code == kSuccess);
    CHECK(v.out.find(tool_version()) != std::string::npos);
  }
  SUBCASE("bad config") {
    const auto cfg = dir / "bad.toml";
    write_file_atomic(cfg, "[pool]\nlevels = -1\n");
    const auto r = invoke({"pool", "--config", cfg.string(), "--out", dir.string()});
    CHECK(r.code == kUsageError);
    CHECK(r.err.find("pool.levels") != std::string::npos);
    CHECK(r.err.find("bad.toml") != std::string::npos);
  }
  SUBCASE("stage failures name the stage and the input") {
    const auto cfg = dir / "tiny.toml";
    write_file_atomic(cfg, "[mixture]\nclasses = 3\ndim = 2\n[pool]\nsize = 12\nlevels = 10\n");
    const auto r = invoke({"pool", "--config", cfg.string(), "--out", dir.string()});
    CHECK(r.code == kUsageError);
    CHECK(r.err.find("stage 'pool_ddim' failed on") != std::string::npos);
    CHECK(r.err.find("tiny.toml") != std::string::npos);
    const auto manifest = slurp(dir / RunManifest::kFileName);
    CHECK(manifest.find("\"failed\"") != std::string::npos);
  }
  SUBCASE("verification failure") {
    const auto cfg = dir / "strict.toml";
    write_file_atomic(cfg, "[mixture]\nclasses = 2\ndim = 2\n[verify]\npoints = 5\nsteps = 1\n"
                           "tolerance = 1e-14\ntransport_samples = 10\n");
    const auto r = invoke({"verify", "--config", cfg.string(), "--out", dir.string()});
    CHECK(r.code == kVerificationFailure);
    CHECK(r.err.find("stage 'verify'") != std::string::npos);
    CHECK(fs::exists(dir / "verify_report.json"));
  }
}

TEST_CASE("pipeline determinism and the manifest") {
  const auto a = fresh_dir("run_a");
  const auto b = fresh_dir("run_b");
  const std::vector<std::string> stages{"pool", "heatmap", "structure", "predict", "condgen"};
  for (const auto& s : stages) {
    CHECK(invoke({s, "--config", kSmall.string(), "--out", a.string()}).code == kSuccess);
  }
  setenv("LATENTLENS_WORKERS", "3", 1);
  for (const auto& s : stages) {
    CHECK(invoke({s, "--config", kSmall.string(), "--out", b.string()}).code == kSuccess);
  }
  unsetenv("LATENTLENS_WORKERS");

  const auto files = csv_files(a);
  CHECK(files.size() >= 10);
  CHECK(files == csv_files(b));
  for (const auto& f : files) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }

  SUBCASE("completed stages are skipped unless forced") {
    const auto again = invoke({"heatmap", "--config", kSmall.string(), "--out", a.string()});
    CHECK(again.out.find("[heatmap_ddim] up to date, skipping") != std::string::npos);
    CHECK(again.out.find("[pool_ddim] up to date, skipping") != std::string::npos);
    const auto forced = invoke({"heatmap", "--config", kSmall.string(), "--out", a.string(), "--force"});
    CHECK(forced.out.find("[heatmap_ddim] running") != std::string::npos);
    CHECK(slurp(a / "heatmap_ddim_mlp.csv") == slurp(b / "heatmap_ddim_mlp.csv"));
    // A different seed changes the digest-relevant inputs, so the stage reruns.
    const auto reseeded = invoke({"pool", "--config", kSmall.string(), "--out", a.string(), "--seed", "12"});
    CHECK(reseeded.out.find("[pool_ddim] running") != std::string::npos);
    CHECK(slurp(a / "pool_ddim.csv") != slurp(b / "pool_ddim.csv"));
  }
  SUBCASE("manifest lists every output") {
    const std::string manifest = slurp(a / RunManifest::kFileName);
    for (const auto& f : files) CHECK(manifest.find("\"" + f + "\"") != std::string::npos);
  }
}

TEST_CASE("heatmaps for both samplers") {
  const auto dir = fresh_dir("samplers");
  CHECK(invoke({"heatmap", "--config", kSmall.string(), "--out", dir.string(), "--sampler", "ddpm"}).code == kSuccess);
  CHECK(invoke({"heatmap", "--config", kSmall.string(), "--out", dir.string(), "--sampler", "ddim"}).code == kSuccess);
  for (const char* s : {"ddim", "ddpm"}) {
    for (const char* t : {"mlp", "lda"}) {
      CHECK(fs::exists(dir / fmt::format("heatmap_{}_{}.csv", s, t)));
      CHECK(fs::exists(dir / fmt::format("heatmap_{}_{}.svg", s, t)));
    }
  }
  const std::string csv = slurp(dir / "heatmap_ddim_mlp.csv");
  CHECK(csv.rfind("train_level,test_level,accuracy,train_count,test_count\n", 0) == 0);
  CHECK(count(csv, "\n") == 1 + 9);
}
