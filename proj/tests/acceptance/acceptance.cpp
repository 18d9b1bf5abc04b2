// End-to-end acceptance run on the reference configuration. Prints one
// PASS/FAIL line per criterion and exits nonzero if any fails.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <latentlens/cli/commands.hpp>
#include <latentlens/cli/config.hpp>
#include <latentlens/latentlens.hpp>

namespace fs = std::filesystem;
using namespace latentlens;

namespace {

const fs::path kReference = fs::path(LATENTLENS_CONFIG_DIR) / "reference.toml";

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void note(const std::string& text) { fmt::print("        {}\n", text); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Header-indexed numeric CSV; string cells are kept verbatim.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
  double num(std::size_t row, const std::string& name) const { return std::stod(rows[row][col(name)]); }
  const std::string& str(std::size_t row, const std::string& name) const { return rows[row][col(name)]; }
};

Csv read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  Csv csv;
  std::string line;
  std::getline(in, line);
  csv.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) csv.rows.push_back(split(line));
  }
  return csv;
}

void run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  const int code = cli::run(args, out, std::cerr);
  if (code != 0) {
    std::cerr << out.str();
    throw std::runtime_error(fmt::format("latentlens {} exited with {}", args.front(), code));
  }
}

void run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  for (const char* stage : {"pool", "heatmap", "structure", "predict", "condgen"}) {
    run_cli({stage, "--config", kReference.string(), "--out", dir.string()});
  }
  run_cli({"heatmap", "--config", kReference.string(), "--out", dir.string(), "--sampler", "ddpm"});
}

// Matrix of cell values indexed (train_level - 1, test_level - 1).
Matrix heatmap(const fs::path& file) {
  const Csv csv = read_csv(file);
  int L = 0;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) L = std::max(L, static_cast<int>(csv.num(r, "train_level")));
  Matrix m = Matrix::Zero(L, L);
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    m(static_cast<int>(csv.num(r, "train_level")) - 1, static_cast<int>(csv.num(r, "test_level")) - 1) =
        csv.num(r, "accuracy");
  }
  return m;
}

// ---------------------------------------------------------------------------

Outcome gradient_gate() {
  Rng rng = substream(42, Stream::training, 0, 99);
  const MlpHyper hyper;
  MlpModel model(8, 5, Head::classifier, hyper, rng);
  TrainingSet data;
  data.inputs.resize(64, 8);
  for (int i = 0; i < 64; ++i) {
    data.inputs.row(i) = standard_normal(rng, 8).transpose();
    data.labels.push_back(i % 5);
  }
  MlpParameters grad;
  model.loss(data, &grad);
  const Vector analytic = grad.flatten();
  const Vector base = model.parameters().flatten();
  std::uniform_int_distribution<Eigen::Index> pick(0, base.size() - 1);
  double worst = 0.0;
  int checked = 0;
  while (checked < 10) {
    const Eigen::Index k = pick(rng);
    Vector p = base;
    p[k] += 1e-5;
    model.parameters().assign(p);
    const double up = model.loss(data);
    p[k] = base[k] - 1e-5;
    model.parameters().assign(p);
    const double down = model.loss(data);
    model.parameters().assign(base);
    const double numeric = (up - down) / 2e-5;
    if (numeric == 0.0 && analytic[k] == 0.0) continue;  // inactive rectifier
    worst = std::max(worst, std::abs(numeric - analytic[k]) /
                                std::max(std::abs(numeric), std::abs(analytic[k])));
    ++checked;
  }
  return {worst <= 1e-4, fmt::format("max relative error {:.2e} over 10 parameters (limit 1e-4)", worst)};
}

Outcome closed_form_flows() {
  const IntegratorSpec spec{Method::rk4, 256};
  const NoiseSchedule unit = NoiseSchedule::constant(1.0, 1.0);
  Rng rng = substream(42, Stream::data, 1);

  double identity = 0.0;
  const MixtureModel normal({{1.0, Vector::Zero(8), Matrix::Identity(8, 8), 0}}, 1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = standard_normal(rng, 8);
    identity = std::max(identity, (integrate_forward(normal, NoiseSchedule::standard(), x, spec).final_state() - x)
                                      .cwiseAbs()
                                      .maxCoeff());
  }

  const Vector mu = (Vector(2) << 3.0, 0.0).finished();
  const MixtureModel shifted({{1.0, mu, Matrix::Identity(2, 2), 0}}, 1);
  double translation = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vector x = standard_normal(rng, 2);
    const Vector y = integrate_forward(shifted, unit, x, spec).final_state();
    translation = std::max(translation, (y - (x - (1.0 - std::exp(-0.5)) * mu)).norm());
  }

  const MixtureModel wide({{1.0, Vector::Zero(2), 4.0 * Matrix::Identity(2, 2), 0}}, 1);
  const double factor = std::sqrt(4 * std::exp(-1.0) + 1 - std::exp(-1.0)) / 2;
  double scaling = 0.0, logdet = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vector x = standard_normal(rng, 2);
    const auto t = integrate_forward(wide, unit, x, spec);
    scaling = std::max(scaling, (t.final_state() - factor * x).norm() / x.norm());
    logdet = std::max(logdet, std::abs(t.logdet - 2 * std::log(factor)));
  }
  const bool pass = identity <= 1e-10 && translation <= 1e-6 && scaling <= 1e-5 && logdet <= 1e-5;
  return {pass, fmt::format("identity {:.1e}, translation {:.1e}, scaling {:.1e}, log-det {:.1e}",
                            identity, translation, scaling, logdet)};
}

Outcome density_identity(const MixtureModel& m, const NoiseSchedule& s) {
  const ProbabilityFlow coarse(m, s, {Method::rk4, 256});
  const ProbabilityFlow fine(m, s, {Method::rk4, 512});
  Rng rng = substream(42, Stream::data, 2);
  const Matrix pts = m.sample(rng, 100).points;
  double worst_fine = 0.0, worst_coarse = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Vector x = pts.row(i).transpose();
    worst_fine = std::max(worst_fine, verify_density_transport(fine, x).abs_err);
    worst_coarse = std::max(worst_coarse, verify_density_transport(coarse, x).abs_err);
  }
  const double ratio = worst_coarse / worst_fine;
  return {worst_fine <= 1e-3 && ratio >= 4.0,
          fmt::format("max error {:.2e} at rk4/512 (limit 1e-3); 256->512 shrink {:.1f}x (min 4x)",
                      worst_fine, ratio)};
}

Outcome class_transport() {
  // Two unit-variance classes 12 sigma apart along a line.
  const MixtureModel m({{0.5, Vector::Constant(1, 6.0), Matrix::Identity(1, 1), 0},
                        {0.5, Vector::Constant(1, -6.0), Matrix::Identity(1, 1), 1}},
                       2);
  Rng rng = substream(42, Stream::data, 3);
  const auto r = verify_class_transport(m, NoiseSchedule::standard(), 500, rng);
  return {r.roundtrip_class_agreement >= 0.99 && r.latent_nn_purity >= 0.99,
          fmt::format("round-trip agreement {:.3f}, latent 1-NN purity {:.3f} (min 0.99, n=500)",
                      r.roundtrip_class_agreement, r.latent_nn_purity)};
}

Outcome separability_trend(const fs::path& dir) {
  const Csv csv = read_csv(dir / "structure_metrics.csv");
  std::vector<double> levels, scores, variances;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    if (csv.str(r, "space") != "seed" || csv.num(r, "level") < 1) continue;
    levels.push_back(csv.num(r, "level"));
    scores.push_back(csv.num(r, "lda_score"));
    variances.push_back(csv.num(r, "pca_variance"));
  }
  const double rho = spearman(levels, scores);
  const double drop = scores.front() - scores.back();
  const auto [lo, hi] = std::minmax_element(variances.begin(), variances.end());
  const double spread = *hi - *lo;
  return {rho <= -0.7 && drop >= 0.10 && spread <= 0.02,
          fmt::format("spearman {:.3f} (max -0.7), level 1 - level {} = {:.3f} (min 0.10), "
                      "pca variance spread {:.3f} (max 0.02)",
                      rho, levels.size(), drop, spread)};
}

Outcome cross_level(const fs::path& dir) {
  const Matrix ddim = heatmap(dir / "heatmap_ddim_mlp.csv");
  const Matrix lda = heatmap(dir / "heatmap_ddim_lda.csv");
  const Matrix ddpm = heatmap(dir / "heatmap_ddpm_mlp.csv");
  const auto L = ddim.rows();
  const double diag = ddim(0, 0) - ddim(L - 1, L - 1);
  const double block = ddim.topLeftCorner(3, 3).mean() - ddim.bottomRightCorner(3, 3).mean();
  const double control = std::abs(ddpm(0, 0) - ddpm(L - 1, L - 1));
  const double agreement = (ddim - lda).cwiseAbs().maxCoeff();
  return {diag >= 0.15 && block >= 0.10 && control <= 0.05 && agreement <= 0.15,
          fmt::format("ddim cell(1,1)-cell(L,L) {:.3f} (min 0.15), block gap {:.3f} (min 0.10), "
                      "ddpm |diagonal gap| {:.3f} (max 0.05), max |mlp - lda| {:.3f} (max 0.15)",
                      diag, block, control, agreement)};
}

Outcome confidence_curve(const fs::path& dir) {
  const Csv csv = read_csv(dir / "confidence_curve.csv");
  std::vector<double> bins, acc;
  std::size_t total = 0;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    bins.push_back(csv.num(r, "bin"));
    acc.push_back(csv.num(r, "accuracy"));
    total += static_cast<std::size_t>(csv.num(r, "count"));
  }
  const double rho = spearman(bins, acc);
  return {rho >= 0.9 && bins.size() == 10 && total == 5100,
          fmt::format("spearman {:.3f} over {} bins of {} fresh seeds (min 0.9)", rho, bins.size(), total)};
}

Outcome filtering_gap(const fs::path& dir, const cli::ExperimentConfig& config) {
  const SeedPool pool = load_pool(dir / "pool_ddim.csv");
  auto fit_and_score = [&](const std::vector<SeedRecord>& train, const std::vector<SeedRecord>& test,
                           std::uint64_t salt) {
    Rng rng = substream(config.master_seed, Stream::training, 0, salt);
    const auto model = train_mlp(train, pool.num_classes, Head::classifier, config.mlp, rng).model;
    return evaluate(model, test).accuracy;
  };
  const auto train1 = select_records(pool, 1, Split::train);
  const auto test1 = select_records(pool, 1, Split::test);
  const auto train_all = select_records(pool, 0, Split::train);
  const auto test_all = select_records(pool, 0, Split::test);
  const double filtered = fit_and_score(train1, test1, 10);
  const double unstratified = fit_and_score(train_all, test_all, 11);

  // Same training-set size as level 1, drawn evenly from the whole pool.
  std::vector<SeedRecord> matched;
  const std::size_t stride = train_all.size() / train1.size();
  for (std::size_t i = 0; i < train_all.size() && matched.size() < train1.size(); i += stride) {
    matched.push_back(train_all[i]);
  }
  const double size_matched = fit_and_score(matched, test_all, 12);
  note(fmt::format("size-matched unstratified training ({} records): accuracy {:.3f}, gap {:.3f}",
                   matched.size(), size_matched, filtered - size_matched));
  const double gap = filtered - unstratified;
  return {gap >= 0.10, fmt::format("level-1 accuracy {:.3f} vs unstratified {:.3f}: gap {:.3f} (min 0.10)",
                                   filtered, unstratified, gap)};
}

Outcome conditional_generation(const fs::path& dir) {
  const auto j = nlohmann::json::parse(slurp(dir / "condgen_report.json"));
  bool pass = true;
  double worst_verified = 1.0, worst_ratio = 1e9;
  bool calls_ok = true;
  for (const auto& c : j.at("classes")) {
    const double verified = c.at("verified_accuracy").get<double>();
    const double ratio = c.at("diversity").get<double>() / c.at("unconditional_diversity").get<double>();
    const bool calls = c.at("generator_calls").get<std::size_t>() == c.at("n_accepted").get<std::size_t>();
    worst_verified = std::min(worst_verified, verified);
    worst_ratio = std::min(worst_ratio, ratio);
    calls_ok = calls_ok && calls;
    pass = pass && verified >= 0.95 && ratio >= 0.5 && calls;
  }
  return {pass, fmt::format("min verified accuracy {:.3f} (min 0.95), generator calls = accepted: {}, "
                            "min diversity ratio {:.3f} (min 0.5)",
                            worst_verified, calls_ok ? "yes" : "no", worst_ratio)};
}

Outcome determinism(const fs::path& a, const fs::path& b, const MixtureModel& m, const NoiseSchedule& s) {
  std::size_t compared = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differing;
      note("differs: " + e.path().filename().string());
    }
  }
  const std::size_t n = 2000;
  const auto p0 = build_pool(m, s, n, Sampler::ddpm, {}, 42, {0, "", 0});
  const auto p1 = build_pool(m, s, n, Sampler::ddpm, {}, 42, {1, "", 0});
  std::size_t agree = 0;
  for (std::size_t i = 0; i < p0.records.size(); ++i) agree += p0.records[i].label == p1.records[i].label;
  const double agreement = static_cast<double>(agree) / static_cast<double>(p0.records.size());
  return {differing == 0 && compared > 0 && agreement < 1.0,
          fmt::format("{} of {} CSVs byte-identical across runs with different worker counts; "
                      "ddpm label agreement across noise streams {:.3f} (must be < 1)",
                      compared - differing, compared, agreement)};
}

}  // namespace

int main() {
  try {
    const auto config = cli::load_config(kReference);
    const MixtureModel m = cli::build_mixture(config.mixture);
    const NoiseSchedule s = cli::build_schedule(config.schedule);
    const fs::path root = fs::temp_directory_path() / "latentlens_acceptance";

    const Outcome gate = gradient_gate();
    report(10, "gradient gate", gate);
    if (!gate.pass) {
      fmt::print("gradient gate failed; training-dependent criteria not evaluated\n");
      return 1;
    }
    report(1, "closed-form flows", closed_form_flows());
    report(2, "density transport identity", density_identity(m, s));
    report(3, "class transport", class_transport());

    const fs::path run_a = root / "run_a";
    const fs::path run_b = root / "run_b";
    setenv("LATENTLENS_WORKERS", "1", 1);
    run_pipeline(run_a);
    report(4, "separability trend", separability_trend(run_a));
    report(5, "cross-level heatmap", cross_level(run_a));
    report(6, "confidence curve", confidence_curve(run_a));
    report(7, "filtering gap", filtering_gap(run_a, config));
    report(8, "conditional generation", conditional_generation(run_a));

    setenv("LATENTLENS_WORKERS", "3", 1);
    run_pipeline(run_b);
    unsetenv("LATENTLENS_WORKERS");
    report(9, "determinism", determinism(run_a, run_b, m, s));
  } catch (const std::exception& e) {
    fmt::print("FAIL acceptance run aborted: {}\n", e.what());
    return 1;
  }
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
