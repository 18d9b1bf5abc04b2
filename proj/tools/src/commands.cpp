#include "latentlens/cli/commands.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <tuple>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <latentlens/latentlens.hpp>

#include "latentlens/cli/artifacts.hpp"
#include "latentlens/cli/config.hpp"
#include "latentlens/cli/manifest.hpp"

#ifndef LATENTLENS_VERSION
#define LATENTLENS_VERSION "0.0.0"
#endif

namespace latentlens::cli {

const char* tool_version() { return LATENTLENS_VERSION; }

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised by `verify` after its report is written.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string command;
  fs::path config_path;
  fs::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> sampler;
  bool force = false;
};

struct Context {
  Options opts;
  ExperimentConfig config;
  std::string digest;
  MixtureModel mixture;
  NoiseSchedule schedule;
  RunManifest manifest;
  std::ostream& log;

  std::uint64_t seed() const { return config.master_seed; }
  fs::path path(const std::string& name) const { return opts.out_dir / name; }
};

using Outputs = std::vector<std::string>;

void write_text(const Context& ctx, Outputs& outputs, const std::string& name, std::string_view text) {
  write_file_atomic(ctx.path(name), text);
  outputs.push_back(name);
}

// Runs `body` unless the manifest says the stage is already done with this
// digest and seed. Failures are recorded before they propagate.
void run_stage(Context& ctx, const std::string& stage, const std::string& input, bool force,
               const std::function<Outputs()>& body) {
  if (!force && ctx.manifest.up_to_date(stage, ctx.digest, ctx.seed())) {
    fmt::print(ctx.log, "[{}] up to date, skipping\n", stage);
    return;
  }
  fmt::print(ctx.log, "[{}] running\n", stage);
  StageRecord rec;
  rec.digest = ctx.digest;
  rec.seed = ctx.seed();
  rec.started = utc_timestamp();
  auto fail = [&](const std::string& message) {
    rec.status = "failed";
    rec.finished = utc_timestamp();
    rec.message = message;
    ctx.manifest.record(stage, rec);
    ctx.manifest.save();
  };
  try {
    rec.outputs = body();
  } catch (const VerificationFailure& e) {
    rec.outputs = {"verify_report.json"};
    fail(e.what());
    throw;
  } catch (const std::exception& e) {
    fail(e.what());
    throw StageError(stage, input, e.what());
  }
  rec.status = "complete";
  rec.finished = utc_timestamp();
  ctx.manifest.record(stage, rec);
  ctx.manifest.save();
  fmt::print(ctx.log, "[{}] done ({} outputs)\n", stage, rec.outputs.size());
}

std::string pool_file(Sampler s) { return fmt::format("pool_{}.csv", to_string(s)); }

SeedPool ensure_pool(Context& ctx, bool force) {
  const Sampler sampler = ctx.config.pool.sampler;
  const std::string name = pool_file(sampler);
  const std::string stage = "pool_" + to_string(sampler);
  run_stage(ctx, stage, "config '" + ctx.opts.config_path.string() + "'", force, [&] {
    const auto& p = ctx.config.pool;
    BuildOptions build;
    build.noise_stream = p.noise_stream;
    build.config_digest = ctx.digest;
    SeedPool pool = build_pool(ctx.mixture, ctx.schedule, p.size, sampler, ctx.config.integrator,
                               ctx.seed(), build);
    Rng balance_rng = substream(ctx.seed(), Stream::balance, 0);
    pool = balance_pool(pool, balance_rng);
    pool = stratify(pool, p.levels);
    Rng split_rng = substream(ctx.seed(), Stream::split, 0);
    pool = split_train_test(pool, p.test_fraction, split_rng);
    save_pool(pool, ctx.path(name));
    const auto counts = label_counts(pool);
    fmt::print(ctx.log, "  {} records ({} excluded), {} per label after balancing\n",
               pool.records.size(), pool.provenance.excluded, counts.empty() ? 0 : counts.front());
    return Outputs{name, manifest_path(name).string()};
  });
  try {
    return load_pool(ctx.path(name));
  } catch (const std::exception& e) {
    throw StageError(stage, "pool file '" + ctx.path(name).string() + "'", e.what());
  }
}

Table matrix_table(const AccuracyMatrix& m) {
  Table t;
  t.columns = {"train_level", "test_level", "accuracy", "train_count", "test_count"};
  for (int i = 0; i < m.levels(); ++i) {
    for (int j = 0; j < m.levels(); ++j) {
      t.add({std::int64_t{i + 1}, std::int64_t{j + 1}, m.accuracy(i, j),
             static_cast<std::int64_t>(m.train_counts[static_cast<std::size_t>(i)]),
             static_cast<std::int64_t>(m.test_counts[static_cast<std::size_t>(j)])});
    }
  }
  return t;
}

Table heatmap_plot_table(const Table& matrix) {
  Table t;
  t.columns = {"row", "col", "value"};
  for (const auto& r : matrix.rows) t.add({r[0], r[1], r[2]});
  return t;
}

int cmd_pool(Context& ctx) {
  ensure_pool(ctx, ctx.opts.force);
  return kSuccess;
}

int cmd_heatmap(Context& ctx) {
  const SeedPool pool = ensure_pool(ctx, false);
  const std::string sampler = to_string(ctx.config.pool.sampler);
  run_stage(ctx, "heatmap_" + sampler, "pool file '" + pool_file(ctx.config.pool.sampler) + "'",
            ctx.opts.force, [&] {
              Outputs outputs;
              for (Trainer trainer : {Trainer::mlp, Trainer::lda}) {
                const AccuracyMatrix m =
                    cross_level_matrix(pool, trainer, ctx.config.mlp, ctx.seed());
                const Table table = matrix_table(m);
                const std::string stem = fmt::format("heatmap_{}_{}", sampler, to_string(trainer));
                write_text(ctx, outputs, stem + ".csv", to_csv(table));
                write_text(ctx, outputs, stem + ".svg",
                           emit_svg(PlotKind::heatmap, heatmap_plot_table(table),
                                    fmt::format("{} pool, {} latent classifier", sampler,
                                                to_string(trainer))));
                const int L = m.levels();
                fmt::print(ctx.log, "  {}: cell(1,1)={:.3f} cell({},{})={:.3f}\n",
                           to_string(trainer), m.accuracy(0, 0), L, L, m.accuracy(L - 1, L - 1));
              }
              return outputs;
            });
  return kSuccess;
}

std::string level_tag(int level) { return level == 0 ? "all" : fmt::format("level{:02d}", level); }

int cmd_structure(Context& ctx) {
  const SeedPool pool = ensure_pool(ctx, false);
  run_stage(ctx, "structure", "pool file '" + pool_file(ctx.config.pool.sampler) + "'",
            ctx.opts.force, [&] {
              Outputs outputs;
              StructureOptions options;
              options.test_fraction = ctx.config.structure.test_fraction;
              options.seed = ctx.seed();
              options.include_unconditional = true;
              options.silhouette_limit = ctx.config.structure.silhouette_limit;
              const Space spaces[] = {Space::seed, Space::sample};
              const StructureReport report = structure_sweep(pool, spaces, options);

              Table metrics;
              metrics.columns = {"level",        "space",          "count",         "lda_score",
                                 "pca_variance", "silhouette_lda", "silhouette_raw"};
              for (const auto& r : report.rows) {
                metrics.add({std::int64_t{r.level}, to_string(r.space),
                             static_cast<std::int64_t>(r.count), r.lda_score, r.pca_variance,
                             r.silhouette_lda, r.silhouette_raw});
                fmt::print(ctx.log, "  {:>6} {:<6} lda_score={:.3f} pca_variance={:.3f}\n",
                           level_tag(r.level), to_string(r.space), r.lda_score, r.pca_variance);
              }
              write_text(ctx, outputs, "structure_metrics.csv", to_csv(metrics));

              Table emb;
              emb.columns = {"index", "label", "level", "space", "method", "x", "y"};
              for (const auto& p : report.embeddings) {
                emb.add({p.index, std::int64_t{p.label}, std::int64_t{p.level}, to_string(p.space),
                         to_string(p.method), p.x, p.y});
              }
              write_text(ctx, outputs, "structure_embeddings.csv", to_csv(emb));

              Table coords;
              const int k = report.projections.empty()
                                ? 0
                                : static_cast<int>(report.projections.front().coords.size());
              coords.columns = {"index", "label", "level", "space"};
              for (int i = 0; i < k; ++i) coords.columns.push_back(fmt::format("c_{}", i));
              for (const auto& p : report.projections) {
                std::vector<Cell> row{p.index, std::int64_t{p.label}, std::int64_t{p.level},
                                      to_string(p.space)};
                for (int i = 0; i < k; ++i) row.emplace_back(p.coords[i]);
                coords.add(std::move(row));
              }
              write_text(ctx, outputs, "structure_lda_coords.csv", to_csv(coords));

              // One scatter per stratified level, space and embedding method.
              std::map<std::tuple<int, Space, BasisKind>, Table> scatters;
              for (const auto& p : report.embeddings) {
                if (p.level == 0) continue;
                Table& t = scatters[{p.level, p.space, p.method}];
                if (t.columns.empty()) t.columns = {"x", "y", "label"};
                t.add({p.x, p.y, std::int64_t{p.label}});
              }
              for (const auto& [key, table] : scatters) {
                const auto& [level, space, method] = key;
                const std::string name =
                    fmt::format("structure_{}_{}_{}.svg", to_string(space), level_tag(level),
                                method == BasisKind::lda ? "lda" : "raw");
                write_text(ctx, outputs, name,
                           emit_svg(PlotKind::scatter, table,
                                    fmt::format("{} space, level {}, {} embedding", to_string(space),
                                                level, to_string(method))));
              }

              // Lowest-confidence seeds through the level-1 fit.
              const int L = num_levels(pool);
              const auto top = select_records(pool, 1);
              const auto bottom = select_records(pool, L);
              const OverlayResult ov =
                  overlay(labeled_points(top, Space::seed, pool.num_classes),
                          labeled_points(bottom, Space::seed, pool.num_classes));
              Table ovt;
              ovt.columns = {"set", "index", "label", "x", "y", "margin"};
              Table plot;
              plot.columns = {"x", "y", "label", "hollow"};
              auto add_set = [&](const char* set, const std::vector<SeedRecord>& recs,
                                 const Matrix& e, const std::vector<double>& margins, int hollow) {
                for (std::size_t i = 0; i < recs.size(); ++i) {
                  const auto r = static_cast<Eigen::Index>(i);
                  ovt.add({std::string(set), recs[i].index, std::int64_t{recs[i].label}, e(r, 0),
                           e(r, 1), margins[i]});
                  plot.add({e(r, 0), e(r, 1), std::int64_t{recs[i].label}, std::int64_t{hollow}});
                }
              };
              add_set("reference", top, ov.reference_embedding, ov.reference_margins, 0);
              add_set("overlay", bottom, ov.overlay_embedding, ov.overlay_margins, 1);
              write_text(ctx, outputs, "overlay.csv", to_csv(ovt));

              Table summary;
              summary.columns = {"set", "min", "q1", "median", "q3", "max", "mean", "count"};
              for (const auto& [set, s] :
                   {std::pair{"reference", ov.reference_summary}, {"overlay", ov.overlay_summary}}) {
                summary.add({std::string(set), s.min, s.q1, s.median, s.q3, s.max, s.mean,
                             static_cast<std::int64_t>(s.count)});
              }
              write_text(ctx, outputs, "overlay_summary.csv", to_csv(summary));
              write_text(ctx, outputs, "overlay.svg",
                         emit_svg(PlotKind::scatter, plot,
                                  fmt::format("level {} seeds (open) on the level-1 embedding", L)));
              fmt::print(ctx.log, "  overlay: median margin level {} = {:.3f}, level-1 q1 = {:.3f}\n",
                         L, ov.overlay_summary.median, ov.reference_summary.q1);
              return outputs;
            });
  return kSuccess;
}

// The latent regressor trained on the highest-confidence training seeds.
MlpModel level1_regressor(const Context& ctx, const SeedPool& pool) {
  const auto records = select_records(pool, 1, Split::train);
  Rng rng = substream(ctx.seed(), Stream::training, 0, /*salt=*/1);
  return train_mlp(records, pool.num_classes, Head::regressor, ctx.config.mlp, rng).model;
}

int cmd_predict(Context& ctx) {
  const SeedPool pool = ensure_pool(ctx, false);
  run_stage(ctx, "predict", "pool file '" + pool_file(ctx.config.pool.sampler) + "'",
            ctx.opts.force, [&] {
              Outputs outputs;
              const MlpModel g = level1_regressor(ctx, pool);
              const ProbabilityFlow flow(ctx.mixture, ctx.schedule, ctx.config.integrator);
              const ConfidenceCurve curve = accuracy_vs_confidence(
                  g, flow, ctx.config.predict.fresh, ctx.config.predict.bins, ctx.seed());
              Table t;
              t.columns = {"bin", "bin_low", "bin_high", "mean_confidence", "accuracy", "count"};
              Table plot;
              plot.columns = {"x", "y", "count"};
              std::vector<double> index;
              std::vector<double> acc;
              for (std::size_t i = 0; i < curve.bins.size(); ++i) {
                const auto& b = curve.bins[i];
                t.add({static_cast<std::int64_t>(i + 1), b.low, b.high, b.mean_confidence,
                       b.accuracy, static_cast<std::int64_t>(b.count)});
                plot.add({b.mean_confidence, b.accuracy, static_cast<std::int64_t>(b.count)});
                index.push_back(static_cast<double>(i + 1));
                acc.push_back(b.accuracy);
              }
              write_text(ctx, outputs, "confidence_curve.csv", to_csv(t));
              write_text(ctx, outputs, "confidence_curve.svg",
                         emit_svg(PlotKind::curve, plot, "accuracy vs predicted confidence"));
              const double rho = spearman(index, acc);
              const json meta = {{"fresh", curve.fresh},
                                 {"bins", curve.bins.size()},
                                 {"merged", curve.merged},
                                 {"overall_accuracy", curve.overall_accuracy},
                                 {"spearman_bin_accuracy", rho}};
              write_text(ctx, outputs, "confidence_curve.json", meta.dump(2) + "\n");
              fmt::print(ctx.log, "  {} bins, overall accuracy {:.3f}, spearman {:.3f}\n",
                         curve.bins.size(), curve.overall_accuracy, rho);
              return outputs;
            });
  return kSuccess;
}

int cmd_condgen(Context& ctx) {
  const SeedPool pool = ensure_pool(ctx, false);
  run_stage(ctx, "condgen", "pool file '" + pool_file(ctx.config.pool.sampler) + "'",
            ctx.opts.force, [&] {
              Outputs outputs;
              const auto& cg = ctx.config.condgen;
              const MlpModel g = level1_regressor(ctx, pool);
              const ProbabilityFlow flow(ctx.mixture, ctx.schedule, ctx.config.integrator);
              const std::vector<double> thresholds =
                  cg.threshold ? std::vector<double>(static_cast<std::size_t>(pool.num_classes),
                                                     *cg.threshold)
                               : level_boundary(pool, 1);
              Table samples;
              samples.columns = {"target", "draw_index", "predicted_margin", "verified_label",
                                 "verified_confidence"};
              for (int i = 0; i < pool.dim; ++i) samples.columns.push_back(fmt::format("x_{}", i));
              json classes = json::array();
              for (int c = 0; c < pool.num_classes; ++c) {
                FilterPolicy policy;
                policy.target = c;
                policy.threshold = thresholds[static_cast<std::size_t>(c)];
                policy.max_draws = cg.max_draws;
                CondGenResult result;
                try {
                  result = generate_conditional(flow, g, policy, cg.per_class,
                                                substream_key(ctx.seed(), Stream::filter, c));
                } catch (const Error& e) {
                  throw Error(fmt::format("class {} (threshold {:.6f}): {}", c, policy.threshold,
                                          e.what()));
                }
                for (const auto& s : result.samples) {
                  std::vector<Cell> row{std::int64_t{c}, static_cast<std::int64_t>(s.draw_index),
                                        s.predicted_margin, std::int64_t{s.verified_label},
                                        s.verified_confidence};
                  for (Eigen::Index i = 0; i < s.sample.size(); ++i) row.emplace_back(s.sample[i]);
                  samples.add(std::move(row));
                }
                Rng data_rng = substream(ctx.seed(), Stream::data, static_cast<std::uint64_t>(c));
                const double reference =
                    cg.per_class >= 2
                        ? diversity(ctx.mixture.sample_class(data_rng, c, cg.per_class))
                        : 0.0;
                const auto& r = result.report;
                classes.push_back({{"target", r.target},
                                   {"threshold", r.threshold},
                                   {"n_requested", r.n_requested},
                                   {"n_drawn", r.n_drawn},
                                   {"n_accepted", r.n_accepted},
                                   {"acceptance_rate", r.acceptance_rate},
                                   {"verified_accuracy", r.verified_accuracy},
                                   {"diversity", r.diversity},
                                   {"unconditional_diversity", reference},
                                   {"generator_calls", r.generator_calls}});
                fmt::print(ctx.log,
                           "  class {}: {} accepted of {} drawn, verified {:.3f}, diversity "
                           "{:.3f} (unconditional {:.3f})\n",
                           c, r.n_accepted, r.n_drawn, r.verified_accuracy, r.diversity, reference);
              }
              write_text(ctx, outputs, "condgen_samples.csv", to_csv(samples));
              write_text(ctx, outputs, "condgen_report.json",
                         json{{"classes", classes}}.dump(2) + "\n");
              return outputs;
            });
  return kSuccess;
}

struct Check {
  std::string name;
  double value;
  double limit;
  bool gated;
  bool pass() const { return !gated || value <= limit; }
};

int cmd_verify(Context& ctx) {
  const std::string input = "config '" + ctx.opts.config_path.string() + "'";
  std::vector<Check> checks;
  json info = json::object();
  run_stage(ctx, "verify", input, ctx.opts.force, [&] {
    const IntegratorSpec spec = ctx.config.integrator;
    const int d = ctx.mixture.dim();

    // Standard-normal data: the velocity vanishes identically.
    {
      const MixtureModel normal({{1.0, Vector::Zero(d), Matrix::Identity(d, d), 0}}, 1);
      const ProbabilityFlow flow(normal, ctx.schedule, spec);
      Rng rng = substream(ctx.seed(), Stream::data, 0, /*salt=*/1);
      double err = 0.0;
      for (int i = 0; i < 8; ++i) {
        const Vector x = standard_normal(rng, d);
        const auto fwd = flow.forward(x, PathDetail::endpoints);
        err = std::max({err, (fwd.final_state() - x).cwiseAbs().maxCoeff(), std::abs(fwd.logdet)});
        err = std::max(err, (flow.generate(x) - x).cwiseAbs().maxCoeff());
      }
      checks.push_back({"identity_flow_error", err, 1e-10, true});
    }
    const NoiseSchedule unit = NoiseSchedule::constant(1.0, 1.0);
    // Unit-covariance data drifts rigidly by (sqrt(alpha_bar) - 1) mu.
    {
      const Vector mu = (Vector(2) << 3.0, 0.0).finished();
      const MixtureModel shifted({{1.0, mu, Matrix::Identity(2, 2), 0}}, 1);
      const Vector x = (Vector(2) << 0.7, -1.3).finished();
      const Vector y = integrate_forward(shifted, unit, x, spec).final_state();
      const Vector expected = x - (1.0 - std::exp(-0.5)) * mu;
      checks.push_back({"translation_error", (y - expected).norm(), 1e-6, true});
    }
    // N(0, 4I) contracts by sqrt(4 alpha_bar + 1 - alpha_bar) / 2.
    {
      const MixtureModel wide({{1.0, Vector::Zero(2), 4.0 * Matrix::Identity(2, 2), 0}}, 1);
      const double ab = std::exp(-1.0);
      const double factor = std::sqrt(4.0 * ab + 1.0 - ab) / 2.0;
      const Vector x = (Vector(2) << 1.1, 0.4).finished();
      const auto traj = integrate_forward(wide, unit, x, spec);
      checks.push_back({"scaling_factor_error", (traj.final_state() - factor * x).norm() / x.norm(),
                        1e-5, true});
      checks.push_back({"scaling_logdet_error", std::abs(traj.logdet - 2.0 * std::log(factor)),
                        1e-5, true});
    }
    // Density transport along the configured mixture.
    {
      Rng rng = substream(ctx.seed(), Stream::data, 0, /*salt=*/2);
      const Matrix points = ctx.mixture.sample(rng, ctx.config.verify.points).points;
      const ProbabilityFlow fine(ctx.mixture, ctx.schedule, {Method::rk4, ctx.config.verify.steps});
      const ProbabilityFlow flow(ctx.mixture, ctx.schedule, spec);
      double worst = 0.0;
      double displacement = 0.0;
      double roundtrip = 0.0;
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Vector x = points.row(i).transpose();
        worst = std::max(worst, verify_density_transport(fine, x).abs_err);
        const Vector z = flow.forward(x, PathDetail::endpoints, false).final_state();
        displacement += (z - x).norm();
        roundtrip = std::max(roundtrip, (flow.generate(z) - x).norm());
      }
      checks.push_back({"density_identity_error", worst, ctx.config.verify.tolerance, true});
      info["mean_forward_displacement"] = displacement / static_cast<double>(points.rows());
      info["max_roundtrip_error"] = roundtrip;
    }
    {
      Rng rng = substream(ctx.seed(), Stream::data, 0, /*salt=*/3);
      const ClassTransportReport t =
          verify_class_transport(ctx.mixture, ctx.schedule, ctx.config.verify.transport_samples,
                                 rng, spec);
      info["roundtrip_class_agreement"] = t.roundtrip_class_agreement;
      info["latent_nn_purity"] = t.latent_nn_purity;
    }

    json jchecks = json::array();
    bool ok = true;
    for (const auto& c : checks) {
      ok = ok && c.pass();
      jchecks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit},
                         {"pass", c.pass()}});
      fmt::print(ctx.log, "  {:<26} {:.3e} (limit {:.0e}) {}\n", c.name, c.value, c.limit,
                 c.pass() ? "ok" : "FAILED");
    }
    for (const auto& [k, v] : info.items()) {
      fmt::print(ctx.log, "  {:<26} {:.6g}\n", k, v.get<double>());
    }
    write_file_atomic(ctx.path("verify_report.json"),
                      json{{"checks", jchecks}, {"informational", info}, {"pass", ok}}.dump(2) + "\n");
    if (!ok) throw VerificationFailure("one or more checks exceeded their limits");
    return Outputs{"verify_report.json"};
  });
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opts;
  CLI::App app{"Latent-space analysis of deterministic diffusion on Gaussian mixtures", "latentlens"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--config", opts.config_path, "Experiment configuration (TOML)")->required();
  app.add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", opts.seed, "Override the master seed");
  app.add_option("--sampler", opts.sampler, "Override the pool sampler")
      ->check(CLI::IsMember({"ddim", "ddpm"}));
  app.add_flag("--force", opts.force, "Re-run the stage even if it is up to date");
  const std::pair<const char*, const char*> commands[] = {
      {"pool", "Build, balance, stratify and split the seed pool"},
      {"heatmap", "Cross-level accuracy matrices for the MLP and LDA latent classifiers"},
      {"structure", "Separability metrics, embeddings and the low-confidence overlay"},
      {"predict", "Latent regressor and accuracy versus predicted confidence"},
      {"condgen", "Conditional generation by latent filtering"},
      {"verify", "Closed-form flow checks and the density transport identity"}};
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->callback([&opts, n = name] { opts.command = n; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help / --version
      if (dynamic_cast<const CLI::CallForVersion*>(&e)) {
        out << tool_version() << '\n';
      } else {
        out << app.help();
      }
      return kSuccess;
    }
    err << "latentlens: usage: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    ExperimentConfig config = load_config(opts.config_path);
    if (opts.seed) config.master_seed = *opts.seed;
    if (opts.sampler) config.pool.sampler = parse_sampler(*opts.sampler);
    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    if (ec) {
      throw ConfigError("--out", fmt::format("cannot create '{}': {}", opts.out_dir.string(),
                                             ec.message()));
    }
    Context ctx{opts,
                config,
                config_digest(config),
                build_mixture(config.mixture),
                build_schedule(config.schedule),
                RunManifest::load(opts.out_dir),
                out};
    ctx.manifest.tool_version = tool_version();
    ctx.manifest.config_digest = ctx.digest;
    ctx.manifest.master_seed = config.master_seed;
    fmt::print(out, "latentlens {} {}: config digest {}, master seed {}\n", tool_version(),
               opts.command, ctx.digest, config.master_seed);

    if (opts.command == "pool") return cmd_pool(ctx);
    if (opts.command == "heatmap") return cmd_heatmap(ctx);
    if (opts.command == "structure") return cmd_structure(ctx);
    if (opts.command == "predict") return cmd_predict(ctx);
    if (opts.command == "condgen") return cmd_condgen(ctx);
    return cmd_verify(ctx);
  } catch (const VerificationFailure& e) {
    err << "latentlens: stage 'verify' failed on config '" << opts.config_path.string()
        << "': " << e.what() << '\n';
    return kVerificationFailure;
  } catch (const ConfigError& e) {
    err << "latentlens: " << e.what() << " (in '" << opts.config_path.string() << "')\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "latentlens: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace latentlens::cli
