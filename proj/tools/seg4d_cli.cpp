// seg4d command line: synth, train, segment, eval, edit, render, sweep, ablate.

#include "seg4d/error.hpp"
#include "seg4d/harness.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace seg4d;

namespace {

enum ExitCode {
  kOk = 0,
  kInternal = 1,
  kUnknownFlag = 2,
  kMissingOption = 3,
  kBadOptionValue = 4,
  kIo = 5,  // missing or unreadable input files
  kFormat = 6,
  kInvalidArgument = 7,
  kShapeMismatch = 8,
  kNonFinite = 9,
  kClustering = 10,
  kUnknownLabel = 11,
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return kIo;
    case ErrorKind::Format: return kFormat;
    case ErrorKind::InvalidArgument: return kInvalidArgument;
    case ErrorKind::ShapeMismatch: return kShapeMismatch;
    case ErrorKind::NonFinite: return kNonFinite;
    case ErrorKind::Clustering: return kClustering;
    case ErrorKind::UnknownLabel: return kUnknownLabel;
  }
  return kInternal;
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
  return s;
}

SceneSpec resolve_spec(const std::string& name) {
  if (fs::is_regular_file(name)) return spec_from_json(read_text(name));
  return SceneSpec::named(name);
}

std::string map_name(const char* prefix, int v, int t, const char* ext) {
  return std::string(prefix) + "_v" + std::to_string(v) + "_t" + std::to_string(t) + ext;
}

struct TrainFlags {
  std::string sampling;
  std::optional<double> lambda1, lambda2;
  bool no_tracking = false, no_dino = false, no_motion = false;
  std::optional<int> epochs, iterations, steps_per_frame, samples, checkpoint_every;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--sampling", sampling, "streaming | random")->check(CLI::IsMember({"streaming", "random"}));
    app->add_option("--lambda1", lambda1, "tracking loss weight");
    app->add_option("--lambda2", lambda2, "semantic loss weight");
    app->add_flag("--no-tracking", no_tracking, "disable the tracking term");
    app->add_flag("--no-dino", no_dino, "disable the semantic term");
    app->add_flag("--no-motion", no_motion, "zero velocities and widen temporal windows before training");
    app->add_option("--epochs", epochs, "passes over the stream");
    app->add_option("--iterations", iterations, "total optimizer steps (overrides epochs)");
    app->add_option("--steps-per-frame", steps_per_frame, "consecutive steps per (view, frame) key");
    app->add_option("--samples", samples, "pixels sampled per instance");
    app->add_option("--checkpoint-every", checkpoint_every, "write a checkpoint every k steps");
    app->add_option("--seed", seed, "global seed");
  }

  void apply(ExperimentConfig& cfg) const {
    if (seed) {
      const auto keep = cfg.spec;
      cfg.reseed(*seed);
      cfg.spec = keep;
    }
    if (!sampling.empty()) cfg.train.sampling = sampling_from_string(sampling);
    if (lambda1) cfg.train.lambda_align = *lambda1;
    if (lambda2) cfg.train.lambda_semantic = *lambda2;
    if (no_tracking) cfg.train.use_tracking = false;
    if (no_dino) cfg.train.use_semantic = false;
    if (no_motion) cfg.no_motion = true;
    if (epochs) cfg.train.epochs = *epochs;
    if (iterations) cfg.train.iterations = *iterations;
    if (steps_per_frame) cfg.train.steps_per_frame = *steps_per_frame;
    if (samples) cfg.train.samples_per_instance = *samples;
    if (checkpoint_every) cfg.train.checkpoint_every = *checkpoint_every;
  }
};

struct ClusterFlags {
  std::optional<double> rate, epsilon, tau_sim;
  std::optional<int> min_samples, min_cluster_size;
  std::optional<std::uint64_t> seed;
  bool raw = false;

  void add(CLI::App* app) {
    app->add_option("--R", rate, "subset rate in (0, 1]");
    app->add_option("--M", min_samples, "hdbscan min_samples");
    app->add_option("--E", epsilon, "cluster selection epsilon");
    app->add_option("--tau-sim", tau_sim, "filter similarity threshold");
    app->add_option("--min-cluster-size", min_cluster_size, "hdbscan min_cluster_size");
    app->add_option("--cluster-seed", seed, "subset sampling seed");
    app->add_flag("--raw-features", raw, "cluster raw rather than unit-length features");
  }

  void apply(ClusterParams& p) const {
    if (rate) p.subset_rate = *rate;
    if (min_samples) p.min_samples = *min_samples;
    if (epsilon) p.selection_epsilon = *epsilon;
    if (tau_sim) p.tau_sim = *tau_sim;
    if (min_cluster_size) p.min_cluster_size = *min_cluster_size;
    if (seed) p.seed = *seed;
    if (raw) p.normalize = false;
  }
};

void print_metrics(const MetricReport& m) {
  std::printf("%s\n%s\n", MetricReport::csv_header().c_str(), m.csv_row().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D instance segmentation from per-image masks with spatiotemporal feature splats"};
  app.require_subcommand(1);
  const std::string cmdline = command_line(argc, argv);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_spec = "default", synth_out;
  std::uint64_t synth_seed = 1;
  synth->add_option("--spec", synth_spec, "named spec (default, two-instance) or spec JSON file");
  synth->add_option("--seed", synth_seed, "generation seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "optimize primitive features");
  std::string train_data, train_out, train_config;
  TrainFlags tflags;
  train_cmd->add_option("--data", train_data, "dataset directory from synth")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--config", train_config, "experiment config JSON");
  tflags.add(train_cmd);

  // segment
  auto* seg_cmd = app.add_subcommand("segment", "cluster trained primitives into instances");
  std::string seg_scene, seg_out;
  ClusterFlags cflags;
  seg_cmd->add_option("--scene", seg_scene, "trained scene file")->required();
  seg_cmd->add_option("--out", seg_out, "output directory")->required();
  cflags.add(seg_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score rendered instance masks against ground truth");
  std::string ev_scene, ev_labels, ev_data, ev_out;
  double ev_tau = raster::kForegroundAlpha;
  eval_cmd->add_option("--scene", ev_scene, "trained scene file")->required();
  eval_cmd->add_option("--labels", ev_labels, "labels.csv from segment")->required();
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
  eval_cmd->add_option("--out", ev_out, "output directory for metrics.json / metrics.csv");
  eval_cmd->add_option("--tau-fg", ev_tau, "foreground alpha threshold");

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "remove, duplicate or extract one instance");
  std::string ed_scene, ed_labels, ed_op, ed_out;
  int ed_label = -1;
  std::vector<double> ed_offset{0.0, 0.0, 0.0};
  edit_cmd->add_option("--scene", ed_scene, "scene file")->required();
  edit_cmd->add_option("--labels", ed_labels, "labels.csv")->required();
  edit_cmd->add_option("--label", ed_label, "cluster label")->required();
  edit_cmd->add_option("--op", ed_op, "remove | duplicate | extract")
      ->required()
      ->check(CLI::IsMember({"remove", "duplicate", "extract"}));
  edit_cmd->add_option("--offset", ed_offset, "duplicate offset x,y,z")->delimiter(',')->expected(3);
  edit_cmd->add_option("--out", ed_out, "output directory")->required();

  // render
  auto* render_cmd = app.add_subcommand("render", "PCA feature images and label images");
  std::string rd_scene, rd_data, rd_labels, rd_out;
  double rd_tau = raster::kForegroundAlpha;
  render_cmd->add_option("--scene", rd_scene, "scene file")->required();
  render_cmd->add_option("--data", rd_data, "dataset directory (cameras and times)")->required();
  render_cmd->add_option("--labels", rd_labels, "labels.csv; adds label images");
  render_cmd->add_option("--out", rd_out, "output directory")->required();
  render_cmd->add_option("--tau-fg", rd_tau, "foreground alpha threshold");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "segment + eval over an (R, M, E) grid");
  std::string sw_scene, sw_data, sw_out;
  std::vector<double> sw_rates{0.02, 0.05, 0.1}, sw_eps{0.0, 0.05, 0.1};
  std::vector<int> sw_ms{5, 10, 20};
  double sw_tau = raster::kForegroundAlpha;
  std::uint64_t sw_seed = 1;
  sweep_cmd->add_option("--scene", sw_scene, "trained scene file")->required();
  sweep_cmd->add_option("--data", sw_data, "dataset directory")->required();
  sweep_cmd->add_option("--R", sw_rates, "subset rates")->delimiter(',');
  sweep_cmd->add_option("--M", sw_ms, "min_samples values")->delimiter(',');
  sweep_cmd->add_option("--E", sw_eps, "selection epsilons")->delimiter(',');
  sweep_cmd->add_option("--seed", sw_seed, "subset sampling seed");
  sweep_cmd->add_option("--tau-fg", sw_tau, "foreground alpha threshold");
  sweep_cmd->add_option("--out", sw_out, "CSV output path (stdout when omitted)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the component ablation arms on one dataset");
  std::string ab_spec = "default", ab_data, ab_out, ab_config;
  TrainFlags aflags;
  ablate_cmd->add_option("--spec", ab_spec, "named spec or spec JSON file");
  ablate_cmd->add_option("--data", ab_data, "dataset directory instead of generating one");
  ablate_cmd->add_option("--config", ab_config, "experiment config JSON");
  ablate_cmd->add_option("--out", ab_out, "CSV output path (stdout when omitted)");
  aflags.add(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e) == 0) return kOk;
    if (dynamic_cast<const CLI::ExtrasError*>(&e)) return kUnknownFlag;
    if (dynamic_cast<const CLI::RequiredError*>(&e)) return kMissingOption;
    return kBadOptionValue;
  }

  try {
    if (synth->parsed()) {
      SceneSpec spec = resolve_spec(synth_spec);
      spec.seed = synth_seed;
      const auto data = generate_dataset(spec);
      write_dataset(synth_out, data.dataset);
      save_scene((fs::path(synth_out) / "scene.s4d").string(), data.scene);
      write_text((fs::path(synth_out) / "spec.json").string(), spec_to_json(spec) + "\n");
      const std::string sum = directory_checksum(synth_out);
      write_manifest(synth_out, cmdline, spec_to_json(spec),
                     {{"checksum", sum}});
      std::printf("checksum %s\n", sum.c_str());
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = train_config.empty() ? ExperimentConfig::defaults()
                                                  : ExperimentConfig::from_json(read_text(train_config));
      tflags.apply(cfg);
      cfg.dataset_dir = train_data;
      cfg.output_dir = train_out;
      if (cfg.train.checkpoint_every > 0 && cfg.train.checkpoint_dir.empty())
        cfg.train.checkpoint_dir = (fs::path(train_out) / "checkpoints").string();
      cfg.validate();
      const Dataset data = read_dataset(train_data);
      Scene scene = load_scene((fs::path(train_data) / "scene.s4d").string());
      if (cfg.no_motion) scene = strip_motion(scene);
      const auto result = train(scene, data, cfg.train);
      fs::create_directories(train_out);
      save_scene((fs::path(train_out) / "trained.s4d").string(), result.scene);
      write_text((fs::path(train_out) / "loss_log.csv").string(), loss_log_csv(result.log));
      save_optimizer_state((fs::path(train_out) / "optimizer.adam").string(), result.optimizer);
      write_text((fs::path(train_out) / "config.json").string(), cfg.to_json() + "\n");
      write_manifest(train_out, cmdline, cfg.to_json());
      if (!result.log.empty())
        std::printf("steps %zu final L_total %.6g\n", result.log.size(), result.log.back().loss_total);
    } else if (seg_cmd->parsed()) {
      ClusterParams params;
      cflags.apply(params);
      const Scene scene = load_scene(seg_scene);
      const auto res = segment(scene, params);
      fs::create_directories(seg_out);
      write_text((fs::path(seg_out) / "labels.csv").string(), labels_csv(res.labels));
      write_text((fs::path(seg_out) / "clusters.json").string(), cluster_summary_json(res, params) + "\n");
      write_manifest(seg_out, cmdline, cluster_params_json(params));
      std::printf("clusters %d\n", res.cluster_count());
    } else if (eval_cmd->parsed()) {
      const Scene scene = load_scene(ev_scene);
      const auto res = result_from_labels(scene, labels_from_csv(read_text(ev_labels)));
      const Dataset data = read_dataset(ev_data);
      const auto m = evaluate_scene(scene, res, data, ev_tau);
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        write_text((fs::path(ev_out) / "metrics.json").string(), m.to_json() + "\n");
        write_text((fs::path(ev_out) / "metrics.csv").string(), MetricReport::csv_header() + "\n" + m.csv_row() + "\n");
      }
      print_metrics(m);
    } else if (edit_cmd->parsed()) {
      const Scene scene = load_scene(ed_scene);
      const auto res = result_from_labels(scene, labels_from_csv(read_text(ed_labels)));
      const EditOp op{edit_from_string(ed_op), Vec3(ed_offset[0], ed_offset[1], ed_offset[2])};
      const auto out = edit(scene, res, ed_label, op);
      fs::create_directories(ed_out);
      save_scene((fs::path(ed_out) / "scene.s4d").string(), out.scene);
      write_text((fs::path(ed_out) / "labels.csv").string(), labels_csv(out.labels));
      write_manifest(ed_out, cmdline, "");
      std::printf("primitives %zu\n", out.scene.size());
    } else if (render_cmd->parsed()) {
      const Scene scene = load_scene(rd_scene);
      const Dataset data = read_dataset(rd_data);
      std::vector<int> labels;
      if (!rd_labels.empty()) labels = result_from_labels(scene, labels_from_csv(read_text(rd_labels))).render_labels();
      std::vector<RenderOutput> renders;
      for (int v = 0; v < data.views(); ++v)
        for (int t = 0; t < data.frames(); ++t)
          renders.push_back(render(scene, data.cameras[static_cast<std::size_t>(v)], data.times[static_cast<std::size_t>(t)]));
      const PcaBasis basis = fit_pca(renders, rd_tau);
      fs::create_directories(rd_out);
      for (int v = 0; v < data.views(); ++v)
        for (int t = 0; t < data.frames(); ++t) {
          const auto& r = renders[data.index(v, t)];
          write_ppm((fs::path(rd_out) / map_name("pca", v, t, ".ppm")).string(), pca_to_rgb(r, basis, rd_tau));
          if (!labels.empty())
            write_ppm((fs::path(rd_out) / map_name("labels", v, t, ".ppm")).string(),
                      label_map_to_rgb(labels_from_render(r, labels, rd_tau)));
        }
      write_manifest(rd_out, cmdline, "");
      std::printf("images %zu\n", renders.size() * (labels.empty() ? 1 : 2));
    } else if (sweep_cmd->parsed()) {
      const Scene scene = load_scene(sw_scene);
      const Dataset data = read_dataset(sw_data);
      ClusterParams base;
      base.seed = sw_seed;
      const auto rows = sweep(scene, data, base, sw_rates, sw_ms, sw_eps, sw_tau);
      const std::string csv = sweep_csv(rows);
      if (sw_out.empty()) std::cout << csv;
      else write_text(sw_out, csv);
    } else if (ablate_cmd->parsed()) {
      ExperimentConfig cfg = ab_config.empty() ? ExperimentConfig::defaults()
                                               : ExperimentConfig::from_json(read_text(ab_config));
      if (ab_config.empty()) {
        cfg.spec = resolve_spec(ab_spec);
        cfg.reseed(aflags.seed.value_or(1));
      }
      aflags.apply(cfg);
      cfg.dataset_dir = ab_data;
      const auto rows = ablate(cfg);
      const std::string csv = ablation_csv(rows);
      if (ab_out.empty()) std::cout << csv;
      else write_text(ab_out, csv);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
  return kOk;
}
