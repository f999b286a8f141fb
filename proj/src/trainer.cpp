#include "seg4d/trainer.hpp"

#include "seg4d/error.hpp"
#include "seg4d/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace seg4d {

const char* to_string(SamplingMode m) { return m == SamplingMode::Streaming ? "streaming" : "random"; }

SamplingMode sampling_from_string(const std::string& s) {
  if (s == "streaming") return SamplingMode::Streaming;
  if (s == "random") return SamplingMode::Random;
  fail(ErrorKind::InvalidArgument, "unknown sampling mode '" + s + "'");
}

void TrainConfig::validate() const {
  require(samples_per_instance >= 2, ErrorKind::InvalidArgument, "samples_per_instance must be >= 2");
  require(!iterations || *iterations >= 0, ErrorKind::InvalidArgument, "iterations must be >= 0");
  require(epochs >= 1 && steps_per_frame >= 1, ErrorKind::InvalidArgument, "epochs and steps_per_frame must be >= 1");
  require(lr_start > lr_end && lr_end > 0.0, ErrorKind::InvalidArgument, "need lr_start > lr_end > 0");
  require(lambda_align >= 0.0 && lambda_semantic >= 0.0, ErrorKind::InvalidArgument, "loss weights must be >= 0");
  require(semantic_cutoff_fraction >= 0.0 && semantic_cutoff_fraction <= 1.0, ErrorKind::InvalidArgument,
          "semantic cutoff fraction outside [0,1]");
  require(!match_radius || *match_radius >= 0.0, ErrorKind::InvalidArgument, "match radius must be >= 0");
}

std::vector<StreamKey> build_stream(int views, int frames, SamplingMode mode, int epochs, std::mt19937_64& rng) {
  require(views >= 1 && frames >= 1 && epochs >= 0, ErrorKind::InvalidArgument, "stream needs views, frames >= 1");
  std::vector<StreamKey> keys;
  keys.reserve(static_cast<std::size_t>(views) * frames * epochs);
  for (int e = 0; e < epochs; ++e)
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < views; ++k) keys.push_back({(t + k) % views, t});
  if (mode == SamplingMode::Random) std::shuffle(keys.begin(), keys.end(), rng);
  return keys;
}

void optimizer_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                    const AdamParams& hp) {
  require(params.size() == grads.size(), ErrorKind::ShapeMismatch, "parameter and gradient sizes differ");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::ShapeMismatch,
          "optimizer state size differs from parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

double learning_rate(const TrainConfig& cfg, int step, int total_steps) {
  if (total_steps <= 1) return cfg.lr_start;
  const double u = static_cast<double>(step) / (total_steps - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, u);
}

std::vector<std::vector<MatchPair>> precompute_matches(const Scene& scene, const std::vector<double>& times,
                                                       double tau_vis, double r_max) {
  std::vector<std::vector<MatchPair>> out(times.size());
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const auto gone = find_disappearing(scene, times[k], times[k + 1], tau_vis);
    out[k] = match_pairs(scene, gone, times[k], times[k + 1], r_max, tau_vis);
  }
  return out;
}

StepInputs prepare_step(const Scene& scene, const Dataset& data, const StreamKey& key, const Eigen::MatrixXd& projection,
                        bool semantic_active, const std::vector<MatchPair>* pairs, int samples_per_instance,
                        std::mt19937_64& rng) {
  const auto idx = data.index(key.view, key.frame);
  const auto& cam = data.cameras[static_cast<std::size_t>(key.view)];
  const auto& mask = data.masks[idx];
  StepInputs in;
  in.render = render(scene, cam, data.times[static_cast<std::size_t>(key.frame)]);
  in.batch = build_batch(in.render.feature_map, mask, samples_per_instance, rng);
  if (semantic_active) {
    const FeatureMap sem = project_semantic(data.semantic[idx], projection);
    in.semantic_centers = semantic_centers(in.batch, mask, sem);
  }
  in.pairs = pairs;
  return in;
}

namespace {

std::vector<double> pull_to_primitives(const StepInputs& in, const ContrastiveResult& r, std::size_t n) {
  FeatureMap pixel_grads(in.render.height(), in.render.width(), in.render.feature_map.channels);
  scatter_sample_grads(in.batch, r, 1.0, pixel_grads);
  return backprop_features(in.render, pixel_grads, n);
}

}  // namespace

StepGradients step_gradients(const Scene& scene, const StepInputs& in, double lambda_align, double lambda_semantic) {
  const std::size_t n = scene.size();
  const std::size_t len = n * static_cast<std::size_t>(scene.feature_dim);
  StepGradients g;

  const auto cc = contrastive_loss(in.batch);
  g.loss_cc = cc.loss;
  g.cc = pull_to_primitives(in, cc, n);

  g.semantic.assign(len, 0.0);
  if (in.semantic_centers) {
    const auto sem = contrastive_objective(in.batch, *in.semantic_centers);
    g.loss_semantic = sem.loss;
    g.semantic = pull_to_primitives(in, sem, n);
  }

  g.align.assign(len, 0.0);
  if (in.pairs) {
    auto tr = tracking_loss(scene, *in.pairs);
    g.loss_align = tr.loss;
    g.align = std::move(tr.grads);
  }

  g.total.resize(len);
  for (std::size_t i = 0; i < len; ++i) g.total[i] = g.cc[i] + lambda_align * g.align[i] + lambda_semantic * g.semantic[i];
  g.loss_total = g.loss_cc + lambda_align * g.loss_align + lambda_semantic * g.loss_semantic;
  return g;
}

double step_total_loss(const Scene& scene, const Camera& cam, double t, const StepInputs& in, double lambda_align,
                       double lambda_semantic) {
  const auto out = render(scene, cam, t);
  const auto batch = resample(in.batch, out.feature_map);
  double loss = contrastive_loss(batch).loss;
  if (in.semantic_centers) loss += lambda_semantic * contrastive_objective(batch, *in.semantic_centers).loss;
  if (in.pairs) loss += lambda_align * tracking_loss(scene, *in.pairs).loss;
  return loss;
}

TrainResult train(const Scene& scene, const Dataset& data, const TrainConfig& cfg, const CheckpointFn& on_checkpoint) {
  cfg.validate();
  data.validate();
  scene.validate();

  TrainResult result;
  result.scene = scene;
  const int views = data.views(), frames = data.frames();
  const int per_epoch = views * frames * cfg.steps_per_frame;
  const int total = cfg.iterations.value_or(cfg.epochs * per_epoch);
  if (total == 0) return result;

  const bool semantic_on = cfg.use_semantic && cfg.lambda_semantic > 0.0 && data.has_semantic();
  const bool tracking_on = cfg.use_tracking && cfg.lambda_align > 0.0;
  const double lambda_align = tracking_on ? cfg.lambda_align : 0.0;
  const double lambda_semantic = semantic_on ? cfg.lambda_semantic : 0.0;

  Eigen::MatrixXd projection;
  if (semantic_on)
    projection = semantic_projection(scene.feature_dim, data.semantic.front().channels, cfg.projection_seed);

  std::vector<std::vector<MatchPair>> matches;
  if (tracking_on)
    matches = precompute_matches(scene, data.times, cfg.visibility_threshold,
                                 cfg.match_radius.value_or(default_match_radius(scene)));

  std::mt19937_64 stream_rng(derive_seed(cfg.seed, 0x57e4));
  std::mt19937_64 batch_rng(derive_seed(cfg.seed, 0xba7c));
  const int epochs_needed = (total + per_epoch - 1) / per_epoch;
  const auto stream = build_stream(views, frames, cfg.sampling, epochs_needed, stream_rng);
  const int semantic_steps = static_cast<int>(std::floor(cfg.semantic_cutoff_fraction * total));

  Scene& work = result.scene;
  std::vector<double> params = gather_features(work);
  int prev_frame = -1;
  result.log.reserve(static_cast<std::size_t>(total));

  for (int step = 0; step < total; ++step) {
    const StreamKey key = stream[static_cast<std::size_t>(step / cfg.steps_per_frame)];
    const bool transition = key.frame != prev_frame;
    prev_frame = key.frame;
    const std::vector<MatchPair>* pairs =
        (tracking_on && transition && key.frame + 1 < frames) ? &matches[static_cast<std::size_t>(key.frame)] : nullptr;

    const auto inputs = prepare_step(work, data, key, projection, semantic_on && step < semantic_steps, pairs,
                                     cfg.samples_per_instance, batch_rng);
    const auto grads = step_gradients(work, inputs, lambda_align, lambda_semantic);
    const double lr = learning_rate(cfg, step, total);

    if (!std::isfinite(grads.loss_total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (view " << key.view << ", frame " << key.frame
          << "): L_CC=" << grads.loss_cc << " L_align=" << grads.loss_align << " L_DINO=" << grads.loss_semantic;
      fail(ErrorKind::NonFinite, msg.str());
    }

    optimizer_step(params, grads.total, result.optimizer, lr);
    scatter_features(work, params);
    result.log.push_back({step, lr, grads.loss_cc, grads.loss_align, grads.loss_semantic, grads.loss_total, key.view, key.frame});

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      if (on_checkpoint) on_checkpoint(step + 1, work);
      if (!cfg.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        const std::string stem = cfg.checkpoint_dir + "/step_" + std::to_string(step + 1);
        save_scene(stem + ".scene", work);
        save_optimizer_state(stem + ".adam", result.optimizer);
      }
    }
  }
  return result;
}

std::string loss_log_csv(const std::vector<LossLogRow>& log) {
  std::string out = "step,lr,L_CC,L_align,L_DINO,L_total\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr, r.loss_cc, r.loss_align,
                  r.loss_semantic, r.loss_total);
    out += buf;
  }
  return out;
}

void save_optimizer_state(const std::string& path, const AdamState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os << "S4DADAM 1 " << state.m.size() << ' ' << state.step << '\n';
  os.write(reinterpret_cast<const char*>(state.m.data()), static_cast<std::streamsize>(state.m.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(state.v.data()), static_cast<std::streamsize>(state.v.size() * sizeof(double)));
  if (!os) fail(ErrorKind::Io, "failed writing " + path);
}

AdamState load_optimizer_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t n = 0;
  AdamState state;
  header >> magic >> version >> n >> state.step;
  if (!header || magic != "S4DADAM" || version != 1) fail(ErrorKind::Format, path + ": not an optimizer state file");
  state.m.resize(n);
  state.v.resize(n);
  is.read(reinterpret_cast<char*>(state.m.data()), static_cast<std::streamsize>(n * sizeof(double)));
  is.read(reinterpret_cast<char*>(state.v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) fail(ErrorKind::Format, path + ": truncated optimizer state");
  return state;
}

}  // namespace seg4d
