#pragma once

#include "seg4d/contrastive.hpp"
#include "seg4d/core_model.hpp"
#include "seg4d/dataset.hpp"
#include "seg4d/rasterizer.hpp"
#include "seg4d/regularizers.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace seg4d {

enum class SamplingMode { Streaming, Random };

const char* to_string(SamplingMode m);
SamplingMode sampling_from_string(const std::string& s);

struct TrainConfig {
  int samples_per_instance = 64;
  std::optional<int> iterations;  // total optimizer steps; unset = epochs * views * frames * steps_per_frame
  int epochs = 2;
  int steps_per_frame = 4;
  double lr_start = 2.5e-3;
  double lr_end = 2e-6;
  double lambda_align = 100.0;
  double lambda_semantic = 500.0;
  double semantic_cutoff_fraction = 0.3;
  bool use_tracking = true;
  bool use_semantic = true;
  double visibility_threshold = kDefaultVisibility;
  std::optional<double> match_radius;  // unset = 3 x median primitive scale
  SamplingMode sampling = SamplingMode::Streaming;
  std::uint64_t seed = 1;
  std::uint64_t projection_seed = 7;
  int checkpoint_every = 0;  // 0 disables checkpoint callbacks
  std::string checkpoint_dir;  // when set, checkpoints are also written here

  void validate() const;
};

struct StreamKey {
  int view = 0;
  int frame = 0;
  bool operator==(const StreamKey&) const = default;
};

/// Streaming: each epoch visits frames in order with all views per frame.
/// Random: a uniform shuffle of the same multiset of keys.
std::vector<StreamKey> build_stream(int views, int frames, SamplingMode mode, int epochs, std::mt19937_64& rng);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void optimizer_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                    const AdamParams& hp = {});

/// Exponential interpolation from lr_start (step 0) to lr_end (last step).
double learning_rate(const TrainConfig& cfg, int step, int total_steps);

/// Match pairs between consecutive dataset times, computed once since
/// geometry is frozen. Entry k pairs frame k with frame k + 1; the last is empty.
std::vector<std::vector<MatchPair>> precompute_matches(const Scene& scene, const std::vector<double>& times,
                                                       double tau_vis, double r_max);

/// Everything one optimizer step consumes, frozen at the current features.
struct StepInputs {
  RenderOutput render;
  InstanceBatch batch;
  std::optional<std::vector<std::vector<double>>> semantic_centers;  // set when the semantic term is active
  const std::vector<MatchPair>* pairs = nullptr;                     // set on frame transitions
};

struct StepGradients {
  double loss_cc = 0.0;
  double loss_align = 0.0;
  double loss_semantic = 0.0;
  std::vector<double> cc;        // n x d
  std::vector<double> align;     // n x d, zero when inactive
  std::vector<double> semantic;  // n x d, zero when inactive
  std::vector<double> total;     // cc + lambda_align * align + lambda_semantic * semantic
  double loss_total = 0.0;
};

StepInputs prepare_step(const Scene& scene, const Dataset& data, const StreamKey& key, const Eigen::MatrixXd& projection,
                        bool semantic_active, const std::vector<MatchPair>* pairs, int samples_per_instance,
                        std::mt19937_64& rng);

/// Component losses and gradients w.r.t. primitive features, with centers,
/// temperatures, sample pixels and matches held fixed.
StepGradients step_gradients(const Scene& scene, const StepInputs& inputs, double lambda_align, double lambda_semantic);

/// Total loss only, recomputed from the features by re-rendering; the
/// finite-difference reference for step_gradients.
double step_total_loss(const Scene& scene, const Camera& cam, double t, const StepInputs& inputs, double lambda_align,
                       double lambda_semantic);

struct LossLogRow {
  int step = 0;
  double lr = 0.0;
  double loss_cc = 0.0;
  double loss_align = 0.0;
  double loss_semantic = 0.0;
  double loss_total = 0.0;
  int view = 0;
  int frame = 0;
};

struct TrainResult {
  Scene scene;
  std::vector<LossLogRow> log;
  AdamState optimizer;
};

using CheckpointFn = std::function<void(int step, const Scene&)>;

/// Optimizes features only; geometry, opacity and velocity stay fixed.
TrainResult train(const Scene& scene, const Dataset& data, const TrainConfig& cfg, const CheckpointFn& on_checkpoint = {});

std::string loss_log_csv(const std::vector<LossLogRow>& log);
void save_optimizer_state(const std::string& path, const AdamState& state);
AdamState load_optimizer_state(const std::string& path);

}  // namespace seg4d
