#pragma once

#include "seg4d/dataset.hpp"
#include "seg4d/eval.hpp"
#include "seg4d/inference.hpp"
#include "seg4d/synth.hpp"
#include "seg4d/trainer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace seg4d {

inline constexpr const char* kVersion = "seg4d 1.0.0";

/// Everything needed to reproduce one run. Seeds are stored individually.
struct ExperimentConfig {
  SceneSpec spec = SceneSpec::default_scene();
  std::string dataset_dir;  // when set, the dataset is read from disk instead of generated
  TrainConfig train;
  ClusterParams cluster;
  double tau_fg = raster::kForegroundAlpha;
  bool no_motion = false;
  std::string output_dir;
  std::uint64_t seed = 1;

  /// Default experiment on `spec_name` with every seed derived from `seed`.
  static ExperimentConfig defaults(const std::string& spec_name = "default", std::uint64_t seed = 1);
  void reseed(std::uint64_t global_seed);
  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
std::string cluster_params_json(const ClusterParams& p);
ClusterParams cluster_params_from_json(const std::string& text);

/// Predicted label map for every (view, frame) of the dataset, view-major.
std::vector<SegmentationMap> predict_masks(const Scene& scene, const std::vector<int>& render_labels, const Dataset& data,
                                           double tau_fg = raster::kForegroundAlpha);

/// Mean over dynamic instances of the variance of rendered features, pooled
/// over every frame and view on the ground-truth mask of the instance.
double temporal_feature_variance(const Scene& scene, const Dataset& data);

struct RunResult {
  TrainResult trained;
  ClusterResult clusters;
  MetricReport metrics;
  double sigma2 = 0.0;
};

/// Train, segment and evaluate. Applies strip_motion first when cfg.no_motion.
RunResult run_experiment(const SyntheticData& input, const ExperimentConfig& cfg);

/// Segment and evaluate an already trained scene.
MetricReport evaluate_scene(const Scene& trained, const ClusterResult& clusters, const Dataset& data, double tau_fg);

struct SweepRow {
  double subset_rate = 0.0;
  int min_samples = 0;
  double selection_epsilon = 0.0;
  int clusters = 0;
  MetricReport metrics;
};

std::vector<SweepRow> sweep(const Scene& trained, const Dataset& data, const ClusterParams& base,
                            const std::vector<double>& rates, const std::vector<int>& min_samples,
                            const std::vector<double>& epsilons, double tau_fg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string arm;
  MetricReport metrics;
  double sigma2 = 0.0;
  int clusters = 0;
  std::string dataset_checksum;
};

/// Arms: full, w/o Motion, w/o Streaming, w/o Tracking, w/o DINO; all on one
/// generated dataset.
std::vector<AblationRow> ablate(const ExperimentConfig& cfg);
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// FNV-1a 64 over the serialized scene and dataset, as 16 hex digits.
std::string dataset_checksum(const SyntheticData& data);
/// FNV-1a 64 over every regular file below `dir`, in sorted path order.
std::string directory_checksum(const std::string& dir);

/// PCA of pixel features fitted once per sequence on foreground pixels.
struct PcaBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // 3 x d, rows ordered by decreasing variance
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Ones();
  bool degenerate = false;  // zero variance: images fall back to grayscale feature norm
  double norm_lo = 0.0;
  double norm_hi = 1.0;
};

PcaBasis fit_pca(const std::vector<RenderOutput>& renders, double tau_fg = raster::kForegroundAlpha);
RgbImage pca_to_rgb(const RenderOutput& render, const PcaBasis& basis, double tau_fg = raster::kForegroundAlpha);

/// Principal directions of the rows of `samples` (3 x d, or fewer rows when d < 3).
Eigen::MatrixXd principal_components(const Eigen::MatrixXd& samples, int count);
/// Total variance of the rows of `samples` projected onto the rows of `basis`
/// (assumed orthonormal).
double projected_variance(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& basis);

/// manifest.json with version, command line, config and output checksums.
void write_manifest(const std::string& dir, const std::string& command, const std::string& config_json,
                    const std::vector<std::pair<std::string, std::string>>& extra = {});

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace seg4d
