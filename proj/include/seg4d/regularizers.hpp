#pragma once

#include "seg4d/contrastive.hpp"
#include "seg4d/core_model.hpp"
#include "seg4d/maps.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace seg4d {

inline constexpr double kDefaultVisibility = 0.05;

struct MatchPair {
  int src_index = 0;
  int dst_index = 0;
  double src_time = 0.0;
  double dst_time = 0.0;
  double distance = 0.0;
};

/// Primitives visible at t (temporal opacity >= tau_vis) that drop below
/// tau_vis at t_next. Sorted by index.
std::vector<int> find_disappearing(const Scene& scene, double t, double t_next, double tau_vis = kDefaultVisibility);

/// 3 x median over primitives of the mean spatial scale.
double default_match_radius(const Scene& scene);

/// For each disappearing primitive, the nearest primitive still visible at
/// t_next, comparing positions at t_next. Matches farther than r_max are
/// dropped. Output is sorted by src_index.
std::vector<MatchPair> match_pairs(const Scene& scene, const std::vector<int>& disappearing, double t, double t_next,
                                   double r_max, double tau_vis = kDefaultVisibility);

struct TrackingResult {
  double loss = 0.0;
  std::vector<double> grads;  // n x d, primitive-major
};

/// Sum over pairs of ||f_src - f_dst||. Pairs closer than 1e-8 in feature
/// space contribute nothing.
TrackingResult tracking_loss(const Scene& scene, const std::vector<MatchPair>& pairs);

/// Fixed d x D_raw projection. Rows are orthonormal when d <= D_raw,
/// columns otherwise.
Eigen::MatrixXd semantic_projection(int feature_dim, int raw_dim, std::uint64_t seed);

FeatureMap project_semantic(const FeatureMap& raw, const Eigen::MatrixXd& projection);

/// Mean semantic feature over each instance's full mask, in batch order.
std::vector<std::vector<double>> semantic_centers(const InstanceBatch& batch, const SegmentationMap& seg,
                                                  const FeatureMap& semantic);

/// Contrast of the batch samples against fixed semantic centers, with the
/// temperatures taken from the rendered samples.
ContrastiveResult semantic_loss(const InstanceBatch& batch, const SegmentationMap& seg, const FeatureMap& semantic);

struct SemanticLossResult {
  InstanceBatch batch;
  ContrastiveResult result;
};

SemanticLossResult semantic_loss(const FeatureMap& features, const SegmentationMap& seg, const FeatureMap& semantic,
                                 int samples_per_instance, std::mt19937_64& rng);

}  // namespace seg4d
