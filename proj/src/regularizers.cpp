#include "seg4d/regularizers.hpp"

#include "seg4d/error.hpp"
#include "seg4d/kdtree.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>

namespace seg4d {

std::vector<int> find_disappearing(const Scene& scene, double t, double t_next, double tau_vis) {
  require(t < t_next, ErrorKind::InvalidArgument, "find_disappearing expects t < t_next");
  std::vector<int> out;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& g = scene.primitives[i];
    if (temporal_opacity(g, t) >= tau_vis && temporal_opacity(g, t_next) < tau_vis) out.push_back(static_cast<int>(i));
  }
  return out;
}

double default_match_radius(const Scene& scene) {
  if (scene.empty()) return 0.0;
  std::vector<double> scales;
  scales.reserve(scene.size());
  for (const auto& g : scene.primitives) scales.push_back(g.scale_x.mean());
  const auto mid = scales.begin() + static_cast<std::ptrdiff_t>(scales.size() / 2);
  std::nth_element(scales.begin(), mid, scales.end());
  return 3.0 * *mid;
}

std::vector<MatchPair> match_pairs(const Scene& scene, const std::vector<int>& disappearing, double t, double t_next,
                                   double r_max, double tau_vis) {
  std::vector<Vec3> points;
  std::vector<int> ids;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& g = scene.primitives[i];
    if (temporal_opacity(g, t_next) >= tau_vis) {
      points.push_back(position_at(g, t_next));
      ids.push_back(static_cast<int>(i));
    }
  }
  std::vector<MatchPair> pairs;
  if (points.empty()) return pairs;
  const KdTree3 tree(std::move(points), std::move(ids));

  std::vector<int> sources = disappearing;
  std::sort(sources.begin(), sources.end());
  for (int src : sources) {
    const auto hit = tree.nearest(position_at(scene.primitives[static_cast<std::size_t>(src)], t_next));
    if (!hit || hit->id == src || hit->distance > r_max) continue;
    pairs.push_back({src, hit->id, t, t_next, hit->distance});
  }
  return pairs;
}

TrackingResult tracking_loss(const Scene& scene, const std::vector<MatchPair>& pairs) {
  const auto d = static_cast<std::size_t>(scene.feature_dim);
  TrackingResult out;
  out.grads.assign(scene.size() * d, 0.0);
  std::vector<double> diff(d);
  for (const auto& pair : pairs) {
    require(pair.src_index >= 0 && static_cast<std::size_t>(pair.src_index) < scene.size() && pair.dst_index >= 0 &&
                static_cast<std::size_t>(pair.dst_index) < scene.size(),
            ErrorKind::InvalidArgument, "match pair index out of range");
    const auto& a = scene.primitives[static_cast<std::size_t>(pair.src_index)].feature;
    const auto& b = scene.primitives[static_cast<std::size_t>(pair.dst_index)].feature;
    double norm2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      diff[c] = a[c] - b[c];
      norm2 += diff[c] * diff[c];
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-8) continue;
    out.loss += norm;
    double* gs = out.grads.data() + static_cast<std::size_t>(pair.src_index) * d;
    double* gd = out.grads.data() + static_cast<std::size_t>(pair.dst_index) * d;
    for (std::size_t c = 0; c < d; ++c) {
      gs[c] += diff[c] / norm;
      gd[c] -= diff[c] / norm;
    }
  }
  return out;
}

Eigen::MatrixXd semantic_projection(int feature_dim, int raw_dim, std::uint64_t seed) {
  require(feature_dim >= 1 && raw_dim >= 1, ErrorKind::InvalidArgument, "projection dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int rows = std::max(feature_dim, raw_dim), cols = std::min(feature_dim, raw_dim);
  Eigen::MatrixXd gaussian(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) gaussian(r, c) = normal(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  // Fix column signs so the factorization is unique.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int c = 0; c < cols; ++c)
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  if (feature_dim >= raw_dim) return q;  // d x D_raw, orthonormal columns
  return q.transpose();                  // d x D_raw, orthonormal rows
}

FeatureMap project_semantic(const FeatureMap& raw, const Eigen::MatrixXd& projection) {
  require(projection.cols() == raw.channels, ErrorKind::ShapeMismatch,
          "projection expects " + std::to_string(projection.cols()) + " raw channels, map has " +
              std::to_string(raw.channels));
  const int out_dim = static_cast<int>(projection.rows());
  FeatureMap out(raw.height, raw.width, out_dim);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < raw.pixels(); ++p) {
    const auto in = raw.pixel(p);
    auto dst = out.pixel(p);
    for (int r = 0; r < out_dim; ++r) {
      double acc = 0.0;
      for (int c = 0; c < raw.channels; ++c) acc += projection(r, c) * in[static_cast<std::size_t>(c)];
      dst[static_cast<std::size_t>(r)] = acc;
    }
  }
  return out;
}

std::vector<std::vector<double>> semantic_centers(const InstanceBatch& batch, const SegmentationMap& seg,
                                                  const FeatureMap& semantic) {
  require(semantic.height == seg.height && semantic.width == seg.width, ErrorKind::ShapeMismatch,
          "semantic map and segmentation sizes differ");
  require(semantic.channels == batch.dim || batch.instances.empty(), ErrorKind::ShapeMismatch,
          "semantic map channels differ from the feature dimension");
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < batch.instances.size(); ++i) slot[batch.instances[i].label] = i;
  const auto d = static_cast<std::size_t>(semantic.channels);
  std::vector<std::vector<double>> centers(batch.instances.size(), std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(batch.instances.size(), 0);
  for (int p = 0; p < seg.pixels(); ++p) {
    const auto it = slot.find(seg.labels[static_cast<std::size_t>(p)]);
    if (it == slot.end()) continue;
    const auto f = semantic.pixel(p);
    for (std::size_t c = 0; c < d; ++c) centers[it->second][c] += f[c];
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (double& c : centers[i]) c /= static_cast<double>(counts[i]);
  return centers;
}

ContrastiveResult semantic_loss(const InstanceBatch& batch, const SegmentationMap& seg, const FeatureMap& semantic) {
  return contrastive_objective(batch, semantic_centers(batch, seg, semantic));
}

SemanticLossResult semantic_loss(const FeatureMap& features, const SegmentationMap& seg, const FeatureMap& semantic,
                                 int samples_per_instance, std::mt19937_64& rng) {
  require(features.height == semantic.height && features.width == semantic.width &&
              features.channels == semantic.channels,
          ErrorKind::ShapeMismatch, "feature and semantic maps differ in shape");
  SemanticLossResult out;
  out.batch = build_batch(features, seg, samples_per_instance, rng);
  out.result = semantic_loss(out.batch, seg, semantic);
  return out;
}

}  // namespace seg4d
