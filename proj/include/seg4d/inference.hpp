#pragma once

#include "seg4d/core_model.hpp"
#include "seg4d/hdbscan.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace seg4d {

struct ClusterParams {
  double subset_rate = 0.05;  // R
  int min_samples = 10;       // M
  int min_cluster_size = 10;
  double selection_epsilon = 0.0;  // E
  double tau_sim = 0.5;            // filter similarity threshold
  double tau_assign = 0.5;         // minimum cosine to join a cluster after subset clustering
  bool normalize = true;           // cluster unit-length features, matching the cosine used elsewhere
  std::uint64_t seed = 1;

  void validate() const;
  HdbscanParams hdbscan() const { return {min_samples, min_cluster_size, selection_epsilon}; }
};

struct ClusterStats {
  int members = 0;
  std::vector<double> mean_feature;
  Vec3 mean_velocity = Vec3::Zero();
  double reference_time = 0.0;  // mean mu_t of the members
  Vec3 mean_position = Vec3::Zero();  // members evaluated at reference_time
  double sigma_v = 0.0;  // sqrt(mean |v - mean_v|^2)
  double sigma_p = 0.0;
};

struct ClusterResult {
  std::vector<int> labels;  // per primitive, dense 0..k-1, -1 = noise or unassigned
  std::vector<ClusterStats> clusters;
  std::vector<int> subset;  // primitives that went through hdbscan, ascending

  int cluster_count() const { return static_cast<int>(clusters.size()); }
  /// Labels shifted for rendering: cluster c -> c + 1, noise -> 0.
  std::vector<int> render_labels() const;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

ClusterStats cluster_statistics(const Scene& scene, const std::vector<int>& members);

/// Statistics for every label in 0..max(labels); empty clusters get zero stats.
std::vector<ClusterStats> all_statistics(const Scene& scene, const std::vector<int>& labels);

/// Members to eject: deviation in velocity AND in position beyond 3 sigma AND
/// cosine to the mean feature below tau_sim. Single pass; no-op under two members.
std::vector<int> filter(const Scene& scene, const std::vector<int>& members, const ClusterStats& stats, double tau_sim);

/// Subset hdbscan (on unit-length features when `normalize`), cosine assignment of the rest, statistics, then filter.
ClusterResult segment(const Scene& scene, const ClusterParams& params);

/// Rebuilds a result (statistics included) from stored labels.
ClusterResult result_from_labels(const Scene& scene, std::vector<int> labels);

enum class EditKind { Remove, Duplicate, Extract };

const char* to_string(EditKind k);
EditKind edit_from_string(const std::string& s);

struct EditOp {
  EditKind kind = EditKind::Remove;
  Vec3 offset = Vec3::Zero();  // duplicate only
};

struct EditResult {
  Scene scene;
  std::vector<int> labels;  // labels carried to the edited scene; duplicates get a new label
};

EditResult edit(const Scene& scene, const ClusterResult& result, int label, const EditOp& op);

std::string labels_csv(const std::vector<int>& labels);
std::vector<int> labels_from_csv(const std::string& text);
std::string cluster_summary_json(const ClusterResult& result, const ClusterParams& params);

}  // namespace seg4d
