#pragma once

#include <Eigen/Core>

#include <vector>

namespace seg4d {

/// Points are rows.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HdbscanParams {
  int min_samples = 5;  // M; the core distance is the M-th nearest neighbor, counting the point itself
  int min_cluster_size = 10;
  double selection_epsilon = 0.0;  // E; clusters born below this distance are merged upward

  void validate() const;
};

struct MstEdge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

std::vector<double> core_distances(const PointMatrix& points, int min_samples);

/// Prim's algorithm over implicit mutual-reachability distances,
/// max(core_a, core_b, |a - b|). Edge k attaches the k+1-th vertex added.
std::vector<MstEdge> mutual_reachability_mst(const PointMatrix& points, const std::vector<double>& core);

double total_weight(const std::vector<MstEdge>& edges);

struct HdbscanResult {
  std::vector<int> labels;  // dense 0..clusters-1, noise -1
  int clusters = 0;
  std::vector<MstEdge> mst;
};

/// Full pipeline: core distances, mutual reachability MST, single linkage,
/// condensed tree, excess-of-mass selection. Merges at exactly equal distance
/// are flattened into one multi-way split. When the condensed tree has no
/// cluster below the root, every point is returned as one cluster.
HdbscanResult hdbscan(const PointMatrix& points, const HdbscanParams& params);

namespace reference {
Eigen::MatrixXd mutual_reachability_matrix(const PointMatrix& points, const std::vector<double>& core);
/// Exhaustive Prim on a dense symmetric weight matrix: each step scans every
/// tree/non-tree pair. Serial, O(n^3).
std::vector<MstEdge> prim_dense(const Eigen::MatrixXd& weights);
}  // namespace reference

}  // namespace seg4d
