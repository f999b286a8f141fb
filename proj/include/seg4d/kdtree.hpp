#pragma once

#include "seg4d/core_model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace seg4d {

/// Static 3-d tree over a point set. Nearest-neighbor queries break distance
/// ties toward the smaller point id.
class KdTree3 {
 public:
  struct Hit {
    int id = -1;
    double distance = 0.0;
  };

  KdTree3() = default;
  /// `ids` defaults to 0..n-1 when empty.
  explicit KdTree3(std::vector<Vec3> points, std::vector<int> ids = {});

  std::optional<Hit> nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;  // index into points_
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::span<int> order, int depth);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<int> ids_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace seg4d
