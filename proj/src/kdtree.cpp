#include "seg4d/kdtree.hpp"

#include "seg4d/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seg4d {

KdTree3::KdTree3(std::vector<Vec3> points, std::vector<int> ids) : points_(std::move(points)), ids_(std::move(ids)) {
  if (ids_.empty()) {
    ids_.resize(points_.size());
    std::iota(ids_.begin(), ids_.end(), 0);
  }
  require(ids_.size() == points_.size(), ErrorKind::ShapeMismatch, "kd-tree ids and points differ in length");
  std::vector<int> order(points_.size());
  std::iota(order.begin(), order.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(order, 0);
}

int KdTree3::build(std::span<int> order, int depth) {
  if (order.empty()) return -1;
  const int axis = depth % 3;
  const auto mid = order.size() / 2;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mid), order.end(), [&](int a, int b) {
    const double pa = points_[static_cast<std::size_t>(a)][axis], pb = points_[static_cast<std::size_t>(b)][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({order[mid], axis, -1, -1});
  const int left = build(order.subspan(0, mid), depth + 1);
  const int right = build(order.subspan(mid + 1), depth + 1);
  nodes_[static_cast<std::size_t>(node)].left = left;
  nodes_[static_cast<std::size_t>(node)].right = right;
  return node;
}

void KdTree3::search(int node, const Vec3& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Vec3& p = points_[static_cast<std::size_t>(n.point)];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && ids_[static_cast<std::size_t>(n.point)] < ids_[static_cast<std::size_t>(best)])) {
    best = n.point;
    best_d2 = d2;
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, best, best_d2);
  // <= keeps equidistant candidates on the far side reachable for the tie-break.
  if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

std::optional<KdTree3::Hit> KdTree3::nearest(const Vec3& query) const {
  if (root_ < 0) return std::nullopt;
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_d2);
  return Hit{ids_[static_cast<std::size_t>(best)], std::sqrt(best_d2)};
}

}  // namespace seg4d
