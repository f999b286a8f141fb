#include "seg4d/hdbscan.hpp"

#include "seg4d/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace seg4d {

void HdbscanParams::validate() const {
  require(min_samples >= 1, ErrorKind::InvalidArgument, "min_samples must be >= 1");
  require(min_cluster_size >= 2, ErrorKind::InvalidArgument, "min_cluster_size must be >= 2");
  require(selection_epsilon >= 0.0, ErrorKind::InvalidArgument, "selection epsilon must be >= 0");
}

namespace {

double distance(const PointMatrix& p, Eigen::Index a, Eigen::Index b) { return (p.row(a) - p.row(b)).norm(); }

// Distances of exactly zero (duplicate points) would give infinite lambda.
constexpr double kMinDistance = 1e-300;
double lambda_of(double d) { return 1.0 / std::max(d, kMinDistance); }

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
};

// Single-linkage hierarchy. Nodes 0..n-1 are points; internal nodes follow.
struct Hierarchy {
  std::vector<std::vector<int>> children;
  std::vector<double> dist;
  std::vector<int> size;
  int root = -1;
};

Hierarchy single_linkage(int n, std::vector<MstEdge> edges) {
  std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) { return x.weight < y.weight; });
  Hierarchy h;
  h.children.resize(static_cast<std::size_t>(n));
  h.dist.assign(static_cast<std::size_t>(n), 0.0);
  h.size.assign(static_cast<std::size_t>(n), 1);
  UnionFind uf(n);
  std::vector<int> top(static_cast<std::size_t>(n));  // hierarchy node currently representing each set root
  std::iota(top.begin(), top.end(), 0);
  h.root = n == 1 ? 0 : -1;

  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    const double w = edges[i].weight;
    std::unordered_map<int, std::vector<int>> pending;  // set root -> child nodes merged at this distance
    std::vector<int> order;
    for (; j < edges.size() && edges[j].weight == w; ++j) {
      const int ra = uf.find(edges[j].a), rb = uf.find(edges[j].b);
      if (ra == rb) continue;
      std::vector<int> merged;
      for (int r : {ra, rb}) {
        auto it = pending.find(r);
        if (it != pending.end()) {
          merged.insert(merged.end(), it->second.begin(), it->second.end());
          pending.erase(it);
        } else {
          merged.push_back(top[static_cast<std::size_t>(r)]);
        }
      }
      const int keep = std::min(ra, rb);
      uf.parent[static_cast<std::size_t>(std::max(ra, rb))] = keep;
      pending[keep] = std::move(merged);
      order.push_back(keep);
    }
    for (int r : order) {
      auto it = pending.find(r);
      if (it == pending.end() || uf.find(r) != r) continue;
      const int node = static_cast<int>(h.children.size());
      int size = 0;
      for (int c : it->second) size += h.size[static_cast<std::size_t>(c)];
      h.children.push_back(std::move(it->second));
      h.dist.push_back(w);
      h.size.push_back(size);
      top[static_cast<std::size_t>(r)] = node;
      pending.erase(it);
      h.root = node;
    }
    i = j;
  }
  return h;
}

struct CondensedTree {
  std::vector<int> parent;  // per cluster; -1 for the root (cluster 0)
  std::vector<double> birth;
  std::vector<double> stability;
  std::vector<std::vector<int>> kids;
  std::vector<int> point_cluster;  // cluster each point falls out of
};

void leaves_under(const Hierarchy& h, int node, int n, std::vector<int>& out) {
  std::vector<int> stack{node};
  while (!stack.empty()) {
    const int x = stack.back();
    stack.pop_back();
    if (x < n) {
      out.push_back(x);
    } else {
      const auto& ch = h.children[static_cast<std::size_t>(x)];
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
  }
}

CondensedTree condense(const Hierarchy& h, int n, int min_cluster_size) {
  CondensedTree ct;
  ct.parent.push_back(-1);
  ct.birth.push_back(0.0);
  ct.stability.push_back(0.0);
  ct.kids.emplace_back();
  ct.point_cluster.assign(static_cast<std::size_t>(n), 0);

  std::vector<int> scratch;
  auto drop = [&](int node, int cluster, double lambda) {
    scratch.clear();
    leaves_under(h, node, n, scratch);
    for (int p : scratch) ct.point_cluster[static_cast<std::size_t>(p)] = cluster;
    ct.stability[static_cast<std::size_t>(cluster)] +=
        (lambda - ct.birth[static_cast<std::size_t>(cluster)]) * static_cast<double>(scratch.size());
  };

  std::vector<std::pair<int, int>> work{{h.root, 0}};  // (hierarchy node, cluster)
  while (!work.empty()) {
    const auto [node, cluster] = work.back();
    work.pop_back();
    if (node < n) {
      drop(node, cluster, lambda_of(0.0));
      continue;
    }
    const double lambda = lambda_of(h.dist[static_cast<std::size_t>(node)]);
    const auto& ch = h.children[static_cast<std::size_t>(node)];
    std::vector<int> big;
    for (int c : ch)
      if (h.size[static_cast<std::size_t>(c)] >= min_cluster_size) big.push_back(c);
    for (int c : ch)
      if (h.size[static_cast<std::size_t>(c)] < min_cluster_size) drop(c, cluster, lambda);
    if (big.size() == 1) {
      work.emplace_back(big.front(), cluster);
    } else if (big.size() >= 2) {
      const double birth = ct.birth[static_cast<std::size_t>(cluster)];
      for (auto it = big.rbegin(); it != big.rend(); ++it) {
        const int k = static_cast<int>(ct.parent.size());
        ct.parent.push_back(cluster);
        ct.birth.push_back(lambda);
        ct.stability.push_back(0.0);
        ct.kids.emplace_back();
        ct.kids[static_cast<std::size_t>(cluster)].push_back(k);
        ct.stability[static_cast<std::size_t>(cluster)] +=
            (lambda - birth) * static_cast<double>(h.size[static_cast<std::size_t>(*it)]);
        work.emplace_back(*it, k);
      }
    }
  }
  return ct;
}

std::vector<int> select_clusters(const CondensedTree& ct, double epsilon) {
  const std::size_t k = ct.parent.size();
  std::vector<double> best(ct.stability);
  std::vector<char> keep(k, 1);
  for (std::size_t c = k; c-- > 1;) {
    double sub = 0.0;
    for (int kid : ct.kids[c]) sub += best[static_cast<std::size_t>(kid)];
    if (!ct.kids[c].empty() && sub > ct.stability[c]) {
      keep[c] = 0;
      best[c] = sub;
    }
  }
  std::vector<int> chosen;
  std::vector<int> stack(ct.kids[0].rbegin(), ct.kids[0].rend());
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    if (keep[static_cast<std::size_t>(c)]) {
      chosen.push_back(c);
    } else {
      const auto& kids = ct.kids[static_cast<std::size_t>(c)];
      stack.insert(stack.end(), kids.rbegin(), kids.rend());
    }
  }
  if (epsilon <= 0.0) return chosen;

  // Clusters born below epsilon are replaced by the nearest ancestor born at or above it.
  std::vector<int> lifted;
  for (int c : chosen) {
    int x = c;
    if (1.0 / ct.birth[static_cast<std::size_t>(x)] < epsilon) {
      while (true) {
        const int p = ct.parent[static_cast<std::size_t>(x)];
        if (p == 0) break;
        x = p;
        if (1.0 / ct.birth[static_cast<std::size_t>(x)] > epsilon) break;
      }
    }
    lifted.push_back(x);
  }
  std::sort(lifted.begin(), lifted.end());
  lifted.erase(std::unique(lifted.begin(), lifted.end()), lifted.end());
  std::vector<int> out;
  for (int c : lifted) {
    bool nested = false;
    for (int p = ct.parent[static_cast<std::size_t>(c)]; p > 0; p = ct.parent[static_cast<std::size_t>(p)])
      if (std::binary_search(lifted.begin(), lifted.end(), p)) nested = true;
    if (!nested) out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<double> core_distances(const PointMatrix& points, int min_samples) {
  const auto n = points.rows();
  require(min_samples >= 1, ErrorKind::InvalidArgument, "min_samples must be >= 1");
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(min_samples, n));
  std::vector<double> core(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> d(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) d[static_cast<std::size_t>(j)] = i == j ? 0.0 : distance(points, i, j);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    core[static_cast<std::size_t>(i)] = d[k - 1];
  }
  return core;
}

std::vector<MstEdge> mutual_reachability_mst(const PointMatrix& points, const std::vector<double>& core) {
  const auto n = static_cast<int>(points.rows());
  require(core.size() == static_cast<std::size_t>(n), ErrorKind::ShapeMismatch, "core distance count mismatch");
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(static_cast<std::size_t>(n - 1));
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> from(static_cast<std::size_t>(n), 0);
  int u = 0;
  in_tree[0] = 1;
  for (int added = 1; added < n; ++added) {
    const double cu = core[static_cast<std::size_t>(u)];
#pragma omp parallel for schedule(static)
    for (int v = 0; v < n; ++v) {
      if (in_tree[static_cast<std::size_t>(v)]) continue;
      const double w = std::max({cu, core[static_cast<std::size_t>(v)], distance(points, u, v)});
      if (w < best[static_cast<std::size_t>(v)]) {
        best[static_cast<std::size_t>(v)] = w;
        from[static_cast<std::size_t>(v)] = u;
      }
    }
    int next = -1;
    for (int v = 0; v < n; ++v)
      if (!in_tree[static_cast<std::size_t>(v)] &&
          (next < 0 || best[static_cast<std::size_t>(v)] < best[static_cast<std::size_t>(next)]))
        next = v;
    in_tree[static_cast<std::size_t>(next)] = 1;
    edges.push_back({from[static_cast<std::size_t>(next)], next, best[static_cast<std::size_t>(next)]});
    u = next;
  }
  return edges;
}

double total_weight(const std::vector<MstEdge>& edges) {
  double s = 0.0;
  for (const auto& e : edges) s += e.weight;
  return s;
}

HdbscanResult hdbscan(const PointMatrix& points, const HdbscanParams& params) {
  params.validate();
  const auto n = static_cast<int>(points.rows());
  if (n < params.min_cluster_size)
    fail(ErrorKind::Clustering, "hdbscan needs at least min_cluster_size = " + std::to_string(params.min_cluster_size) +
                                    " points, got " + std::to_string(n));
  require(points.allFinite(), ErrorKind::NonFinite, "hdbscan input contains non-finite values");

  HdbscanResult res;
  res.mst = mutual_reachability_mst(points, core_distances(points, params.min_samples));
  const Hierarchy h = single_linkage(n, res.mst);
  const CondensedTree ct = condense(h, n, params.min_cluster_size);

  res.labels.assign(static_cast<std::size_t>(n), -1);
  if (ct.parent.size() == 1) {
    std::fill(res.labels.begin(), res.labels.end(), 0);
    res.clusters = 1;
    return res;
  }
  auto chosen = select_clusters(ct, params.selection_epsilon);
  std::sort(chosen.begin(), chosen.end());
  std::vector<int> dense(ct.parent.size(), -1);
  for (std::size_t i = 0; i < chosen.size(); ++i) dense[static_cast<std::size_t>(chosen[i])] = static_cast<int>(i);
  for (int p = 0; p < n; ++p)
    for (int c = ct.point_cluster[static_cast<std::size_t>(p)]; c > 0; c = ct.parent[static_cast<std::size_t>(c)])
      if (dense[static_cast<std::size_t>(c)] >= 0) {
        res.labels[static_cast<std::size_t>(p)] = dense[static_cast<std::size_t>(c)];
        break;
      }
  res.clusters = static_cast<int>(chosen.size());
  return res;
}

namespace reference {

Eigen::MatrixXd mutual_reachability_matrix(const PointMatrix& points, const std::vector<double>& core) {
  const auto n = points.rows();
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = i == j ? 0.0
                       : std::max({core[static_cast<std::size_t>(i)], core[static_cast<std::size_t>(j)], distance(points, i, j)});
  return m;
}

std::vector<MstEdge> prim_dense(const Eigen::MatrixXd& weights) {
  const auto n = static_cast<int>(weights.rows());
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  in_tree[0] = 1;
  for (int added = 1; added < n; ++added) {
    MstEdge best{-1, -1, std::numeric_limits<double>::infinity()};
    for (int a = 0; a < n; ++a) {
      if (!in_tree[static_cast<std::size_t>(a)]) continue;
      for (int b = 0; b < n; ++b)
        if (!in_tree[static_cast<std::size_t>(b)] && weights(a, b) < best.weight) best = {a, b, weights(a, b)};
    }
    in_tree[static_cast<std::size_t>(best.b)] = 1;
    edges.push_back(best);
  }
  return edges;
}

}  // namespace reference
}  // namespace seg4d
