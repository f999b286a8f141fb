#include "seg4d/inference.hpp"

#include "seg4d/error.hpp"
#include "seg4d/seeding.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace seg4d {

void ClusterParams::validate() const {
  require(subset_rate > 0.0 && subset_rate <= 1.0, ErrorKind::InvalidArgument, "subset rate must be in (0, 1]");
  require(tau_assign >= -1.0 && tau_assign <= 1.0, ErrorKind::InvalidArgument, "tau_assign must be in [-1, 1]");
  hdbscan().validate();
}

std::vector<int> ClusterResult::render_labels() const {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] + 1;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

ClusterStats cluster_statistics(const Scene& scene, const std::vector<int>& members) {
  ClusterStats s;
  s.members = static_cast<int>(members.size());
  s.mean_feature.assign(static_cast<std::size_t>(scene.feature_dim), 0.0);
  if (members.empty()) return s;
  const double inv = 1.0 / static_cast<double>(members.size());
  for (int i : members) {
    const auto& g = scene.primitives[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < s.mean_feature.size(); ++k) s.mean_feature[k] += g.feature[k];
    s.mean_velocity += g.velocity;
    s.reference_time += g.mu_t;
  }
  for (auto& f : s.mean_feature) f *= inv;
  s.mean_velocity *= inv;
  s.reference_time *= inv;
  for (int i : members) s.mean_position += position_at(scene.primitives[static_cast<std::size_t>(i)], s.reference_time);
  s.mean_position *= inv;
  double sv = 0.0, sp = 0.0;
  for (int i : members) {
    const auto& g = scene.primitives[static_cast<std::size_t>(i)];
    sv += (g.velocity - s.mean_velocity).squaredNorm();
    sp += (position_at(g, s.reference_time) - s.mean_position).squaredNorm();
  }
  s.sigma_v = std::sqrt(sv * inv);
  s.sigma_p = std::sqrt(sp * inv);
  return s;
}

std::vector<ClusterStats> all_statistics(const Scene& scene, const std::vector<int>& labels) {
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> members(static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) members[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  std::vector<ClusterStats> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(cluster_statistics(scene, m));
  return out;
}

std::vector<int> filter(const Scene& scene, const std::vector<int>& members, const ClusterStats& stats, double tau_sim) {
  std::vector<int> ejected;
  if (members.size() < 2) return ejected;
  for (int i : members) {
    const auto& g = scene.primitives[static_cast<std::size_t>(i)];
    const double dv = (g.velocity - stats.mean_velocity).norm();
    const double dp = (position_at(g, stats.reference_time) - stats.mean_position).norm();
    if (dv > 3.0 * stats.sigma_v && dp > 3.0 * stats.sigma_p &&
        cosine_similarity(g.feature, stats.mean_feature) < tau_sim)
      ejected.push_back(i);
  }
  return ejected;
}

namespace {

std::vector<int> sample_subset(std::size_t n, double rate, std::uint64_t seed) {
  const auto m = std::min(n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5ab5e7));
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void apply_filter(const Scene& scene, ClusterResult& res, double tau_sim) {
  std::vector<std::vector<int>> members(res.clusters.size());
  for (std::size_t i = 0; i < res.labels.size(); ++i)
    if (res.labels[i] >= 0) members[static_cast<std::size_t>(res.labels[i])].push_back(static_cast<int>(i));
  for (std::size_t c = 0; c < members.size(); ++c)
    for (int i : filter(scene, members[c], res.clusters[c], tau_sim)) res.labels[static_cast<std::size_t>(i)] = -1;
}

}  // namespace

ClusterResult segment(const Scene& scene, const ClusterParams& params) {
  params.validate();
  require(!scene.empty(), ErrorKind::Clustering, "cannot segment an empty scene");
  const std::size_t n = scene.size();
  const auto d = static_cast<std::size_t>(scene.feature_dim);

  ClusterResult res;
  res.subset = sample_subset(n, params.subset_rate, params.seed);
  PointMatrix pts(static_cast<Eigen::Index>(res.subset.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < res.subset.size(); ++r)
    for (std::size_t k = 0; k < d; ++k)
      pts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          scene.primitives[static_cast<std::size_t>(res.subset[r])].feature[k];
  if (params.normalize)
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      const double len = pts.row(r).norm();
      if (len > 0.0) pts.row(r) /= len;
    }
  const auto hd = hdbscan(pts, params.hdbscan());
  if (hd.clusters == 0) fail(ErrorKind::Clustering, "clustering produced no clusters");

  res.labels.assign(n, -1);
  for (std::size_t r = 0; r < res.subset.size(); ++r)
    res.labels[static_cast<std::size_t>(res.subset[r])] = hd.labels[r];

  // Cluster centers from the clustered subset members only.
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(hd.clusters), std::vector<double>(d, 0.0));
  std::vector<int> counts(static_cast<std::size_t>(hd.clusters), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = res.labels[i];
    if (c < 0) continue;
    ++counts[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < d; ++k) centers[static_cast<std::size_t>(c)][k] += scene.primitives[i].feature[k];
  }
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (auto& v : centers[c]) v /= counts[c];

  std::vector<int> assigned(res.labels);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    if (res.labels[i] >= 0) continue;
    int best = -1;
    double best_sim = params.tau_assign;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double s = cosine_similarity(scene.primitives[i].feature, centers[c]);
      if (s >= best_sim && (best < 0 || s > best_sim)) {
        best = static_cast<int>(c);
        best_sim = s;
      }
    }
    assigned[i] = best;
  }
  res.labels = std::move(assigned);

  res.clusters = all_statistics(scene, res.labels);
  res.clusters.resize(static_cast<std::size_t>(hd.clusters), cluster_statistics(scene, {}));
  apply_filter(scene, res, params.tau_sim);
  // Reported statistics describe the members left after the single filter pass.
  res.clusters = all_statistics(scene, res.labels);
  res.clusters.resize(static_cast<std::size_t>(hd.clusters), cluster_statistics(scene, {}));
  return res;
}

ClusterResult result_from_labels(const Scene& scene, std::vector<int> labels) {
  require(labels.size() == scene.size(), ErrorKind::ShapeMismatch, "label count differs from primitive count");
  for (int l : labels) require(l >= -1, ErrorKind::Format, "labels must be >= -1");
  ClusterResult res;
  res.labels = std::move(labels);
  res.clusters = all_statistics(scene, res.labels);
  return res;
}

const char* to_string(EditKind k) {
  switch (k) {
    case EditKind::Remove: return "remove";
    case EditKind::Duplicate: return "duplicate";
    case EditKind::Extract: return "extract";
  }
  return "?";
}

EditKind edit_from_string(const std::string& s) {
  if (s == "remove") return EditKind::Remove;
  if (s == "duplicate") return EditKind::Duplicate;
  if (s == "extract") return EditKind::Extract;
  fail(ErrorKind::InvalidArgument, "unknown edit operation '" + s + "'");
}

EditResult edit(const Scene& scene, const ClusterResult& result, int label, const EditOp& op) {
  require(result.labels.size() == scene.size(), ErrorKind::ShapeMismatch, "label count differs from primitive count");
  const bool known = label >= 0 && label < result.cluster_count() &&
                     std::find(result.labels.begin(), result.labels.end(), label) != result.labels.end();
  if (!known) fail(ErrorKind::UnknownLabel, "label " + std::to_string(label) + " has no members");

  EditResult out;
  out.scene.feature_dim = scene.feature_dim;
  out.scene.t_min = scene.t_min;
  out.scene.t_max = scene.t_max;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const bool member = result.labels[i] == label;
    const bool keep = op.kind == EditKind::Extract ? member : !(op.kind == EditKind::Remove && member);
    if (!keep) continue;
    out.scene.primitives.push_back(scene.primitives[i]);
    out.labels.push_back(result.labels[i]);
  }
  if (op.kind == EditKind::Duplicate) {
    const int fresh = result.cluster_count();
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (result.labels[i] != label) continue;
      auto g = scene.primitives[i];
      g.mu_x += op.offset;
      out.scene.primitives.push_back(std::move(g));
      out.labels.push_back(fresh);
    }
  }
  return out;
}

std::string labels_csv(const std::vector<int>& labels) {
  std::string out = "primitive,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + ',' + std::to_string(labels[i]) + '\n';
  return out;
}

std::vector<int> labels_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("primitive,label", 0) != 0)
    fail(ErrorKind::Format, "label csv must start with 'primitive,label'");
  std::vector<int> labels;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorKind::Format, "bad label row: " + line);
    try {
      const long idx = std::stol(line.substr(0, comma));
      if (idx != static_cast<long>(labels.size())) fail(ErrorKind::Format, "label rows out of order at " + line);
      labels.push_back(std::stoi(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      fail(ErrorKind::Format, "bad label row: " + line);
    }
  }
  return labels;
}

std::string cluster_summary_json(const ClusterResult& result, const ClusterParams& params) {
  using nlohmann::json;
  json clusters = json::array();
  for (std::size_t c = 0; c < result.clusters.size(); ++c) {
    const auto& s = result.clusters[c];
    clusters.push_back({{"label", c},
                        {"members", s.members},
                        {"mean_feature", s.mean_feature},
                        {"mean_velocity", {s.mean_velocity.x(), s.mean_velocity.y(), s.mean_velocity.z()}},
                        {"reference_time", s.reference_time},
                        {"mean_position", {s.mean_position.x(), s.mean_position.y(), s.mean_position.z()}},
                        {"sigma_v", s.sigma_v},
                        {"sigma_p", s.sigma_p}});
  }
  const auto noise = std::count(result.labels.begin(), result.labels.end(), -1);
  json j = {{"params",
             {{"subset_rate", params.subset_rate},
              {"min_samples", params.min_samples},
              {"min_cluster_size", params.min_cluster_size},
              {"selection_epsilon", params.selection_epsilon},
              {"tau_sim", params.tau_sim},
              {"tau_assign", params.tau_assign},
              {"normalize", params.normalize},
              {"seed", params.seed}}},
            {"primitives", result.labels.size()},
            {"subset_size", result.subset.size()},
            {"noise", noise},
            {"clusters", clusters}};
  return j.dump(2);
}

}  // namespace seg4d
