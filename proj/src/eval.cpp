#include "seg4d/eval.hpp"

#include "seg4d/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>

namespace seg4d {

std::vector<int> hungarian_max(const Eigen::MatrixXd& weights) {
  const auto rows = static_cast<int>(weights.rows()), cols = static_cast<int>(weights.cols());
  std::vector<int> result(static_cast<std::size_t>(rows), -1);
  if (rows == 0 || cols == 0) return result;
  const int n = std::max(rows, cols);
  const double top = weights.maxCoeff();
  // Square cost matrix; padding costs as much as a zero-weight pairing.
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, top);
  cost.topLeftCorner(rows, cols) = top - weights.array();

  // Potential-based shortest augmenting path, 1-indexed.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  for (int j = 1; j <= n; ++j) {
    const int i = p[static_cast<std::size_t>(j)] - 1;
    if (i < rows && j - 1 < cols) result[static_cast<std::size_t>(i)] = j - 1;
  }
  return result;
}

Contingency contingency(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt) {
  require(pred.size() == gt.size(), ErrorKind::ShapeMismatch, "prediction and ground truth image counts differ");
  std::map<std::pair<int, int>, double> joint;
  Contingency c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].height == gt[i].height && pred[i].width == gt[i].width, ErrorKind::ShapeMismatch,
            "prediction and ground truth sizes differ");
    for (int p = 0; p < pred[i].pixels(); ++p)
      joint[{pred[i].labels[static_cast<std::size_t>(p)], gt[i].labels[static_cast<std::size_t>(p)]}] += 1.0;
    c.total += pred[i].pixels();
  }
  for (const auto& [key, count] : joint) {
    if (key.first != 0) c.pred_ids.push_back(key.first);
    if (key.second != 0) c.gt_ids.push_back(key.second);
  }
  for (auto* ids : {&c.pred_ids, &c.gt_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }
  auto slot = [](const std::vector<int>& ids, int id) {
    return id == 0 ? 0 : static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin()) + 1;
  };
  c.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.pred_ids.size() + 1), static_cast<Eigen::Index>(c.gt_ids.size() + 1));
  for (const auto& [key, count] : joint) c.counts(slot(c.pred_ids, key.first), slot(c.gt_ids, key.second)) += count;
  return c;
}

namespace {

LabelMatching match_from(const Contingency& c) {
  LabelMatching m;
  m.pred_ids = c.pred_ids;
  m.gt_ids = c.gt_ids;
  const auto np = static_cast<Eigen::Index>(c.pred_ids.size()), ng = static_cast<Eigen::Index>(c.gt_ids.size());
  m.iou = Eigen::MatrixXd::Zero(np, ng);
  for (Eigen::Index i = 0; i < np; ++i)
    for (Eigen::Index j = 0; j < ng; ++j) {
      const double inter = c.counts(i + 1, j + 1);
      const double uni = c.pred_area(static_cast<int>(i + 1)) + c.gt_area(static_cast<int>(j + 1)) - inter;
      m.iou(i, j) = uni > 0.0 ? inter / uni : 0.0;
    }
  m.gt_for_pred.assign(static_cast<std::size_t>(np), -1);
  m.pred_for_gt.assign(static_cast<std::size_t>(ng), -1);
  const auto assign = hungarian_max(m.iou);
  for (Eigen::Index i = 0; i < np; ++i) {
    const int j = assign[static_cast<std::size_t>(i)];
    if (j < 0 || m.iou(i, j) <= 0.0) continue;  // zero-overlap pairings count as unmatched
    m.gt_for_pred[static_cast<std::size_t>(i)] = m.gt_ids[static_cast<std::size_t>(j)];
    m.pred_for_gt[static_cast<std::size_t>(j)] = m.pred_ids[static_cast<std::size_t>(i)];
  }
  return m;
}

double ratio(double a, double b) { return b > 0.0 ? a / b : 0.0; }

}  // namespace

LabelMatching match_labels(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt) {
  return match_from(contingency(pred, gt));
}

MetricReport compute_metrics(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt,
                             const LabelMatching& matching, const std::vector<int>& dynamic_ids) {
  const Contingency c = contingency(pred, gt);
  require(!c.gt_ids.empty(), ErrorKind::InvalidArgument, "ground truth has no instances");
  MetricReport r;
  double dyn_sum = 0.0;
  int dyn_count = 0;
  for (std::size_t j = 0; j < c.gt_ids.size(); ++j) {
    InstanceMetrics m;
    m.gt_id = c.gt_ids[j];
    const auto mg = std::find(matching.gt_ids.begin(), matching.gt_ids.end(), m.gt_id);
    if (mg != matching.gt_ids.end())
      m.pred_id = matching.pred_for_gt[static_cast<std::size_t>(mg - matching.gt_ids.begin())];
    m.dynamic = std::find(dynamic_ids.begin(), dynamic_ids.end(), m.gt_id) != dynamic_ids.end();

    const double gt_area = c.gt_area(static_cast<int>(j + 1));
    double tp = 0.0, pred_area = 0.0;
    const auto pi = std::lower_bound(c.pred_ids.begin(), c.pred_ids.end(), m.pred_id);
    if (m.pred_id > 0 && pi != c.pred_ids.end() && *pi == m.pred_id) {
      const int row = static_cast<int>(pi - c.pred_ids.begin()) + 1;
      tp = c.counts(row, static_cast<Eigen::Index>(j + 1));
      pred_area = c.pred_area(row);
    }
    const double fp = pred_area - tp, fn = gt_area - tp, tn = c.total - tp - fp - fn;
    m.iou = ratio(tp, tp + fp + fn);
    m.accuracy = ratio(tp + tn, c.total);
    m.recall = ratio(tp, tp + fn);
    m.precision = ratio(tp, tp + fp);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);

    r.miou += m.iou;
    r.macc += m.accuracy;
    r.recall += m.recall;
    r.f1 += m.f1;
    if (m.dynamic) {
      dyn_sum += m.recall;
      ++dyn_count;
    }
    r.instances.push_back(m);
  }
  const double k = static_cast<double>(r.instances.size());
  r.miou /= k;
  r.macc /= k;
  r.recall /= k;
  r.f1 /= k;
  r.recall_dyn = ratio(dyn_sum, dyn_count);
  return r;
}

MetricReport evaluate(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt,
                      const std::vector<int>& dynamic_ids) {
  return compute_metrics(pred, gt, match_labels(pred, gt), dynamic_ids);
}

std::string MetricReport::to_json() const {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& m : instances)
    inst.push_back({{"gt_id", m.gt_id},
                    {"pred_id", m.pred_id},
                    {"dynamic", m.dynamic},
                    {"iou", m.iou},
                    {"accuracy", m.accuracy},
                    {"recall", m.recall},
                    {"precision", m.precision},
                    {"f1", m.f1}});
  const nlohmann::json j = {{"mIoU", miou}, {"mAcc", macc},          {"Recall", recall},
                            {"F1", f1},     {"Recall_dyn", recall_dyn}, {"instances", inst}};
  return j.dump(2);
}

std::string MetricReport::csv_header() { return "mIoU,mAcc,Recall,F1,Recall_dyn"; }

std::string MetricReport::csv_row() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", miou, macc, recall, f1, recall_dyn);
  return buf;
}

}  // namespace seg4d
