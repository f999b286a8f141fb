#pragma once

#include "seg4d/maps.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace seg4d {

/// Maximum-weight one-to-one assignment on a rectangular matrix. Returns, for
/// each row, the assigned column or -1.
std::vector<int> hungarian_max(const Eigen::MatrixXd& weights);

/// Joint pixel counts of predicted and ground-truth labels pooled over every image.
struct Contingency {
  std::vector<int> pred_ids;  // nonzero predicted ids present, ascending
  std::vector<int> gt_ids;    // nonzero ground-truth ids present, ascending
  Eigen::MatrixXd counts;     // (pred_ids + 1) x (gt_ids + 1); index 0 is label 0
  double total = 0.0;         // pixels

  double pred_area(int row) const { return counts.row(row).sum(); }
  double gt_area(int col) const { return counts.col(col).sum(); }
};

Contingency contingency(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt);

struct LabelMatching {
  std::vector<int> pred_ids;
  std::vector<int> gt_ids;
  Eigen::MatrixXd iou;           // pred x gt, sequence-level
  std::vector<int> gt_for_pred;  // per pred id, matched gt id or -1
  std::vector<int> pred_for_gt;  // per gt id, matched pred id or -1
};

/// Hungarian matching on the pooled IoU matrix.
LabelMatching match_labels(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt);

struct InstanceMetrics {
  int gt_id = 0;
  int pred_id = -1;
  bool dynamic = false;
  double iou = 0.0;
  double accuracy = 0.0;  // binary, over every pixel of every image
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double miou = 0.0;
  double macc = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double recall_dyn = 0.0;
  std::vector<InstanceMetrics> instances;

  std::string to_json() const;
  static std::string csv_header();  // "mIoU,mAcc,Recall,F1,Recall_dyn"
  std::string csv_row() const;
};

MetricReport compute_metrics(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt,
                             const LabelMatching& matching, const std::vector<int>& dynamic_ids);

/// match_labels followed by compute_metrics.
MetricReport evaluate(const std::vector<SegmentationMap>& pred, const std::vector<SegmentationMap>& gt,
                      const std::vector<int>& dynamic_ids);

}  // namespace seg4d
