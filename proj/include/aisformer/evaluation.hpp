#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aisformer/dataset.hpp"
#include "aisformer/masks.hpp"

namespace aisf {

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  double score = 0.0;
  RleMask mask;  // amodal prediction at image resolution
};

std::vector<double> coco_iou_thresholds();  // 0.50, 0.55, ..., 0.95

struct EvalParams {
  std::vector<double> iou_thresholds = coco_iou_thresholds();
  std::size_t max_dets = 100;
  bool operator==(const EvalParams&) const = default;
};

struct CategoryReport {
  std::int64_t category_id = 0;
  std::size_t gt_count = 0;
  std::size_t det_count = 0;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar = 0.0;
  bool operator==(const CategoryReport&) const = default;
};

struct EvalReport {
  double ap = 0.0;    // mean over IoU thresholds and categories
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar = 0.0;    // recall at max_dets, mean over thresholds and categories
  std::vector<CategoryReport> per_category;
  EvalParams params;

  bool operator==(const EvalReport&) const = default;
};

// Mask AP/AR following the COCO protocol: per image and category,
// detections in descending score order (ties keep input order), capped at
// max_dets, are greedily matched to the highest-IoU unmatched ground truth
// with IoU >= threshold. AP is the mean of the interpolated precision at the
// 101 recall points 0, 0.01, ..., 1. Categories without ground truth are
// skipped; detections of such categories are ignored.
EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<AmodalInstance>& ground_truth,
                    const EvalParams& params = {});

// Interpolated AP from one score-ranked list of true/false positives.
double interpolated_average_precision(const std::vector<bool>& ranked_tp, std::size_t gt_count);

std::string report_to_json(const EvalReport& report, const std::map<std::string, std::string>& labels = {});
std::string report_to_table(const EvalReport& report, const std::map<std::int64_t, std::string>& category_names = {});

}  // namespace aisf
