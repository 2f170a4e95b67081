#include "aisformer/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace aisf {

namespace {

struct Scored {
  double score;
  bool tp;
};

std::size_t threshold_index(const std::vector<double>& ladder, double value) {
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (std::abs(ladder[i] - value) < 1e-9) return i;
  }
  return ladder.size();
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50.0 + 5.0 * i) / 100.0);
  return t;
}

double interpolated_average_precision(const std::vector<bool>& ranked_tp, std::size_t gt_count) {
  if (gt_count == 0 || ranked_tp.empty()) return 0.0;
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double total = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) total += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return total / 101.0;
}

EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<AmodalInstance>& ground_truth,
                    const EvalParams& params) {
  EvalReport report;
  report.params = params;
  const std::size_t nt = params.iou_thresholds.size();

  std::set<std::int64_t> categories;
  for (const auto& g : ground_truth) categories.insert(g.category_id);

  // Group by (category, image); std::map keeps image order deterministic.
  using Key = std::pair<std::int64_t, std::int64_t>;
  std::map<Key, std::vector<const AmodalInstance*>> gts;
  std::map<Key, std::vector<const Detection*>> dets;
  for (const auto& g : ground_truth) gts[{g.category_id, g.image_id}].push_back(&g);
  for (const auto& d : detections) {
    if (categories.count(d.category_id)) dets[{d.category_id, d.image_id}].push_back(&d);
  }

  std::vector<double> ap_cat, ap50_cat, ap75_cat, ar_cat;
  const std::size_t i50 = threshold_index(params.iou_thresholds, 0.5);
  const std::size_t i75 = threshold_index(params.iou_thresholds, 0.75);

  for (std::int64_t cat : categories) {
    std::vector<std::vector<Scored>> per_threshold(nt);
    std::size_t gt_count = 0, det_count = 0;
    std::set<std::int64_t> images;
    for (const auto& [key, _] : gts) if (key.first == cat) images.insert(key.second);
    for (const auto& [key, _] : dets) if (key.first == cat) images.insert(key.second);

    for (std::int64_t image : images) {
      const auto git = gts.find({cat, image});
      const auto dit = dets.find({cat, image});
      const std::vector<const AmodalInstance*> g = git == gts.end() ? std::vector<const AmodalInstance*>{} : git->second;
      std::vector<const Detection*> d = dit == dets.end() ? std::vector<const Detection*>{} : dit->second;
      std::stable_sort(d.begin(), d.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
      if (d.size() > params.max_dets) d.resize(params.max_dets);
      gt_count += g.size();
      det_count += d.size();

      std::vector<RleMask> g_rle;
      for (const auto* x : g) g_rle.push_back(rle_encode(x->amodal));
      std::vector<std::vector<double>> iou(d.size(), std::vector<double>(g.size()));
      for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) iou[i][j] = mask_iou(d[i]->mask, g_rle[j]);
      }
      for (std::size_t t = 0; t < nt; ++t) {
        std::vector<bool> taken(g.size(), false);
        for (std::size_t i = 0; i < d.size(); ++i) {
          double best = std::min(params.iou_thresholds[t], 1.0 - 1e-10);
          std::ptrdiff_t match = -1;
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (taken[j] || iou[i][j] < best) continue;
            best = iou[i][j];
            match = static_cast<std::ptrdiff_t>(j);
          }
          if (match >= 0) taken[static_cast<std::size_t>(match)] = true;
          per_threshold[t].push_back({d[i]->score, match >= 0});
        }
      }
    }

    CategoryReport cr;
    cr.category_id = cat;
    cr.gt_count = gt_count;
    cr.det_count = det_count;
    std::vector<double> ap_t(nt), ar_t(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      auto& list = per_threshold[t];
      std::stable_sort(list.begin(), list.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
      std::vector<bool> ranked;
      std::size_t tp = 0;
      for (const auto& s : list) {
        ranked.push_back(s.tp);
        tp += s.tp ? 1 : 0;
      }
      ap_t[t] = interpolated_average_precision(ranked, gt_count);
      ar_t[t] = gt_count ? static_cast<double>(tp) / static_cast<double>(gt_count) : 0.0;
    }
    cr.ap = mean_of(ap_t);
    cr.ar = mean_of(ar_t);
    cr.ap50 = i50 < nt ? ap_t[i50] : std::nan("");
    cr.ap75 = i75 < nt ? ap_t[i75] : std::nan("");
    ap_cat.push_back(cr.ap);
    ap50_cat.push_back(cr.ap50);
    ap75_cat.push_back(cr.ap75);
    ar_cat.push_back(cr.ar);
    report.per_category.push_back(cr);
  }

  report.ap = mean_of(ap_cat);
  report.ap50 = mean_of(ap50_cat);
  report.ap75 = mean_of(ap75_cat);
  report.ar = mean_of(ar_cat);
  return report;
}

std::string report_to_json(const EvalReport& report, const std::map<std::string, std::string>& labels) {
  nlohmann::json j;
  j["AP"] = report.ap;
  j["AP50"] = report.ap50;
  j["AP75"] = report.ap75;
  j["AR"] = report.ar;
  j["iou_thresholds"] = report.params.iou_thresholds;
  j["max_dets"] = report.params.max_dets;
  j["ar_definition"] = "AR@" + std::to_string(report.params.max_dets) + ", mean over the IoU thresholds";
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : report.per_category) {
    cats.push_back({{"category_id", c.category_id},
                    {"gt_count", c.gt_count},
                    {"det_count", c.det_count},
                    {"AP", c.ap},
                    {"AP50", c.ap50},
                    {"AP75", c.ap75},
                    {"AR", c.ar}});
  }
  j["per_category"] = cats;
  for (const auto& [k, v] : labels) j["labels"][k] = v;
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report, const std::map<std::int64_t, std::string>& category_names) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s %8s %8s\n", "", "AP", "AP50", "AP75", "AR");
  out += line;
  std::snprintf(line, sizeof(line), "%-16s %8.4f %8.4f %8.4f %8.4f\n", "all", report.ap, report.ap50, report.ap75,
                report.ar);
  out += line;
  for (const auto& c : report.per_category) {
    auto it = category_names.find(c.category_id);
    const std::string name = it != category_names.end() ? it->second : "category " + std::to_string(c.category_id);
    std::snprintf(line, sizeof(line), "%-16s %8.4f %8.4f %8.4f %8.4f\n", name.c_str(), c.ap, c.ap50, c.ap75, c.ar);
    out += line;
  }
  return out;
}

}  // namespace aisf
