#include "aisformer/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "aisformer/errors.hpp"
#include "aisformer/parallel.hpp"

namespace aisf {

const std::vector<double>& RoiPrediction::at(MaskKind kind) const {
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == kind) return probabilities[i];
  }
  throw InputError(std::string("no ") + mask_kind_name(kind) + " prediction");
}

std::vector<RoiPrediction> predict_samples(const AisformerModel& model, const SampleSet& set) {
  const std::size_t workers = worker_count();
  std::vector<Tensor> features(set.images.size());
  parallel_for(set.images.size(), workers, [&](std::size_t i) {
    NoGradGuard guard;
    features[i] = model.features(set.images[i]);
  });
  std::vector<RoiPrediction> out(set.samples.size());
  parallel_for(set.samples.size(), workers, [&](std::size_t i) {
    NoGradGuard guard;
    const Sample& s = set.samples[i];
    const HeadOutput head = model.forward_roi(features[s.image], s.box);
    out[i].kinds = head.masks.kinds;
    for (MaskKind k : head.masks.kinds) out[i].probabilities.push_back(head.masks.probabilities(k));
  });
  return out;
}

double mask_score(const std::vector<double>& probabilities) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double p : probabilities) {
    if (p >= 0.5) {
      sum += p;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<AmodalInstance> all_instances(const Dataset& dataset) {
  std::vector<AmodalInstance> out;
  for (const auto& rec : dataset.images) out.insert(out.end(), rec.instances.begin(), rec.instances.end());
  return out;
}

std::vector<Detection> ground_truth_detections(const Dataset& dataset) {
  std::vector<Detection> out;
  for (const auto& rec : dataset.images) {
    for (const auto& inst : rec.instances) out.push_back({rec.id, inst.category_id, 1.0, rle_encode(inst.amodal)});
  }
  return out;
}

ModelEvaluation evaluate_model(const AisformerModel& model, const Dataset& dataset, const SampleSet& set) {
  const auto predictions = predict_samples(model, set);
  const std::size_t hm = model.config().head.mask_height(), wm = model.config().head.mask_width();
  ModelEvaluation ev;
  double iou_sum = 0.0;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const Sample& s = set.samples[i];
    const auto& probs = predictions[i].at(MaskKind::amodal);
    const auto& target = s.targets[MaskKind::amodal];
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < probs.size(); ++p) {
      const bool a = probs[p] >= 0.5, b = target[p] >= 0.5;
      inter += a && b;
      uni += a || b;
    }
    iou_sum += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;

    const ImageRecord& rec = dataset.images[s.image];
    const Bitmap pasted = paste_mask(probs, hm, wm, s.box, rec.height, rec.width);
    ev.detections.push_back({rec.id, s.category_id, mask_score(probs), rle_encode(pasted)});
  }
  ev.mean_amodal_iou = set.samples.empty() ? 0.0 : iou_sum / static_cast<double>(set.samples.size());
  ev.report = evaluate(ev.detections, all_instances(dataset));
  return ev;
}

AttentionViz visualize_attention(const AisformerModel& model, const Image8& image, const BoundingBox& box) {
  const double w = static_cast<double>(image.width), h = static_cast<double>(image.height);
  if (!box.valid() || box.x0 < 0.0 || box.y0 < 0.0 || box.x1 > w || box.y1 > h) {
    throw InputError("box lies outside the " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " image");
  }
  AttentionViz viz;
  const auto cx0 = static_cast<std::size_t>(std::floor(box.x0)), cy0 = static_cast<std::size_t>(std::floor(box.y0));
  const auto cx1 = static_cast<std::size_t>(std::ceil(box.x1)), cy1 = static_cast<std::size_t>(std::ceil(box.y1));
  viz.roi_crop.width = cx1 - cx0;
  viz.roi_crop.height = cy1 - cy0;
  viz.roi_crop.channels = image.channels;
  for (std::size_t y = cy0; y < cy1; ++y) {
    for (std::size_t x = cx0; x < cx1; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) viz.roi_crop.pixels.push_back(image.at(y, x, c));
    }
  }

  NoGradGuard guard;
  const HeadOutput out = model.forward_roi(model.features(image_to_tensor(image)), box);
  const HeadConfig& hc = model.config().head;
  const Tensor& attn = out.attention.cross_attention;
  const std::size_t n = attn.dim(1);
  for (std::size_t k = 0; k < out.attention.kinds.size(); ++k) {
    const auto row = attn.data().subspan(k * n, n);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double range = *hi - *lo;
    Image8 map;
    map.width = hc.mask_width();
    map.height = hc.mask_height();
    map.channels = 1;
    for (double v : row) {
      map.pixels.push_back(range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (v - *lo) / range)) : 0);
    }
    viz.maps.emplace_back(out.attention.kinds[k], std::move(map));
  }
  return viz;
}

std::vector<AblationConfig> ablation_configs() {
  //                 occluder visible invisible
  return {
      {1, {false, false, false}}, {2, {true, false, false}}, {3, {false, true, false}},
      {4, {false, true, true}},   {5, {true, true, false}},  {6, {true, true, true}},
  };
}

std::vector<AblationResult> run_ablation(const RunConfig& base, const AblationData& data,
                                         const std::function<void(const AblationResult&)>& progress) {
  std::vector<AblationResult> results;
  for (const auto& ac : ablation_configs()) {
    RunConfig cfg = base;
    cfg.model.head.queries = ac.flags;
    Trainer trainer(cfg, *data.train_samples, data.train->categories);
    AblationResult r;
    r.config = ac;
    for (std::size_t i = 0; i < cfg.iterations; ++i) r.final_loss = trainer.step().total;
    r.evaluation = evaluate_model(trainer.model(), *data.test, *data.test_samples);
    if (progress) progress(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string ablation_table(const std::vector<AblationResult>& results) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-4s %-9s %-8s %-7s %-10s %10s %9s %8s %8s %8s %8s\n", "Exp", "occluder",
                "visible", "amodal", "invisible", "final_loss", "amodal_iou", "AP", "AP50", "AP75", "AR");
  out += line;
  auto mark = [](bool b) { return b ? "x" : "-"; };
  for (const auto& r : results) {
    const auto& f = r.config.flags;
    const auto& rep = r.evaluation.report;
    std::snprintf(line, sizeof(line), "#%-3d %-9s %-8s %-7s %-10s %10.5f %9.4f %8.4f %8.4f %8.4f %8.4f\n",
                  r.config.experiment, mark(f.occluder), mark(f.visible), "x", mark(f.invisible), r.final_loss,
                  r.evaluation.mean_amodal_iou, rep.ap, rep.ap50, rep.ap75, rep.ar);
    out += line;
  }
  return out;
}

std::string ablation_json(const std::vector<AblationResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    const auto& f = r.config.flags;
    const auto& rep = r.evaluation.report;
    arr.push_back({{"experiment", r.config.experiment},
                   {"flags", {{"occluder", f.occluder}, {"visible", f.visible}, {"amodal", true},
                              {"invisible", f.invisible}}},
                   {"label", f.label()},
                   {"final_loss", r.final_loss},
                   {"mean_amodal_iou", r.evaluation.mean_amodal_iou},
                   {"AP", rep.ap},
                   {"AP50", rep.ap50},
                   {"AP75", rep.ap75},
                   {"AR", rep.ar}});
  }
  return arr.dump(2) + "\n";
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, std::size_t train_images) {
  train_images = std::min(train_images, dataset.images.size());
  Dataset a, b;
  a.categories = b.categories = dataset.categories;
  a.root = b.root = dataset.root;
  const auto mid = dataset.images.begin() + static_cast<std::ptrdiff_t>(train_images);
  a.images.assign(dataset.images.begin(), mid);
  b.images.assign(mid, dataset.images.end());
  return {std::move(a), std::move(b)};
}

}  // namespace aisf
