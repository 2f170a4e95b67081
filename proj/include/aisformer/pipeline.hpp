#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aisformer/evaluation.hpp"
#include "aisformer/training.hpp"

namespace aisf {

// Sigmoid maps at mask resolution for one ROI, in prediction order.
struct RoiPrediction {
  std::vector<MaskKind> kinds;
  std::vector<std::vector<double>> probabilities;  // each H_m x W_m, row-major

  const std::vector<double>& at(MaskKind kind) const;
};

// Gradient-free forward of every sample, fanned out over worker_count()
// threads. Output order follows the samples.
std::vector<RoiPrediction> predict_samples(const AisformerModel& model, const SampleSet& set);

// Mean sigmoid over the pixels predicted as foreground; 0 when none are.
double mask_score(const std::vector<double>& probabilities);

struct ModelEvaluation {
  double mean_amodal_iou = 0.0;  // at mask resolution, thresholded at 0.5
  std::vector<Detection> detections;
  EvalReport report;
};

// Runs the model on every ground-truth box of `dataset`, pastes the amodal
// probabilities back into image coordinates, thresholds at 0.5 and scores
// against the ground truth.
ModelEvaluation evaluate_model(const AisformerModel& model, const Dataset& dataset, const SampleSet& set);

// The ground-truth amodal masks as score-1 detections.
std::vector<Detection> ground_truth_detections(const Dataset& dataset);
std::vector<AmodalInstance> all_instances(const Dataset& dataset);

// Per-query cross-attention maps for one ROI.
struct AttentionViz {
  Image8 roi_crop;                                   // image pixels inside the box
  std::vector<std::pair<MaskKind, Image8>> maps;     // H_m x W_m graymaps, min-max scaled to 0..255
};

// Throws InputError when the box does not lie inside the image.
AttentionViz visualize_attention(const AisformerModel& model, const Image8& image, const BoundingBox& box);

// The six query-set configurations of the occluder/visible/invisible ablation.
struct AblationConfig {
  int experiment = 0;
  QueryFlags flags;
};
std::vector<AblationConfig> ablation_configs();

struct AblationResult {
  AblationConfig config;
  double final_loss = 0.0;
  ModelEvaluation evaluation;
};

struct AblationData {
  const Dataset* train = nullptr;
  const SampleSet* train_samples = nullptr;
  const Dataset* test = nullptr;
  const SampleSet* test_samples = nullptr;
};

// Trains and evaluates each configuration from the same seed. `progress`
// (optional) receives one line per finished run.
std::vector<AblationResult> run_ablation(const RunConfig& base, const AblationData& data,
                                         const std::function<void(const AblationResult&)>& progress = {});
std::string ablation_table(const std::vector<AblationResult>& results);
std::string ablation_json(const std::vector<AblationResult>& results);

// Splits a dataset by image: the first `train_images` records and the rest.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, std::size_t train_images);

}  // namespace aisf
