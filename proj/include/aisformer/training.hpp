#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aisformer/checkpoint.hpp"
#include "aisformer/dataset.hpp"
#include "aisformer/model.hpp"
#include "aisformer/run_config.hpp"

namespace aisf {

// One ground-truth ROI with its targets at mask resolution.
struct Sample {
  std::size_t image = 0;  // index into SampleSet::images
  std::int64_t instance_id = 0;
  std::int64_t category_id = 0;
  BoundingBox box;        // image pixels
  MaskTargets targets;
};

struct SampleSet {
  std::vector<Tensor> images;  // [channels x H x W], values in [0, 1]
  std::vector<Sample> samples;
};

// Reads every image file of the dataset relative to its root.
std::vector<Image8> load_images(const Dataset& dataset);

// One sample per instance in image order. Instances whose visible area is
// below `min_visible_fraction` of the amodal area are skipped.
SampleSet build_sample_set(const Dataset& dataset, const std::vector<Image8>& images, const HeadConfig& head,
                           double min_visible_fraction = 0.0);

struct StepLoss {
  std::uint64_t iteration = 0;  // index of the step that produced this loss
  std::array<double, kMaskKindCount> per_head{};  // batch mean; NaN when not predicted
  double total = 0.0;
};

// Raised when a step produces a non-finite loss; the parameters are left
// untouched.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::uint64_t iteration, double value);
  std::uint64_t iteration;
};

// Batched SGD over a sample set. The visiting order is a fresh permutation
// per epoch drawn from (seed, epoch) alone, so a run resumed from a
// checkpoint continues exactly as the uninterrupted run would.
class Trainer {
 public:
  Trainer(const RunConfig& config, const SampleSet& samples, std::vector<Category> categories);
  Trainer(const Checkpoint& checkpoint, const SampleSet& samples);

  StepLoss step();
  std::uint64_t iteration() const { return iteration_; }
  const AisformerModel& model() const { return model_; }
  AisformerModel& model() { return model_; }
  const RunConfig& config() const { return config_; }
  Checkpoint checkpoint() const;

  // Sample indices consumed by the step with the given iteration number.
  std::vector<std::size_t> batch_indices(std::uint64_t iteration) const;

 private:
  const std::vector<std::size_t>& epoch_order(std::uint64_t epoch) const;

  RunConfig config_;
  const SampleSet* samples_;
  std::vector<Category> categories_;
  AisformerModel model_;
  std::uint64_t iteration_ = 0;
  mutable std::uint64_t cached_epoch_ = UINT64_MAX;
  mutable std::vector<std::size_t> cached_order_;
  mutable std::string rng_state_;
};

std::string loss_log_header();
std::string loss_log_row(const StepLoss& loss);

}  // namespace aisf
