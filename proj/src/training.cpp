#include "aisformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "aisformer/errors.hpp"
#include "aisformer/parallel.hpp"

namespace aisf {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

}  // namespace

std::vector<Image8> load_images(const Dataset& dataset) {
  std::vector<Image8> out;
  out.reserve(dataset.images.size());
  for (const auto& rec : dataset.images) {
    Image8 img = read_pnm(dataset.root / rec.file);
    if (img.width != rec.width || img.height != rec.height) {
      throw DataError(rec.file + ": image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      ", annotations say " + std::to_string(rec.width) + "x" + std::to_string(rec.height));
    }
    out.push_back(std::move(img));
  }
  return out;
}

SampleSet build_sample_set(const Dataset& dataset, const std::vector<Image8>& images, const HeadConfig& head,
                           double min_visible_fraction) {
  if (images.size() != dataset.images.size()) throw InputError("build_sample_set: one image per record required");
  SampleSet set;
  for (std::size_t i = 0; i < images.size(); ++i) {
    set.images.push_back(image_to_tensor(images[i]));
    for (const auto& inst : dataset.images[i].instances) {
      const double amodal = static_cast<double>(inst.amodal.area());
      if (amodal == 0.0) continue;
      if (static_cast<double>(inst.visible.area()) < min_visible_fraction * amodal) continue;
      Sample s;
      s.image = i;
      s.instance_id = inst.id;
      s.category_id = inst.category_id;
      s.box = inst.box;
      s.targets = gt_at_mask_resolution(inst, inst.box, head.mask_height(), head.mask_width());
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

NonFiniteLoss::NonFiniteLoss(std::uint64_t it, double value)
    : std::runtime_error("non-finite loss " + std::to_string(value) + " at iteration " + std::to_string(it)),
      iteration(it) {}

Trainer::Trainer(const RunConfig& config, const SampleSet& samples, std::vector<Category> categories)
    : config_(config), samples_(&samples), categories_(std::move(categories)), model_(config.model) {
  config_.validate();
  if (samples.samples.empty()) throw InputError("training set has no usable samples");
}

Trainer::Trainer(const Checkpoint& ck, const SampleSet& samples)
    : config_(ck.config),
      samples_(&samples),
      categories_(ck.categories),
      model_(model_from_checkpoint(ck)),
      iteration_(ck.iteration) {
  if (samples.samples.empty()) throw InputError("training set has no usable samples");
}

const std::vector<std::size_t>& Trainer::epoch_order(std::uint64_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_order_.resize(samples_->samples.size());
    std::iota(cached_order_.begin(), cached_order_.end(), std::size_t{0});
    Rng rng(mix_seed(mix_seed(config_.model.seed, kShuffleStream), epoch));
    std::shuffle(cached_order_.begin(), cached_order_.end(), rng);
    std::ostringstream state;
    state << rng;
    rng_state_ = state.str();
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t iteration) const {
  const std::size_t n = samples_->samples.size();
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const std::uint64_t draw = iteration * config_.batch_size + b;
    out.push_back(epoch_order(draw / n)[draw % n]);
  }
  return out;
}

StepLoss Trainer::step() {
  const auto batch = batch_indices(iteration_);
  std::vector<Tensor> totals(batch.size());
  std::vector<std::array<double, kMaskKindCount>> heads(batch.size());
  parallel_for(batch.size(), worker_count(), [&](std::size_t b) {
    const Sample& s = samples_->samples[batch[b]];
    const HeadOutput out = model_.forward_roi(model_.features(samples_->images[s.image]), s.box);
    MaskLoss loss = mask_loss(out.masks, s.targets);
    totals[b] = loss.total;
    heads[b] = loss.per_head;
  });

  Tensor total = totals[0];
  for (std::size_t b = 1; b < totals.size(); ++b) total = add(total, totals[b]);
  total = scale(total, 1.0 / static_cast<double>(totals.size()));

  StepLoss result;
  result.iteration = iteration_;
  result.total = total.item();
  for (std::size_t k = 0; k < kMaskKindCount; ++k) {
    double acc = 0.0;
    for (const auto& h : heads) acc += h[k];
    result.per_head[k] = acc / static_cast<double>(heads.size());
  }
  if (!std::isfinite(result.total)) throw NonFiniteLoss(iteration_, result.total);

  total.backward();
  sgd_step(model_.parameters(), config_.learning_rate);
  ++iteration_;
  return result;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.categories = categories_;
  ck.iteration = iteration_;
  epoch_order(iteration_ * config_.batch_size / samples_->samples.size());
  ck.rng_state = rng_state_;
  ck.parameters = snapshot_parameters(model_.parameters());
  return ck;
}

std::string loss_log_header() { return "iteration,loss_occluder,loss_visible,loss_amodal,loss_invisible,total\n"; }

std::string loss_log_row(const StepLoss& loss) {
  std::string row = std::to_string(loss.iteration);
  char buf[40];
  for (double v : loss.per_head) {
    row += ',';
    if (!std::isnan(v)) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      row += buf;
    }
  }
  std::snprintf(buf, sizeof(buf), ",%.10g\n", loss.total);
  return row + buf;
}

}  // namespace aisf
