#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aisformer/image_io.hpp"
#include "aisformer/mask_prediction.hpp"
#include "aisformer/masks.hpp"

namespace aisf {

// One annotated object with its full-resolution mask taxonomy.
struct AmodalInstance {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BoundingBox box;
  Bitmap amodal;
  Bitmap visible;
  Bitmap occluder;   // nearer objects' silhouettes inside the box
  Bitmap invisible;  // amodal & !visible
};

struct ImageRecord {
  std::int64_t id = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::string file;
  std::vector<AmodalInstance> instances;
};

struct Category {
  std::int64_t id = 0;
  std::string name;
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<Category> categories;
  std::filesystem::path root;  // image files are relative to this

  std::size_t instance_count() const;
};

// Parses the unified annotation document. Throws ParseError (with a JSON
// location) on schema problems and DataError (with the annotation id) when
// a mask invariant fails. An optional "occluder_rle" is used verbatim;
// otherwise the occluder is derived from the other instances of the image.
Dataset parse_annotations(const std::string& json_text, const std::string& source = "<memory>");
Dataset load_annotations(const std::filesystem::path& path);

std::string annotations_to_json(const Dataset& dataset);
void save_annotations(const Dataset& dataset, const std::filesystem::path& path);

// Fills in invisible (and, when no occluder was given, occluder) masks and
// checks visible <= amodal. Throws DataError.
void finalize_instance(AmodalInstance& inst, bool occluder_given);

// Occluder masks for instances lacking one: an instance j occludes i when j
// is visible at some pixel where i is hidden; i's occluder is the union of
// such j's amodal masks clipped to i's box.
void derive_occluders(ImageRecord& image);

// Four binary maps at mask resolution: each full-resolution mask is cropped
// to `box`, resampled bilinearly and thresholded at 0.5.
MaskTargets gt_at_mask_resolution(const AmodalInstance& inst, const BoundingBox& box, std::size_t h_m,
                                  std::size_t w_m);

// --- synthetic occluded-shapes scenes ---

enum class ShapeKind { rectangle = 0, ellipse = 1, triangle = 2 };
const char* shape_kind_name(ShapeKind kind);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::rectangle;
  std::int64_t category_id = 1;
  double center_x = 0.0;
  double center_y = 0.0;
  double half_width = 1.0;
  double half_height = 1.0;
  int depth = 0;  // smaller is nearer; distinct within a scene

  // Whether the continuous point (x, y) lies inside the silhouette.
  bool contains(double x, double y) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t width = 128;
  std::size_t height = 128;
  std::vector<ShapeSpec> shapes;
};

inline constexpr std::size_t kSynthCategoryCount = 3;
std::vector<Category> synth_categories();

// Random placement of `shape_count` shapes, category = shape kind + 1, with
// a random total depth order.
SceneSpec random_scene_spec(std::uint64_t seed, std::size_t width, std::size_t height, std::size_t shape_count);

struct SynthScene {
  Image8 image;  // 3-channel rendering
  std::vector<AmodalInstance> instances;
};

// Rasterizes pixel centers against every shape. visible = amodal minus the
// union of strictly nearer silhouettes; occluder = that union clipped to the
// instance box. Deterministic per spec.
SynthScene synth_generate(const SceneSpec& spec);

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t images = 4;
  std::size_t width = 128;
  std::size_t height = 128;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 4;
};

// Generates a whole dataset in memory; images are named NNNNNN.ppm.
struct SynthDataset {
  Dataset dataset;
  std::vector<Image8> images;
};
SynthDataset synth_dataset(const SynthOptions& options);

// Writes images and annotations.json into `out_dir`.
void write_synth_dataset(const SynthDataset& synth, const std::filesystem::path& out_dir);

}  // namespace aisf
