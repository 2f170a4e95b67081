#include "aisformer/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "aisformer/errors.hpp"
#include "aisformer/parameters.hpp"

namespace aisf {

using nlohmann::json;

namespace {

// Fetches obj[key] or throws ParseError naming the location.
const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing \"" + key + "\"");
  return *it;
}

template <typename T>
T number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  return v.get<T>();
}

RleMask parse_rle(const json& obj, const std::string& where) {
  const json& size = field(obj, "size", where);
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_unsigned() || !size[1].is_number_unsigned()) {
    throw ParseError(where + ".size: expected [height, width]");
  }
  const json& counts = field(obj, "counts", where);
  if (!counts.is_array()) {
    throw ParseError(where + ".counts: expected an integer array (compressed strings are not supported)");
  }
  RleMask r{size[0].get<std::size_t>(), size[1].get<std::size_t>(), {}};
  r.counts.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!counts[i].is_number_unsigned()) {
      throw ParseError(where + ".counts[" + std::to_string(i) + "]: expected a non-negative integer");
    }
    r.counts.push_back(counts[i].get<std::uint32_t>());
  }
  try {
    rle_validate(r);
  } catch (const FormatError& e) {
    throw ParseError(where + ": " + e.what());
  }
  return r;
}

json rle_json(const Bitmap& m) {
  const RleMask r = rle_encode(m);
  return json{{"size", {r.height, r.width}}, {"counts", r.counts}};
}

}  // namespace

std::size_t Dataset::instance_count() const {
  std::size_t n = 0;
  for (const auto& img : images) n += img.instances.size();
  return n;
}

void finalize_instance(AmodalInstance& inst, bool occluder_given) {
  if (!mask_subset(inst.visible, inst.amodal)) {
    throw DataError("annotation " + std::to_string(inst.id) + ": visible mask is not contained in the amodal mask");
  }
  inst.invisible = mask_and_not(inst.amodal, inst.visible);
  if (!occluder_given) inst.occluder = Bitmap::zeros(inst.amodal.height, inst.amodal.width);
}

void derive_occluders(ImageRecord& image) {
  auto& insts = image.instances;
  for (std::size_t i = 0; i < insts.size(); ++i) {
    Bitmap occ = Bitmap::zeros(image.height, image.width);
    for (std::size_t j = 0; j < insts.size(); ++j) {
      if (i == j) continue;
      bool occludes = false;
      const auto& vj = insts[j].visible.bits;
      const auto& hidden = insts[i].invisible.bits;
      for (std::size_t p = 0; p < vj.size() && !occludes; ++p) occludes = vj[p] && hidden[p];
      if (occludes) occ = mask_or(occ, insts[j].amodal);
    }
    insts[i].occluder = mask_clip(occ, insts[i].box);
  }
}

Dataset parse_annotations(const std::string& json_text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  Dataset ds;
  const std::string root = source;
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!field(doc, key, root).is_array()) throw ParseError(root + "." + key + ": expected an array");
  }

  std::map<std::int64_t, std::size_t> image_index;
  const json& images = doc["images"];
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = root + ".images[" + std::to_string(i) + "]";
    ImageRecord rec;
    rec.id = number<std::int64_t>(images[i], "id", where);
    rec.width = number<std::size_t>(images[i], "width", where);
    rec.height = number<std::size_t>(images[i], "height", where);
    const json& file = field(images[i], "file", where);
    if (!file.is_string()) throw ParseError(where + ".file: expected a string");
    rec.file = file.get<std::string>();
    if (!image_index.emplace(rec.id, ds.images.size()).second) {
      throw ParseError(where + ": duplicate image id " + std::to_string(rec.id));
    }
    ds.images.push_back(std::move(rec));
  }

  const json& cats = doc["categories"];
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = root + ".categories[" + std::to_string(i) + "]";
    Category c;
    c.id = number<std::int64_t>(cats[i], "id", where);
    const json& name = field(cats[i], "name", where);
    if (!name.is_string()) throw ParseError(where + ".name: expected a string");
    c.name = name.get<std::string>();
    ds.categories.push_back(std::move(c));
  }

  std::vector<std::vector<bool>> occluder_given(ds.images.size());
  const json& anns = doc["annotations"];
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = root + ".annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    AmodalInstance inst;
    inst.id = number<std::int64_t>(a, "id", where);
    inst.image_id = number<std::int64_t>(a, "image_id", where);
    inst.category_id = number<std::int64_t>(a, "category_id", where);
    auto img_it = image_index.find(inst.image_id);
    if (img_it == image_index.end()) {
      throw ParseError(where + ".image_id: unknown image " + std::to_string(inst.image_id));
    }
    ImageRecord& img = ds.images[img_it->second];

    const json& bbox = field(a, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); })) {
      throw ParseError(where + ".bbox: expected [x, y, w, h]");
    }
    const double x = bbox[0], y = bbox[1], w = bbox[2], h = bbox[3];
    inst.box = {x, y, x + w, y + h};
    if (!inst.box.valid()) throw ParseError(where + ".bbox: width and height must be positive");

    const RleMask amodal = parse_rle(field(a, "amodal_rle", where), where + ".amodal_rle");
    const RleMask visible = parse_rle(field(a, "visible_rle", where), where + ".visible_rle");
    for (const RleMask* r : {&amodal, &visible}) {
      if (r->height != img.height || r->width != img.width) {
        throw ParseError(where + ": mask size " + std::to_string(r->height) + "x" + std::to_string(r->width) +
                         " differs from image " + std::to_string(img.height) + "x" + std::to_string(img.width));
      }
    }
    inst.amodal = rle_decode(amodal);
    inst.visible = rle_decode(visible);
    const bool has_occluder = a.contains("occluder_rle");
    if (has_occluder) {
      const RleMask occ = parse_rle(a["occluder_rle"], where + ".occluder_rle");
      if (occ.height != img.height || occ.width != img.width) throw ParseError(where + ".occluder_rle: size mismatch");
      inst.occluder = rle_decode(occ);
    }
    finalize_instance(inst, has_occluder);
    occluder_given[img_it->second].push_back(has_occluder);
    img.instances.push_back(std::move(inst));
  }

  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& given = occluder_given[i];
    if (std::all_of(given.begin(), given.end(), [](bool b) { return b; })) continue;
    ImageRecord copy = ds.images[i];
    derive_occluders(copy);
    for (std::size_t k = 0; k < given.size(); ++k) {
      if (!given[k]) ds.images[i].instances[k].occluder = std::move(copy.instances[k].occluder);
    }
  }
  return ds;
}

Dataset load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotation file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset ds = parse_annotations(buf.str(), path.filename().string());
  ds.root = path.parent_path();
  return ds;
}

std::string annotations_to_json(const Dataset& dataset) {
  json images = json::array(), anns = json::array(), cats = json::array();
  for (const auto& img : dataset.images) {
    images.push_back({{"id", img.id}, {"width", img.width}, {"height", img.height}, {"file", img.file}});
    for (const auto& inst : img.instances) {
      anns.push_back({{"id", inst.id},
                      {"image_id", inst.image_id},
                      {"category_id", inst.category_id},
                      {"bbox", {inst.box.x0, inst.box.y0, inst.box.width(), inst.box.height()}},
                      {"amodal_rle", rle_json(inst.amodal)},
                      {"visible_rle", rle_json(inst.visible)},
                      {"occluder_rle", rle_json(inst.occluder)}});
    }
  }
  for (const auto& c : dataset.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  return json{{"images", images}, {"annotations", anns}, {"categories", cats}}.dump() + "\n";
}

void save_annotations(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << annotations_to_json(dataset);
  if (!out) throw IoError("write failed for " + path.string());
}

MaskTargets gt_at_mask_resolution(const AmodalInstance& inst, const BoundingBox& box, std::size_t h_m,
                                  std::size_t w_m) {
  if (!box.valid()) throw InputError("gt_at_mask_resolution: degenerate box");
  MaskTargets t;
  t.height = h_m;
  t.width = w_m;
  const std::pair<MaskKind, const Bitmap*> sources[] = {{MaskKind::occluder, &inst.occluder},
                                                        {MaskKind::visible, &inst.visible},
                                                        {MaskKind::amodal, &inst.amodal},
                                                        {MaskKind::invisible, &inst.invisible}};
  for (const auto& [kind, mask] : sources) {
    const Bitmap r = resample_to_box(*mask, box, h_m, w_m);
    t[kind].assign(r.bits.begin(), r.bits.end());
  }
  return t;
}

// --- synthesis ---

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::rectangle:
      return "rectangle";
    case ShapeKind::ellipse:
      return "ellipse";
    case ShapeKind::triangle:
      return "triangle";
  }
  return "?";
}

std::vector<Category> synth_categories() {
  std::vector<Category> cats;
  for (std::size_t k = 0; k < kSynthCategoryCount; ++k) {
    cats.push_back({static_cast<std::int64_t>(k + 1), shape_kind_name(static_cast<ShapeKind>(k))});
  }
  return cats;
}

bool ShapeSpec::contains(double x, double y) const {
  const double dx = x - center_x, dy = y - center_y;
  switch (kind) {
    case ShapeKind::rectangle:
      return std::abs(dx) <= half_width && std::abs(dy) <= half_height;
    case ShapeKind::ellipse:
      return (dx * dx) / (half_width * half_width) + (dy * dy) / (half_height * half_height) <= 1.0;
    case ShapeKind::triangle: {
      // Apex at the top centre, base along the bottom edge.
      if (dy > half_height || dy < -half_height) return false;
      const double t = (dy + half_height) / (2.0 * half_height);
      return std::abs(dx) <= half_width * t;
    }
  }
  return false;
}

SceneSpec random_scene_spec(std::uint64_t seed, std::size_t width, std::size_t height, std::size_t shape_count) {
  SceneSpec spec;
  spec.seed = seed;
  spec.width = width;
  spec.height = height;
  Rng rng(seed);
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const double side = std::min(w, h);
  std::uniform_int_distribution<int> kind_dist(0, static_cast<int>(kSynthCategoryCount) - 1);
  std::uniform_real_distribution<double> size_dist(0.10 * side, 0.25 * side);
  std::uniform_real_distribution<double> cx_dist(0.15 * w, 0.85 * w);
  std::uniform_real_distribution<double> cy_dist(0.15 * h, 0.85 * h);
  for (std::size_t i = 0; i < shape_count; ++i) {
    ShapeSpec s;
    s.kind = static_cast<ShapeKind>(kind_dist(rng));
    s.category_id = static_cast<std::int64_t>(s.kind) + 1;
    s.half_width = size_dist(rng);
    s.half_height = size_dist(rng);
    s.center_x = cx_dist(rng);
    s.center_y = cy_dist(rng);
    spec.shapes.push_back(s);
  }
  std::vector<int> depths(shape_count);
  std::iota(depths.begin(), depths.end(), 0);
  std::shuffle(depths.begin(), depths.end(), rng);
  for (std::size_t i = 0; i < shape_count; ++i) spec.shapes[i].depth = depths[i];
  return spec;
}

SynthScene synth_generate(const SceneSpec& spec) {
  const std::size_t w = spec.width, h = spec.height, n = spec.shapes.size();
  std::vector<Bitmap> silhouettes;
  for (const auto& s : spec.shapes) {
    Bitmap m = Bitmap::zeros(h, w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) m.set(y, x, s.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
    }
    silhouettes.push_back(std::move(m));
  }

  // Indices sorted far to near.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spec.shapes[a].depth > spec.shapes[b].depth; });

  SynthScene scene;
  for (std::size_t i = 0; i < n; ++i) {
    if (silhouettes[i].empty()) continue;
    Bitmap nearer = Bitmap::zeros(h, w);
    for (std::size_t j = 0; j < n; ++j) {
      if (spec.shapes[j].depth < spec.shapes[i].depth) nearer = mask_or(nearer, silhouettes[j]);
    }
    AmodalInstance inst;
    inst.id = static_cast<std::int64_t>(i + 1);
    inst.category_id = spec.shapes[i].category_id;
    inst.amodal = silhouettes[i];
    inst.box = mask_bounds(inst.amodal);
    inst.visible = mask_and_not(inst.amodal, nearer);
    inst.occluder = mask_clip(nearer, inst.box);
    finalize_instance(inst, true);
    scene.instances.push_back(std::move(inst));
  }

  // Rendering: category intensity, depth shading and a per-shape tone,
  // painted far to near, plus Gaussian noise.
  Rng tone_rng(spec.seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> tone_dist(0.2, 0.8);
  std::vector<double> tones(n);
  for (auto& t : tones) t = tone_dist(tone_rng);
  std::vector<double> planes(3 * h * w, 0.08);
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::size_t i = order[rank];
    const double near_rank = static_cast<double>(n - 1 - rank);  // 0 for the nearest
    const double intensity = 0.35 + 0.3 * static_cast<double>(spec.shapes[i].category_id - 1);
    const double shade = 0.95 - 0.6 * (n > 1 ? near_rank / static_cast<double>(n - 1) : 0.0);
    for (std::size_t p = 0; p < h * w; ++p) {
      if (!silhouettes[i].bits[p]) continue;
      planes[p] = intensity;
      planes[h * w + p] = shade;
      planes[2 * h * w + p] = tones[i];
    }
  }
  Rng noise_rng(spec.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::normal_distribution<double> noise(0.0, 0.03);
  scene.image.width = w;
  scene.image.height = h;
  scene.image.channels = 3;
  scene.image.pixels.resize(3 * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(planes[c * h * w + p] + noise(noise_rng), 0.0, 1.0);
      scene.image.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return scene;
}

SynthDataset synth_dataset(const SynthOptions& options) {
  if (options.width == 0 || options.height == 0 || options.min_shapes == 0 || options.max_shapes < options.min_shapes) {
    throw ConfigError("synth: invalid canvas or shape-count range");
  }
  SynthDataset out;
  out.dataset.categories = synth_categories();
  std::int64_t next_id = 1;
  for (std::size_t i = 0; i < options.images; ++i) {
    const std::uint64_t seed = mix_seed(options.seed, i);
    const std::size_t count = options.min_shapes + static_cast<std::size_t>(seed % (options.max_shapes - options.min_shapes + 1));
    SynthScene scene = synth_generate(random_scene_spec(seed, options.width, options.height, count));
    ImageRecord rec;
    rec.id = static_cast<std::int64_t>(i + 1);
    rec.width = options.width;
    rec.height = options.height;
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.ppm", i);
    rec.file = name;
    for (auto& inst : scene.instances) {
      inst.id = next_id++;
      inst.image_id = rec.id;
      rec.instances.push_back(std::move(inst));
    }
    out.dataset.images.push_back(std::move(rec));
    out.images.push_back(std::move(scene.image));
  }
  return out;
}

void write_synth_dataset(const SynthDataset& synth, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < synth.images.size(); ++i) {
    write_pnm(out_dir / synth.dataset.images[i].file, synth.images[i]);
  }
  save_annotations(synth.dataset, out_dir / "annotations.json");
}

}  // namespace aisf
