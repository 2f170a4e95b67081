#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "aisformer/dataset.hpp"
#include "aisformer/errors.hpp"
#include "support/zbuffer.hpp"

using namespace aisf;

namespace {

Bitmap random_bitmap(std::size_t h, std::size_t w, double density, std::mt19937_64& g) {
  std::bernoulli_distribution coin(density);
  Bitmap m = Bitmap::zeros(h, w);
  for (auto& b : m.bits) b = coin(g) ? 1 : 0;
  return m;
}

Bitmap from_rows(const std::vector<std::string>& rows) {
  Bitmap m = Bitmap::zeros(rows.size(), rows.front().size());
  for (std::size_t y = 0; y < rows.size(); ++y) {
    for (std::size_t x = 0; x < rows[y].size(); ++x) m.set(y, x, rows[y][x] == '#');
  }
  return m;
}

std::string rle_json(const Bitmap& m) {
  const RleMask r = rle_encode(m);
  std::string s = "{\"size\":[" + std::to_string(r.height) + "," + std::to_string(r.width) + "],\"counts\":[";
  for (std::size_t i = 0; i < r.counts.size(); ++i) s += (i ? "," : "") + std::to_string(r.counts[i]);
  return s + "]}";
}

// Two overlapping 10x10 rectangles on a 16x16 image; annotation 2 is in front.
struct TwoRectangles {
  Bitmap back_amodal, back_visible, front;

  TwoRectangles() : back_amodal(Bitmap::zeros(16, 16)), front(Bitmap::zeros(16, 16)) {
    for (std::size_t y = 1; y < 11; ++y) {
      for (std::size_t x = 1; x < 11; ++x) back_amodal.set(y, x, true);
    }
    for (std::size_t y = 5; y < 15; ++y) {
      for (std::size_t x = 5; x < 15; ++x) front.set(y, x, true);
    }
    back_visible = mask_and_not(back_amodal, front);
  }

  std::string json(bool with_occluder = false) const {
    std::string occ = with_occluder ? ",\"occluder_rle\":" + rle_json(Bitmap::zeros(16, 16)) : "";
    return R"({"images":[{"id":7,"width":16,"height":16,"file":"a.ppm"}],"categories":[{"id":1,"name":"box"}],)"
           R"("annotations":[{"id":1,"image_id":7,"category_id":1,"bbox":[1,1,10,10],"amodal_rle":)" +
           rle_json(back_amodal) + ",\"visible_rle\":" + rle_json(back_visible) + occ +
           R"(},{"id":2,"image_id":7,"category_id":1,"bbox":[5,5,10,10],"amodal_rle":)" + rle_json(front) +
           ",\"visible_rle\":" + rle_json(front) + "}]}";
  }
};

}  // namespace

TEST_CASE("rle encoding") {
  CHECK(rle_encode(Bitmap::zeros(3, 3)).counts == std::vector<std::uint32_t>{9});
  CHECK(rle_encode(from_rows({"##", "##"})).counts == std::vector<std::uint32_t>{0, 4});
  // Column-major order: the first column is read top to bottom first.
  CHECK(rle_encode(from_rows({"#.", "#."})).counts == std::vector<std::uint32_t>{0, 2, 2});
  CHECK(rle_encode(from_rows({"##", ".."})).counts == std::vector<std::uint32_t>{0, 1, 1, 1, 1});

  std::mt19937_64 g(1);
  std::uniform_int_distribution<std::size_t> dim(1, 24);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Bitmap m = random_bitmap(dim(g), dim(g), density(g), g);
    const RleMask r = rle_encode(m);
    CHECK(r.area() == m.area());
    CHECK(rle_decode(r) == m);
  }

  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {1, 2}}), FormatError);
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {3, 2}}), FormatError);
  CHECK_NOTHROW(rle_validate(RleMask{2, 2, {4}}));
}

TEST_CASE("mask iou") {
  const Bitmap a = from_rows({"##."}), b = from_rows({".##"});
  CHECK(mask_iou(rle_encode(a), rle_encode(b)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(mask_iou(rle_encode(a), rle_encode(a)) == 1.0);
  CHECK(mask_iou(rle_encode(Bitmap::zeros(2, 2)), rle_encode(Bitmap::zeros(2, 2))) == 0.0);
  CHECK_THROWS_AS(mask_iou(rle_encode(Bitmap::zeros(2, 2)), rle_encode(Bitmap::zeros(2, 3))), InputError);

  std::mt19937_64 g(2);
  for (int i = 0; i < 100; ++i) {
    const Bitmap x = random_bitmap(9, 13, 0.4, g), y = random_bitmap(9, 13, 0.6, g);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < x.bits.size(); ++p) {
      inter += x.bits[p] && y.bits[p];
      uni += x.bits[p] || y.bits[p];
    }
    const double expect = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    CHECK(std::abs(mask_iou(rle_encode(x), rle_encode(y)) - expect) <= 1e-15);
  }
}

TEST_CASE("mask set operations") {
  const Bitmap a = from_rows({"##..", "##.."}), b = from_rows({".##.", ".##."});
  CHECK(mask_and(a, b) == from_rows({".#..", ".#.."}));
  CHECK(mask_or(a, b) == from_rows({"###.", "###."}));
  CHECK(mask_and_not(a, b) == from_rows({"#...", "#..."}));
  CHECK(mask_subset(mask_and(a, b), a));
  CHECK_FALSE(mask_subset(b, a));
  const BoundingBox bounds = mask_bounds(b);
  CHECK(bounds.x0 == 1.0);
  CHECK(bounds.x1 == 3.0);
  CHECK(bounds.y0 == 0.0);
  CHECK(bounds.y1 == 2.0);
  CHECK_FALSE(mask_bounds(Bitmap::zeros(2, 2)).valid());
  CHECK(mask_clip(mask_or(a, b), BoundingBox{0, 0, 1, 2}) == from_rows({"#...", "#..."}));
}

TEST_CASE("resampling to a box") {
  SUBCASE("identity grid") {
    std::mt19937_64 g(3);
    const Bitmap m = random_bitmap(8, 6, 0.5, g);
    CHECK(resample_to_box(m, BoundingBox{0, 0, 6, 8}, 8, 6) == m);
  }
  SUBCASE("full mask") {
    Bitmap m = Bitmap::zeros(10, 10);
    for (auto& b : m.bits) b = 1;
    const Bitmap r = resample_to_box(m, BoundingBox{2, 2, 8, 8}, 4, 4);
    CHECK(r.area() == 16);
  }
  SUBCASE("half plane boundary within one pixel") {
    for (double edge : {7.3, 10.0, 15.8}) {
      Bitmap m = Bitmap::zeros(32, 32);
      for (std::size_t y = 0; y < 32; ++y) {
        for (std::size_t x = 0; x < 32; ++x) m.set(y, x, static_cast<double>(x) + 0.5 < edge);
      }
      const BoundingBox box{1.0, 3.0, 29.0, 27.0};
      const std::size_t out = 14;
      const Bitmap r = resample_to_box(m, box, out, out);
      const double bin = box.width() / static_cast<double>(out);
      for (std::size_t i = 0; i < out; ++i) {
        for (std::size_t j = 0; j < out; ++j) {
          const double center = box.x0 + (static_cast<double>(j) + 0.5) * bin;
          if (std::abs(center - edge) > 1.0) CHECK(static_cast<bool>(r.at(i, j)) == (center < edge));
        }
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(resample_to_box(Bitmap::zeros(4, 4), BoundingBox{2, 2, 2, 3}, 2, 2), InputError);
    CHECK_THROWS_AS(resample_to_box(Bitmap::zeros(4, 4), BoundingBox{0, 0, 2, 2}, 0, 2), InputError);
  }
}

TEST_CASE("pasting soft masks") {
  const BoundingBox box{2.0, 1.0, 6.0, 5.0};
  const Bitmap ones = paste_mask(std::vector<double>(9, 0.9), 3, 3, box, 8, 8);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      const bool inside = x >= 2 && x < 6 && y >= 1 && y < 5;
      CHECK(static_cast<bool>(ones.at(y, x)) == inside);
    }
  }
  CHECK(paste_mask(std::vector<double>(9, 0.1), 3, 3, box, 8, 8).empty());
  // Left column high, right column low: the image splits inside the box.
  const Bitmap split = paste_mask({1, 0, 1, 0}, 2, 2, box, 8, 8);
  for (std::size_t y = 1; y < 5; ++y) {
    CHECK(split.at(y, 2) == 1);
    CHECK(split.at(y, 5) == 0);
  }
  CHECK_THROWS_AS(paste_mask({1, 0}, 2, 2, box, 8, 8), InputError);
}

TEST_CASE("synthetic scenes agree with a z-buffer") {
  std::size_t instances = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SceneSpec spec = random_scene_spec(seed, 48, 40, 2 + seed % 4);
    const SynthScene scene = synth_generate(spec);
    for (const AmodalInstance& inst : scene.instances) {
      ++instances;
      const std::size_t index = static_cast<std::size_t>(inst.id - 1);
      const auto truth = aisf::testing::zbuffer_truth(spec, index);
      CHECK(inst.amodal.bits == truth.amodal);
      CHECK(inst.visible.bits == truth.visible);
      CHECK(inst.occluder.bits == truth.occluder);
      CHECK(mask_and(inst.visible, inst.invisible).empty());
      CHECK(mask_or(inst.visible, inst.invisible) == inst.amodal);
      CHECK(inst.category_id == static_cast<std::int64_t>(spec.shapes[index].kind) + 1);
    }
  }
  CHECK(instances > 400);
}

TEST_CASE("synthetic scene edge cases") {
  SUBCASE("deterministic") {
    const SynthScene a = synth_generate(random_scene_spec(5, 64, 64, 4));
    const SynthScene b = synth_generate(random_scene_spec(5, 64, 64, 4));
    CHECK(a.image.pixels == b.image.pixels);
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) CHECK(a.instances[i].visible == b.instances[i].visible);
    CHECK(synth_generate(random_scene_spec(6, 64, 64, 4)).image.pixels != a.image.pixels);
  }
  SUBCASE("single shape is fully visible") {
    const SynthScene s = synth_generate(random_scene_spec(9, 32, 32, 1));
    REQUIRE(s.instances.size() == 1);
    CHECK(s.instances[0].visible == s.instances[0].amodal);
    CHECK(s.instances[0].occluder.empty());
    CHECK(s.instances[0].invisible.empty());
  }
  SUBCASE("nested shapes") {
    SceneSpec spec;
    spec.width = spec.height = 32;
    spec.shapes = {{ShapeKind::rectangle, 1, 16, 16, 12, 12, 1}, {ShapeKind::rectangle, 1, 16, 16, 4, 4, 0}};
    const SynthScene s = synth_generate(spec);
    REQUIRE(s.instances.size() == 2);
    const auto& big = s.instances[0];
    const auto& small = s.instances[1];
    CHECK(small.visible == small.amodal);
    CHECK(big.invisible == small.amodal);
    CHECK(big.occluder == small.amodal);
    CHECK(small.amodal.area() == 64);
  }
}

TEST_CASE("targets at mask resolution") {
  std::size_t total = 0, violations = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SynthScene s = synth_generate(random_scene_spec(seed, 64, 64, 3));
    for (const auto& inst : s.instances) {
      const MaskTargets t = gt_at_mask_resolution(inst, inst.box, 14, 14);
      CHECK(t.height == 14);
      for (std::size_t p = 0; p < 14 * 14; ++p) {
        ++total;
        if (t[MaskKind::visible][p] > t[MaskKind::amodal][p]) ++violations;
        if (t[MaskKind::invisible][p] > t[MaskKind::amodal][p]) ++violations;
      }
    }
  }
  CHECK(static_cast<double>(violations) <= 0.01 * static_cast<double>(total));
  CHECK_THROWS_AS(gt_at_mask_resolution(AmodalInstance{}, BoundingBox{}, 4, 4), InputError);
}

TEST_CASE("annotation parsing") {
  const TwoRectangles fx;

  SUBCASE("derived occluders") {
    const Dataset ds = parse_annotations(fx.json());
    REQUIRE(ds.images.size() == 1);
    CHECK(ds.images[0].id == 7);
    CHECK(ds.categories.size() == 1);
    REQUIRE(ds.images[0].instances.size() == 2);
    const auto& back = ds.images[0].instances[0];
    const auto& front = ds.images[0].instances[1];
    CHECK(back.box.x1 == 11.0);
    CHECK(back.invisible == mask_and(fx.back_amodal, fx.front));
    CHECK(back.occluder == mask_clip(fx.front, back.box));
    CHECK(front.occluder.empty());
    CHECK(front.invisible.empty());
  }
  SUBCASE("explicit occluder is used verbatim") {
    const Dataset ds = parse_annotations(fx.json(true));
    CHECK(ds.images[0].instances[0].occluder.empty());
  }
  SUBCASE("round trip") {
    const Dataset ds = parse_annotations(fx.json());
    const Dataset again = parse_annotations(annotations_to_json(ds));
    REQUIRE(again.images[0].instances.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(again.images[0].instances[i].amodal == ds.images[0].instances[i].amodal);
      CHECK(again.images[0].instances[i].occluder == ds.images[0].instances[i].occluder);
    }
  }
  SUBCASE("empty lists") {
    const Dataset ds = parse_annotations(R"({"images":[],"annotations":[],"categories":[]})");
    CHECK(ds.images.empty());
    CHECK(ds.instance_count() == 0);
  }
  SUBCASE("schema errors") {
    CHECK_THROWS_AS(parse_annotations("{"), ParseError);
    CHECK_THROWS_AS(parse_annotations(R"({"images":[],"categories":[]})"), ParseError);
    std::string bad = fx.json();
    bad.replace(bad.find("\"image_id\":7"), 12, "\"image_id\":8");
    CHECK_THROWS_WITH_AS(parse_annotations(bad), doctest::Contains("unknown image"), ParseError);
    std::string bbox = fx.json();
    bbox.replace(bbox.find("[1,1,10,10]"), 11, "[1,1,0,10]");
    CHECK_THROWS_AS(parse_annotations(bbox), ParseError);
  }
  SUBCASE("visible outside amodal") {
    TwoRectangles broken;
    broken.back_visible = broken.front;
    CHECK_THROWS_WITH_AS(parse_annotations(broken.json()), doctest::Contains("annotation 1"), DataError);
  }
  SUBCASE("visible equal to amodal") {
    TwoRectangles same;
    same.back_visible = same.back_amodal;
    const Dataset ds = parse_annotations(same.json());
    CHECK(ds.images[0].instances[0].invisible.empty());
    CHECK(ds.images[0].instances[0].occluder.empty());
  }
}

TEST_CASE("synthetic datasets on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "aisf_test_synth";
  std::filesystem::remove_all(dir);
  SynthOptions opt;
  opt.seed = 11;
  opt.images = 3;
  opt.width = 40;
  opt.height = 30;
  const SynthDataset synth = synth_dataset(opt);
  CHECK(synth.dataset.images.size() == 3);
  CHECK(synth.dataset.categories.size() == kSynthCategoryCount);
  write_synth_dataset(synth, dir);
  const Dataset loaded = load_annotations(dir / "annotations.json");
  CHECK(loaded.root == dir);
  CHECK(loaded.instance_count() == synth.dataset.instance_count());
  const Image8 img = read_pnm(dir / loaded.images[1].file);
  CHECK(img.pixels == synth.images[1].pixels);
  CHECK(img.width == 40);
  CHECK(img.channels == 3);

  const SynthDataset again = synth_dataset(opt);
  CHECK(annotations_to_json(again.dataset) == annotations_to_json(synth.dataset));

  {
    std::ofstream bad(dir / "bad.ppm", std::ios::binary);
    bad << "P6\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(read_pnm(dir / "bad.ppm"), FormatError);
  CHECK_THROWS_AS(read_pnm(dir / "missing.ppm"), IoError);
  CHECK_THROWS_AS(load_annotations(dir / "missing.json"), IoError);
  opt.max_shapes = 1;
  CHECK_THROWS_AS(synth_dataset(opt), ConfigError);
  std::filesystem::remove_all(dir);
}
