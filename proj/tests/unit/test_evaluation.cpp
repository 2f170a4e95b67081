#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aisformer/evaluation.hpp"
#include "support/eval_oracle.hpp"

using namespace aisf;
using aisf::testing::coco_oracle;
using aisf::testing::ThreeByFour;

namespace {

// Random scenes: non-overlapping ground-truth rectangles per image and noisy
// detections (shifted copies plus clutter).
struct RandomBenchmark {
  std::vector<AmodalInstance> gts;
  std::vector<Detection> dets;

  explicit RandomBenchmark(std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_int_distribution<int> shift(-3, 3), coin(0, 2), pos(0, 15);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    std::int64_t id = 1;
    for (std::int64_t image = 1; image <= 3; ++image) {
      for (std::size_t slot = 0; slot < 3; ++slot) {
        Bitmap m = Bitmap::zeros(24, 24);
        const std::size_t x0 = slot * 8;
        for (std::size_t y = 4; y < 14; ++y) {
          for (std::size_t x = x0; x < x0 + 6; ++x) m.set(y, x, true);
        }
        const std::int64_t cat = 1 + static_cast<std::int64_t>(slot % 2);
        AmodalInstance inst;
        inst.id = id++;
        inst.image_id = image;
        inst.category_id = cat;
        inst.amodal = m;
        gts.push_back(inst);
        if (coin(g) == 0) continue;
        Bitmap d = Bitmap::zeros(24, 24);
        const int dy = shift(g), dx = shift(g);
        for (int y = 0; y < 24; ++y) {
          for (int x = 0; x < 24; ++x) {
            const int sy = y - dy, sx = x - dx;
            if (sy >= 0 && sx >= 0 && sy < 24 && sx < 24) d.set(y, x, m.at(sy, sx));
          }
        }
        dets.push_back({image, cat, score(g), rle_encode(d)});
      }
      for (int k = 0; k < 2; ++k) {
        Bitmap clutter = Bitmap::zeros(24, 24);
        const int y0 = pos(g), x0 = pos(g);
        for (int y = y0; y < y0 + 6; ++y) {
          for (int x = x0; x < x0 + 6; ++x) clutter.set(y, x, true);
        }
        dets.push_back({image, 1 + k, score(g), rle_encode(clutter)});
      }
    }
  }
};

void check_close(const EvalReport& r, const aisf::testing::OracleScores& o) {
  CHECK(std::abs(r.ap - o.ap) <= 1e-12);
  CHECK(std::abs(r.ap50 - o.ap50) <= 1e-12);
  CHECK(std::abs(r.ap75 - o.ap75) <= 1e-12);
  CHECK(std::abs(r.ar - o.ar) <= 1e-12);
}

}  // namespace

TEST_CASE("interpolated average precision") {
  CHECK(interpolated_average_precision({true, true}, 2) == 1.0);
  CHECK(interpolated_average_precision({}, 3) == 0.0);
  CHECK(interpolated_average_precision({true}, 0) == 0.0);
  // One of two found at rank 1: recall 0.5 reached for levels 0..0.50.
  CHECK(std::abs(interpolated_average_precision({true}, 2) - 51.0 / 101.0) <= 1e-15);
  // FP then TP: precision 0.5 across every level.
  CHECK(std::abs(interpolated_average_precision({false, true}, 1) - 0.5) <= 1e-15);
}

TEST_CASE("perfect detector and empty detector") {
  const RandomBenchmark b(1);
  std::vector<Detection> perfect;
  for (const auto& g : b.gts) perfect.push_back({g.image_id, g.category_id, 1.0, rle_encode(g.amodal)});
  const EvalReport r = evaluate(perfect, b.gts);
  CHECK(r.ap == 1.0);
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 1.0);
  CHECK(r.ar == 1.0);
  CHECK(r.per_category.size() == 2);

  const EvalReport none = evaluate({}, b.gts);
  CHECK(none.ap == 0.0);
  CHECK(none.ar == 0.0);
}

TEST_CASE("three ground truths and four detections") {
  const ThreeByFour fx;
  const EvalReport r = evaluate(fx.dets, fx.gts);
  // Ranked TP, FP, TP, TP at IoU 0.5 and TP, FP, FP, TP above 10/12.
  const double high = 84.25 / 101.0, low = 50.5 / 101.0;
  CHECK(std::abs(r.ap50 - high) <= 1e-12);
  CHECK(std::abs(r.ap75 - high) <= 1e-12);
  CHECK(std::abs(r.ap - (7 * high + 3 * low) / 10.0) <= 1e-12);
  CHECK(std::abs(r.ar - 0.9) <= 1e-12);

  std::vector<double> scores = {0.1, 0.2, 0.3, 0.4};
  int permutations = 0;
  do {
    const ThreeByFour p(scores);
    check_close(evaluate(p.dets, p.gts), coco_oracle(p.dets, p.gts));
    ++permutations;
  } while (std::next_permutation(scores.begin(), scores.end()));
  CHECK(permutations == 24);
}

TEST_CASE("random benchmarks against the oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RandomBenchmark b(seed);
    check_close(evaluate(b.dets, b.gts), coco_oracle(b.dets, b.gts));
  }
}

TEST_CASE("monotone score rescaling leaves the report unchanged") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RandomBenchmark b(seed);
    const EvalReport base = evaluate(b.dets, b.gts);
    for (auto f : {+[](double s) { return 3.0 * s + 1.0; }, +[](double s) { return std::exp(5.0 * s); },
                   +[](double s) { return s * s * s; }}) {
      std::vector<Detection> rescaled = b.dets;
      for (auto& d : rescaled) d.score = f(d.score);
      CHECK(evaluate(rescaled, b.gts) == base);
    }
  }
}

TEST_CASE("a lowest-score false positive never raises AP") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RandomBenchmark b(seed);
    const EvalReport base = evaluate(b.dets, b.gts);
    std::vector<Detection> more = b.dets;
    Bitmap fp = Bitmap::zeros(24, 24);
    fp.set(23, 23, true);
    more.push_back({1, 1, -1.0, rle_encode(fp)});
    const EvalReport r = evaluate(more, b.gts);
    CHECK(r.ap <= base.ap);
    CHECK(r.ar == base.ar);
  }
}

TEST_CASE("categories evaluate independently") {
  const RandomBenchmark b(4);
  const EvalReport joint = evaluate(b.dets, b.gts);
  REQUIRE(joint.per_category.size() == 2);
  double mean = 0.0;
  for (const auto& cr : joint.per_category) {
    std::vector<AmodalInstance> g;
    std::vector<Detection> d;
    for (const auto& x : b.gts) {
      if (x.category_id == cr.category_id) g.push_back(x);
    }
    for (const auto& x : b.dets) {
      if (x.category_id == cr.category_id) d.push_back(x);
    }
    const EvalReport alone = evaluate(d, g);
    CHECK(alone.ap == cr.ap);
    CHECK(alone.ar == cr.ar);
    mean += cr.ap / 2.0;
  }
  CHECK(std::abs(joint.ap - mean) <= 1e-15);

  // Detections of a category without ground truth are ignored.
  std::vector<Detection> extra = b.dets;
  extra.push_back({1, 99, 5.0, rle_encode(Bitmap::zeros(24, 24))});
  CHECK(evaluate(extra, b.gts) == joint);
}

TEST_CASE("report rendering") {
  const ThreeByFour fx;
  const EvalReport r = evaluate(fx.dets, fx.gts);
  const std::string json = report_to_json(r, {{"run", "unit"}});
  CHECK(json.find("\"AP50\"") != std::string::npos);
  CHECK(json.find("\"unit\"") != std::string::npos);
  const std::string table = report_to_table(r, {{1, "strip"}});
  CHECK(table.find("strip") != std::string::npos);
}
