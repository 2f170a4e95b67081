#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "aisformer/errors.hpp"
#include "aisformer/head.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"

using namespace aisf;
using aisf::testing::gradcheck;
using aisf::testing::random_tensor;

namespace {

HeadConfig config_c(std::size_t c, std::size_t hr = 2, std::size_t heads = 1) {
  HeadConfig cfg;
  cfg.channels = c;
  cfg.roi_height = cfg.roi_width = hr;
  cfg.heads = heads;
  return cfg;
}

void fill_matching(ParameterSet& params, const std::string& needle, double value) {
  for (const auto& [name, t] : params) {
    if (name.find(needle) == std::string::npos) continue;
    Tensor leaf = t;
    for (double& v : leaf.mutable_data()) v = value;
  }
}

void check_rows_stochastic(const Tensor& w) {
  for (std::size_t r = 0; r < w.dim(0); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < w.dim(1); ++c) {
      CHECK(w.value(r * w.dim(1) + c) >= 0.0);
      total += w.value(r * w.dim(1) + c);
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

EncodedTokens random_tokens(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng, bool grad = false) {
  return {random_tensor({h * w, c}, rng, grad), h, w};
}

Tensor layer_norm_rows(const Tensor& x) {
  const std::size_t c = x.dim(1);
  return layer_norm(x, c, Tensor::full({c}, 1.0), Tensor::zeros({c}));
}

}  // namespace

TEST_CASE("multi-head attention") {
  ParameterSet params;
  Rng rng(1);
  CHECK_THROWS_AS(MultiHeadAttention::create(params, "bad", 6, 4, rng), ConfigError);
  const auto mha = MultiHeadAttention::create(params, "mha", 8, 2, rng);
  std::mt19937_64 g(2);
  const Tensor q = random_tensor({3, 8}, g), kv = random_tensor({5, 8}, g);
  const AttentionResult r = mha(q, kv, kv);
  CHECK(r.output.shape() == Shape{3, 8});
  REQUIRE(r.weights.size() == 2);
  for (const auto& w : r.weights) {
    CHECK(w.shape() == Shape{3, 5});
    check_rows_stochastic(w);
  }

  SUBCASE("permuting keys together with values leaves the output unchanged") {
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> permuted;
    for (std::size_t p : perm) {
      for (std::size_t c = 0; c < 8; ++c) permuted.push_back(kv.value(p * 8 + c));
    }
    const Tensor kvp({5, 8}, permuted);
    const AttentionResult rp = mha(q, kvp, kvp);
    for (std::size_t i = 0; i < r.output.numel(); ++i) CHECK(std::abs(rp.output.value(i) - r.output.value(i)) <= 1e-12);
  }

  SUBCASE("gradients") {
    Tensor qq = random_tensor({3, 8}, g, true), kk = random_tensor({5, 8}, g, true);
    const Tensor m = random_tensor({3, 8}, g);
    std::vector<Tensor> leaves = {qq, kk};
    for (const auto& [name, t] : params) {
      if (name.rfind("mha.", 0) == 0) leaves.push_back(t);
    }
    const auto check = gradcheck([&] { return sum(mul(mha(qq, kk, kk).output, m)); }, leaves);
    CHECK_MESSAGE(check.max_rel_error < 1e-3, check.worst);
  }
}

TEST_CASE("query initialization") {
  ParameterSet a, b;
  const QueryFlags all;
  const auto qa = init_queries(a, "q", 16, all, 42);
  const auto qb = init_queries(b, "q", 16, all, 42);
  CHECK(a.contains("q.occluder"));
  CHECK(a.contains("q.visible"));
  CHECK(a.contains("q.amodal"));
  for (const auto& [name, t] : a) {
    const auto& u = b.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t.value(i) == u.value(i));
  }
  const MaskQuerySet stacked = qa.stack();
  CHECK(stacked.stacked.shape() == Shape{3, 16});
  CHECK(stacked.kinds == std::vector<MaskKind>{MaskKind::occluder, MaskKind::visible, MaskKind::amodal});

  ParameterSet big;
  init_queries(big, "q", 4000, all, 7);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& [name, t] : big) {
    for (double v : t.data()) {
      s += v;
      s2 += v * v;
      ++n;
    }
  }
  const double mean = s / static_cast<double>(n);
  const double sd = std::sqrt(s2 / static_cast<double>(n) - mean * mean);
  CHECK(n >= 10000);
  CHECK(std::abs(sd - kQueryInitStd) <= 0.005);

  ParameterSet ablated;
  QueryFlags amodal_only{false, false, false};
  const auto qo = init_queries(ablated, "q", 16, amodal_only, 42);
  CHECK(ablated.size() == 1);
  for (std::size_t i = 0; i < 16; ++i) CHECK(ablated.at("q.amodal").value(i) == a.at("q.amodal").value(i));
  CHECK(qo.stack().kinds == std::vector<MaskKind>{MaskKind::amodal});
}

TEST_CASE("decode") {
  const HeadConfig cfg = config_c(8);
  std::mt19937_64 g(3);

  SUBCASE("shapes and normalized attention") {
    ParameterSet params;
    Rng rng(4);
    const MaskDecoder dec = MaskDecoder::create(params, "dec", cfg, rng);
    const auto [out, rec] = decode(dec.queries.stack(), random_tokens(4, 4, 8, g), dec, cfg);
    CHECK(out.stacked.shape() == Shape{3, 8});
    CHECK(rec.cross_attention.shape() == Shape{3, 16});
    check_rows_stochastic(rec.cross_attention);
    for (const auto& layer : rec.self_attention_heads) {
      for (const auto& w : layer) check_rows_stochastic(w);
    }
    for (const auto& layer : rec.cross_attention_heads) {
      for (const auto& w : layer) check_rows_stochastic(w);
    }
  }

  SUBCASE("zero attention weights reduce to two layer norms") {
    ParameterSet params;
    Rng rng(5);
    const MaskDecoder dec = MaskDecoder::create(params, "dec", cfg, rng);
    fill_matching(params, "attention", 0.0);
    const MaskQuerySet q = dec.queries.stack();
    const auto [out, rec] = decode(q, random_tokens(4, 4, 8, g), dec, cfg);
    const Tensor expect = layer_norm_rows(layer_norm_rows(q.stacked));
    for (std::size_t i = 0; i < expect.numel(); ++i) CHECK(std::abs(out.stacked.value(i) - expect.value(i)) <= 1e-12);
  }

  SUBCASE("one token: cross-attention returns its value projection") {
    ParameterSet params;
    Rng rng(6);
    const MaskDecoder dec = MaskDecoder::create(params, "dec", cfg, rng);
    const EncodedTokens one = random_tokens(1, 1, 8, g);
    const MaskQuerySet q = dec.queries.stack();
    const auto [out, rec] = decode(q, one, dec, cfg);
    for (double w : rec.cross_attention.data()) CHECK(w == 1.0);

    const DecoderLayer& layer = dec.layers[0];
    const Tensor q1 = layer_norm_rows(add(layer.self_attention(q.stacked, q.stacked, q.stacked).output, q.stacked));
    // Hand computation: v = t Wv + bv, o = v Wo + bo, out = LN(o + q1).
    std::vector<double> v(8), o(8);
    for (std::size_t j = 0; j < 8; ++j) {
      v[j] = layer.cross_attention.value.bias.value(j);
      for (std::size_t i = 0; i < 8; ++i) v[j] += one.tokens.value(i) * layer.cross_attention.value.weight.value(i * 8 + j);
    }
    for (std::size_t j = 0; j < 8; ++j) {
      o[j] = layer.cross_attention.out.bias.value(j);
      for (std::size_t i = 0; i < 8; ++i) o[j] += v[i] * layer.cross_attention.out.weight.value(i * 8 + j);
    }
    std::vector<double> pre(3 * 8);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < 8; ++j) pre[r * 8 + j] = o[j] + q1.value(r * 8 + j);
    }
    const Tensor expect = layer_norm_rows(Tensor({3, 8}, pre));
    for (std::size_t i = 0; i < expect.numel(); ++i) CHECK(std::abs(out.stacked.value(i) - expect.value(i)) <= 1e-12);
  }

  SUBCASE("gradients with respect to queries, tokens and weights") {
    for (std::size_t heads : {1, 2}) {
      const HeadConfig hc = config_c(8, 2, heads);
      ParameterSet params;
      Rng rng(7);
      const MaskDecoder dec = MaskDecoder::create(params, "dec", hc, rng);
      EncodedTokens tokens = random_tokens(2, 2, 8, g, true);
      const Tensor m = random_tensor({3, 8}, g);
      std::vector<Tensor> leaves = {tokens.tokens};
      for (const auto& [name, t] : params) leaves.push_back(t);
      const auto check =
          gradcheck([&] { return sum(mul(decode(dec.queries.stack(), tokens, dec, hc).first.stacked, m)); }, leaves);
      CHECK_MESSAGE(check.max_rel_error < 1e-3, check.worst);
    }
  }

  SUBCASE("channel mismatch") {
    ParameterSet params;
    Rng rng(8);
    const MaskDecoder dec = MaskDecoder::create(params, "dec", cfg, rng);
    CHECK_THROWS_AS(decode(dec.queries.stack(), random_tokens(2, 2, 4, g), dec, cfg), DimensionError);
  }
}

TEST_CASE("invisible embedding") {
  const HeadConfig cfg = config_c(4);
  std::mt19937_64 g(9);

  SUBCASE("zero weights give a zero embedding") {
    ParameterSet params;
    Rng rng(1);
    const auto mlp = InvisibleMlp::create(params, "inv", cfg, rng);
    fill_matching(params, "inv", 0.0);
    const auto e = invisible_embed(random_tensor({1, 4}, g), random_tensor({1, 4}, g), mlp);
    CHECK(e.embedding.shape() == Shape{1, 4});
    for (double v : e.embedding.data()) CHECK(v == 0.0);
  }

  SUBCASE("hand computation at C = 2") {
    HeadConfig c2 = cfg;
    c2.channels = 2;
    ParameterSet params;
    Rng rng(1);
    auto mlp = InvisibleMlp::create(params, "inv", c2, rng);
    auto set = [](Tensor t, std::vector<double> v) { std::copy(v.begin(), v.end(), t.mutable_data().begin()); };
    // hidden1 picks q_v (identity block on the first two inputs), minus 1.
    set(mlp.hidden1.weight, {1, 0, 0, 1, 0, 0, 0, 0});
    set(mlp.hidden1.bias, {-1, 0});
    set(mlp.hidden2.weight, {2, 0, 0, 1});
    set(mlp.hidden2.bias, {0, 0.5});
    set(mlp.output.weight, {1, 1, 0, -1});
    set(mlp.output.bias, {0.25, 0});
    const Tensor qv({2}, {3.0, -2.0}), qa({2}, {7.0, 9.0});
    // h1 = relu([3-1, -2]) = [2, 0]; h2 = relu([4, 0.5]) = [4, 0.5];
    // out = [4*1 + 0.5*0 + 0.25, 4*1 - 0.5] = [4.25, 3.5]
    const auto e = invisible_embed(qv, qa, mlp);
    CHECK(e.embedding.value(0) == 4.25);
    CHECK(e.embedding.value(1) == 3.5);
  }

  SUBCASE("concatenation order matters") {
    ParameterSet params;
    Rng rng(2);
    const auto mlp = InvisibleMlp::create(params, "inv", cfg, rng);
    const Tensor a = random_tensor({1, 4}, g), b = random_tensor({1, 4}, g);
    const auto ab = invisible_embed(a, b, mlp), ba = invisible_embed(b, a, mlp);
    double diff = 0.0;
    for (std::size_t i = 0; i < 4; ++i) diff += std::abs(ab.embedding.value(i) - ba.embedding.value(i));
    CHECK(diff > 1e-6);
  }

  SUBCASE("dimension mismatch") {
    ParameterSet params;
    Rng rng(2);
    const auto mlp = InvisibleMlp::create(params, "inv", cfg, rng);
    CHECK_THROWS_AS(invisible_embed(Tensor::zeros({1, 3}), Tensor::zeros({1, 4}), mlp), DimensionError);
  }

  SUBCASE("gradients") {
    ParameterSet params;
    Rng rng(3);
    const auto mlp = InvisibleMlp::create(params, "inv", cfg, rng);
    Tensor qv = random_tensor({1, 4}, g, true), qa = random_tensor({1, 4}, g, true);
    const Tensor m = random_tensor({1, 4}, g);
    std::vector<Tensor> leaves = {qv, qa};
    for (const auto& [name, t] : params) leaves.push_back(t);
    const auto check = gradcheck([&] { return sum(mul(invisible_embed(qv, qa, mlp).embedding, m)); }, leaves);
    CHECK_MESSAGE(check.max_rel_error < 1e-3, check.worst);
  }
}

TEST_CASE("per-pixel embeddings") {
  std::mt19937_64 g(10);
  const Tensor roi = random_tensor({3, 2, 4}, g);
  const EncodedTokens tokens = random_tokens(2, 4, 3, g);
  const EncodedTokens zero_tokens{Tensor::zeros({8, 3}), 2, 4};
  const auto e0 = per_pixel_embeddings({roi}, zero_tokens);
  for (std::size_t i = 0; i < roi.numel(); ++i) CHECK(e0.values.value(i) == roi.value(i));

  const auto et = per_pixel_embeddings({Tensor::zeros({3, 2, 4})}, tokens);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < 8; ++p) CHECK(et.values.value(c * 8 + p) == tokens.tokens.value(p * 3 + c));
  }
  const auto e = per_pixel_embeddings({roi}, tokens);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < 8; ++p) {
      CHECK(std::abs(e.values.value(c * 8 + p) - (roi.value(c * 8 + p) + tokens.tokens.value(p * 3 + c))) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(per_pixel_embeddings({roi}, random_tokens(2, 2, 3, g)), DimensionError);
}

TEST_CASE("predict masks") {
  std::mt19937_64 g(11);
  const auto queries_of = [](const Tensor& stacked, std::vector<MaskKind> kinds) { return MaskQuerySet{kinds, stacked}; };

  SUBCASE("zero embeddings") {
    const auto p = predict_masks({random_tensor({2, 2, 2}, g)},
                                 queries_of(Tensor::zeros({1, 2}), {MaskKind::amodal}), std::nullopt);
    for (double v : p.logits.data()) CHECK(v == 0.0);
    for (double v : p.probabilities(MaskKind::amodal)) CHECK(v == 0.5);
  }
  SUBCASE("scalar product") {
    const auto p = predict_masks({Tensor::full({1, 3, 3}, 1.0)}, queries_of(Tensor({1, 1}, {3.0}), {MaskKind::amodal}),
                                 std::nullopt);
    for (double v : p.logits.data()) CHECK(v == 3.0);
  }
  SUBCASE("loop oracle at C = 2, 2x2") {
    const Tensor e = random_tensor({2, 2, 2}, g);
    const Tensor q = random_tensor({3, 2}, g);
    const Tensor inv = random_tensor({1, 2}, g);
    const auto p = predict_masks({e}, queries_of(q, {MaskKind::occluder, MaskKind::visible, MaskKind::amodal}),
                                 InvisibleEmbedding{inv});
    REQUIRE(p.size() == 4);
    CHECK(p.kinds.back() == MaskKind::invisible);
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t x = 0; x < 2; ++x) {
          long double acc = 0;
          for (std::size_t c = 0; c < 2; ++c) {
            const double emb = k < 3 ? q.value(k * 2 + c) : inv.value(c);
            acc += static_cast<long double>(e.value(c * 4 + y * 2 + x)) * emb;
          }
          CHECK(std::abs(p.logits.value(k * 4 + y * 2 + x) - static_cast<double>(acc)) <= 1e-12);
        }
      }
    }
  }
  SUBCASE("scaling a query scales its logits") {
    const Tensor e = random_tensor({4, 3, 3}, g);
    const Tensor q = random_tensor({1, 4}, g);
    const auto base = predict_masks({e}, queries_of(q, {MaskKind::amodal}), std::nullopt);
    for (double s : {2.0, -0.5, 8.0}) {
      const auto scaled = predict_masks({e}, queries_of(scale(q, s), {MaskKind::amodal}), std::nullopt);
      for (std::size_t i = 0; i < base.logits.numel(); ++i) CHECK(scaled.logits.value(i) == s * base.logits.value(i));
    }
    const auto scaled = predict_masks({e}, queries_of(scale(q, 1.37), {MaskKind::amodal}), std::nullopt);
    for (std::size_t i = 0; i < base.logits.numel(); ++i) {
      CHECK(std::abs(scaled.logits.value(i) - 1.37 * base.logits.value(i)) <= 1e-12 * (1 + std::abs(base.logits.value(i))));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(predict_masks({random_tensor({3, 2, 2}, g)}, queries_of(Tensor::zeros({1, 2}), {MaskKind::amodal}),
                                  std::nullopt),
                    DimensionError);
  }
}

TEST_CASE("mask loss") {
  const std::size_t h = 3, w = 3;
  std::mt19937_64 g(12);
  MaskTargets t{h, w, {}};
  std::bernoulli_distribution coin(0.4);
  for (auto& m : t.maps) {
    m.resize(h * w);
    for (auto& v : m) v = coin(g) ? 1.0 : 0.0;
  }
  const std::vector<MaskKind> all = {MaskKind::occluder, MaskKind::visible, MaskKind::amodal, MaskKind::invisible};

  SUBCASE("saturated agreement") {
    std::vector<double> logits;
    for (MaskKind k : all) {
      for (double v : t[k]) logits.push_back(v > 0.5 ? 20.0 : -20.0);
    }
    const MaskLoss l = mask_loss({all, Tensor({4, h, w}, logits)}, t);
    CHECK(l.total.item() < 1e-6);
    CHECK(l.total.item() >= 0.0);
  }
  SUBCASE("zero logits") {
    const MaskLoss l = mask_loss({all, Tensor::zeros({4, h, w})}, t);
    CHECK(std::abs(l.total.item() - 4.0 * std::log(2.0)) <= 1e-12);
  }
  SUBCASE("random logits against the direct formula") {
    const Tensor z = random_tensor({4, h, w}, g, false, -5, 5);
    const MaskLoss l = mask_loss({all, z}, t);
    long double total = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      long double head = 0;
      for (std::size_t p = 0; p < h * w; ++p) {
        const long double prob = 1.0L / (1.0L + std::exp(-static_cast<long double>(z.value(k * h * w + p))));
        const double y = t[all[k]][p];
        head -= y * std::log(prob) + (1 - y) * std::log(1 - prob);
      }
      head /= h * w;
      CHECK(std::abs(l.per_head[k] - static_cast<double>(head)) <= 1e-12);
      total += head;
    }
    CHECK(std::abs(l.total.item() - static_cast<double>(total)) <= 1e-12);
  }
  SUBCASE("absent heads contribute nothing") {
    const Tensor z = random_tensor({1, h, w}, g);
    const MaskLoss l = mask_loss({{MaskKind::amodal}, z}, t);
    CHECK(std::isnan(l.per_head[0]));
    CHECK(std::isnan(l.per_head[3]));
    CHECK(l.total.item() == l.per_head[2]);
  }
  SUBCASE("non-binary targets") {
    MaskTargets bad = t;
    bad[MaskKind::amodal][0] = 0.5;
    CHECK_THROWS_AS(mask_loss({all, Tensor::zeros({4, h, w})}, bad), InputError);
  }
}

TEST_CASE("full head forward") {
  std::mt19937_64 g(13);
  const Tensor fm = random_tensor({8, 6, 6}, g);
  const BoundingBox box{0.5, 1.0, 5.0, 5.5};

  HeadConfig full = config_c(8);
  ParameterSet params;
  const auto head = AisformerHead::create(params, full, 3);
  const HeadOutput out = forward_full(fm, box, head);
  CHECK(out.masks.size() == 4);
  CHECK(out.masks.logits.shape() == Shape{4, 4, 4});
  for (MaskKind k : out.masks.kinds) {
    for (double p : out.masks.probabilities(k)) CHECK((p > 0.0 && p < 1.0));
  }

  HeadConfig amodal_only = full;
  amodal_only.queries = {false, false, false};
  ParameterSet p1;
  const auto h1 = AisformerHead::create(p1, amodal_only, 3);
  CHECK(forward_full(fm, box, h1).masks.size() == 1);

  HeadConfig broken = full;
  broken.queries = {true, false, true};
  ParameterSet p2;
  CHECK_THROWS_AS(AisformerHead::create(p2, broken, 3), ConfigError);
}

TEST_CASE("ablated outputs depend only on the parameter values") {
  std::mt19937_64 g(14);
  const Tensor fm = random_tensor({8, 6, 6}, g);
  const BoundingBox box{0.5, 1.0, 5.0, 5.5};
  for (const QueryFlags flags : {QueryFlags{false, true, true}, QueryFlags{true, true, false},
                                 QueryFlags{false, false, false}}) {
    HeadConfig cfg = config_c(8);
    cfg.queries = flags;
    ParameterSet pa, pb;
    const auto a = AisformerHead::create(pa, cfg, 21);
    const auto b = AisformerHead::create(pb, cfg, 99);
    for (const auto& [name, t] : pa) {
      Tensor dst = pb.at(name);
      std::copy(t.data().begin(), t.data().end(), dst.mutable_data().begin());
    }
    const auto oa = forward_full(fm, box, a), ob = forward_full(fm, box, b);
    CHECK(oa.masks.kinds == flags.mask_kinds());
    REQUIRE(oa.masks.logits.numel() == ob.masks.logits.numel());
    for (std::size_t i = 0; i < oa.masks.logits.numel(); ++i) CHECK(oa.masks.logits.value(i) == ob.masks.logits.value(i));
  }
}
