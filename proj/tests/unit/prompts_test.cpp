#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lorvp/backbones/backbone.hpp"
#include "lorvp/nn/loss.hpp"
#include "lorvp/prompts/export.hpp"
#include "lorvp/prompts/prompt.hpp"
#include "test_util.hpp"

namespace lorvp {
namespace {

using test::random_tensor;

// Scalar evaluation of the half-pixel formula for one output pixel.
double resize_oracle(const std::vector<double>& img, std::size_t h, std::size_t w, std::size_t L, std::size_t i,
                     std::size_t j) {
  auto coord = [](std::size_t k, std::size_t in, std::size_t out) {
    double s = (k + 0.5) * (double(in) / double(out)) - 0.5;
    return std::min(std::max(s, 0.0), double(in - 1));
  };
  const double y = coord(i, h, L), x = coord(j, w, L);
  const auto y0 = std::size_t(std::floor(y)), x0 = std::size_t(std::floor(x));
  const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double dy = y - y0, dx = x - x0;
  return (1 - dy) * (1 - dx) * img[y0 * w + x0] + (1 - dy) * dx * img[y0 * w + x1] +
         dy * (1 - dx) * img[y1 * w + x0] + dy * dx * img[y1 * w + x1];
}

TEST(Resize, SameSizeIsBitwiseIdentity) {
  Rng rng(1);
  auto x = random_tensor<float>({2, 3, 8, 8}, rng);
  auto y = bilinear_resize(x, 8);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(test::checksum(y), test::checksum(x));
}

TEST(Resize, ConstantImageStaysConstant) {
  auto x = Tensor<float>::full({3, 5, 7}, 0.375f);
  for (long L : {1, 4, 13}) {
    auto y = bilinear_resize(x, L);
    for (auto v : y.data()) EXPECT_EQ(v, 0.375f);
  }
}

TEST(Resize, TwoByTwoUpsampleMatchesFormula) {
  const std::vector<double> img{1.0, 2.0, 3.0, 5.0};
  auto y = bilinear_resize(Tensor<double>({1, 2, 2}, img), 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y[i * 4 + j], resize_oracle(img, 2, 2, 4, i, j), 1e-12);
  // Corner pixels clamp to the source corners; the first interior tap is 3/4, 1/4.
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 0.75 * 1.0 + 0.25 * 2.0);
}

TEST(Resize, ArbitraryShapesMatchFormula) {
  Rng rng(2);
  for (auto [h, w, L] : {std::tuple{5, 3, 11}, {9, 9, 4}, {3, 7, 7}}) {
    auto x = random_tensor<double>({std::size_t(h), std::size_t(w)}, rng);
    std::vector<double> img(x.data().begin(), x.data().end());
    auto y = bilinear_resize(x, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) EXPECT_NEAR(y[i * L + j], resize_oracle(img, h, w, L, i, j), 1e-12);
  }
}

TEST(Resize, NonPositiveSizeIsConfigError) {
  auto x = Tensor<float>::zeros({1, 2, 2});
  EXPECT_THROW(bilinear_resize(x, 0), ConfigError);
  EXPECT_THROW(bilinear_resize(x, -3), ConfigError);
}

TEST(Resize, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto x = random_tensor<double>({2, 5, 6}, rng);
    auto wgt = random_tensor<double>({2, 9, 9}, rng);
    auto err = test::gradcheck_inputs({x}, [&](const auto& in) { return sum(mul(bilinear_resize(in[0], 9), wgt)); });
    EXPECT_LT(err, 1e-4);
    auto wdown = random_tensor<double>({2, 3, 3}, rng);
    err = test::gradcheck_inputs({x}, [&](const auto& in) { return sum(mul(bilinear_resize(in[0], 3), wdown)); });
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Design, ParamCountsAtPaperScale) {
  EXPECT_EQ(param_count(PromptDesign::lorvp(3, 224, 4)), 5376u);
  EXPECT_EQ(param_count(PromptDesign::pad(3, 224, 128, 48)), 101376u);
  EXPECT_EQ(param_count(PromptDesign::patch_free(3, 224)), 150528u);
  EXPECT_EQ(param_count(PromptDesign::patch_same(3, 224, 32)), 3u * 32 * 32);
  EXPECT_EQ(param_count(PromptDesign::patch_pad(3, 224, 7, 28)), 3u * (224 * 224 - 49 * 28 * 28));
}

TEST(Design, LowRankToFullRatioIsTwoROverL) {
  for (std::size_t r : {1, 2, 4, 8, 16})
    for (std::size_t L : {32, 224}) {
      const double ratio = double(param_count(PromptDesign::lorvp(3, L, r))) /
                           double(param_count(PromptDesign::patch_free(3, L)));
      EXPECT_DOUBLE_EQ(ratio, 2.0 * r / L);
    }
}

TEST(Design, PadGeometryMustTileTheCanvas) {
  EXPECT_NO_THROW(PromptDesign::pad(3, 224, 128, 48).validate());
  try {
    PromptDesign::pad(3, 224, 128, 40).validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("s + 2p"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("208"), std::string::npos);
  }
}

TEST(Design, OtherInvariants) {
  EXPECT_THROW(PromptDesign::patch_same(3, 32, 6).validate(), ConfigError);
  EXPECT_THROW(PromptDesign::patch_pad(3, 224, 7, 27).validate(), ConfigError);  // pad 2.5
  EXPECT_THROW(PromptDesign::patch_pad(3, 224, 6, 28).validate(), ConfigError);  // 6 does not divide 224
  EXPECT_THROW(PromptDesign::patch_pad(3, 224, 7, 32).validate(), ConfigError);  // no border
  EXPECT_THROW(PromptDesign::lorvp(3, 32, 0).validate(), ConfigError);
  EXPECT_THROW(PromptDesign::lorvp(3, 32, 33).validate(), ConfigError);
  EXPECT_EQ(PromptDesign::patch_pad(3, 224, 7, 28).patch_pad_width(), 2u);
}

TEST(Design, DefaultsAtBothScales) {
  EXPECT_EQ(default_design(DesignKind::kPad, 3, 224, 32), PromptDesign::pad(3, 224, 128, 48));
  EXPECT_EQ(default_design(DesignKind::kPatchPad, 3, 224, 32), PromptDesign::patch_pad(3, 224, 7, 28));
  EXPECT_EQ(default_design(DesignKind::kPatchSame, 3, 224, 32), PromptDesign::patch_same(3, 224, 32));
  for (auto k : {DesignKind::kPad, DesignKind::kPatchPad, DesignKind::kPatchFree, DesignKind::kPatchSame,
                 DesignKind::kLoRVP}) {
    EXPECT_NO_THROW(default_design(k, 3, 32, 8).validate()) << to_string(k);
    EXPECT_EQ(parse_design_kind(to_string(k)), k);
  }
}

TEST(Init, LowRankPromptIsExactlyZero) {
  auto p = init_prompt<float>(PromptDesign::lorvp(3, 224, 4), 7);
  auto vp = p.materialize();
  EXPECT_EQ(vp.shape(), (Shape{3, 224, 224}));
  for (auto v : vp.data()) EXPECT_EQ(v, 0.0f);
  double norm_a = l2_norm<float>(p.params().at("A").data());
  EXPECT_GT(norm_a, 0.0);
}

TEST(Init, SameSeedSameA) {
  auto d = PromptDesign::lorvp(3, 32, 4);
  auto a = init_prompt<float>(d, 9), b = init_prompt<float>(d, 9), c = init_prompt<float>(d, 10);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  EXPECT_NE(a.params().checksum(), c.params().checksum());
}

TEST(Init, AStdDefaultsToInverseSqrtL) {
  auto p = init_prompt<double>(PromptDesign::lorvp(3, 64, 16), 1);
  const auto a = p.params().at("A").data();
  double ss = 0;
  for (auto v : a) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / a.size()), 1.0 / 8.0, 0.01);
}

TEST(Init, AllPromptParamsRequireGradAndOthersStartAtZero) {
  for (auto k : {DesignKind::kPad, DesignKind::kPatchPad, DesignKind::kPatchFree, DesignKind::kPatchSame,
                 DesignKind::kLoRVP}) {
    auto d = default_design(k, 3, 32, 8);
    auto p = init_prompt<float>(d, 1);
    EXPECT_EQ(p.params().element_count(), param_count(d)) << to_string(k);
    for (const auto& e : p.params().entries()) EXPECT_TRUE(e.value.requires_grad());
    for (auto v : p.materialize().data()) EXPECT_EQ(v, 0.0f);
  }
}

void fill_random(Prompt<double>& p, Rng& rng) {
  for (auto& e : p.params().entries())
    for (auto& v : Tensor<double>(e.value).mutable_data()) v = rng.normal();
}

TEST(Materialize, PerChannelRankAtMostR) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t r = 1 + seed % 6, L = 16;
    auto p = init_prompt<double>(PromptDesign::lorvp(3, L, r), seed);
    Rng rng(seed + 1000);
    fill_random(p, rng);
    auto vp = p.materialize();
    for (std::size_t ch = 0; ch < 3; ++ch) {
      Eigen::MatrixXd m(L, L);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) m(i, j) = vp[(ch * L + i) * L + j];
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
      const auto& s = svd.singularValues();
      for (std::size_t k = r; k < L; ++k) EXPECT_LT(s(k), 1e-5 * s(0));
    }
  }
}

TEST(Materialize, SingleEntriesProduceSingleOne) {
  const std::size_t c = 2, L = 6, r = 3;
  auto p = init_prompt<double>(PromptDesign::lorvp(c, L, r), 0);
  for (auto& v : p.params().at("A").mutable_data()) v = 0;
  // B[1, i=4, k=2] = 1, A[1, k=2, j=1] = 1
  p.params().at("B").mutable_data()[(1 * L + 4) * r + 2] = 1;
  p.params().at("A").mutable_data()[(1 * r + 2) * L + 1] = 1;
  auto vp = p.materialize();
  for (std::size_t idx = 0; idx < vp.numel(); ++idx) {
    EXPECT_EQ(vp[idx], idx == (1 * L + 4) * L + 1 ? 1.0 : 0.0) << idx;
  }
}

TEST(Materialize, PatchSameIsPeriodic) {
  auto p = init_prompt<double>(PromptDesign::patch_same(3, 32, 8), 0);
  Rng rng(4);
  fill_random(p, rng);
  auto vp = p.materialize();
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i + 8 < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        EXPECT_EQ(vp[(ch * 32 + i) * 32 + j], vp[(ch * 32 + i + 8) * 32 + j]);
        EXPECT_EQ(vp[(ch * 32 + j) * 32 + i], vp[(ch * 32 + j) * 32 + i + 8]);
      }
}

TEST(Apply, LowRankAtInitEqualsResizeBitwise) {
  Rng rng(5);
  auto x = random_tensor<float>({4, 3, 20, 24}, rng);
  auto p = init_prompt<float>(PromptDesign::lorvp(3, 32, 4), 3);
  EXPECT_EQ(test::checksum(apply(p, x)), test::checksum(bilinear_resize(x, 32)));
}

TEST(Apply, PadCenterIsImageAndBorderIsPrompt) {
  const std::size_t L = 32, s = 20, pw = 6;
  auto d = PromptDesign::pad(3, L, s, pw);
  auto p = init_prompt<double>(d, 0);
  Rng rng(6);
  fill_random(p, rng);
  auto x = random_tensor<double>({3, 16, 16}, rng);
  auto out = apply(p, x);
  auto resized = bilinear_resize(x, long(s));
  const auto border = p.params().at("border").data();
  std::size_t next = 0;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        const double v = out[(ch * L + i) * L + j];
        if (i >= pw && i < pw + s && j >= pw && j < pw + s) {
          EXPECT_EQ(v, resized[(ch * s + i - pw) * s + j - pw]);
        } else {
          EXPECT_EQ(v, border[next++]);
        }
      }
  EXPECT_EQ(next, border.size());
}

TEST(Apply, PatchPadPaperGeometry) {
  auto d = PromptDesign::patch_pad(3, 224, 7, 28);
  auto p = init_prompt<float>(d, 0);
  auto x = Tensor<float>::full({3, 50, 50}, 2.0f);
  auto out = apply(p, x);
  ASSERT_EQ(out.shape(), (Shape{3, 224, 224}));
  // Each 32x32 cell: a 28x28 image patch inside a 2-pixel zero border.
  for (std::size_t i = 0; i < 224; ++i)
    for (std::size_t j = 0; j < 224; ++j) {
      const auto a = i % 32, b = j % 32;
      const bool inside = a >= 2 && a < 30 && b >= 2 && b < 30;
      EXPECT_EQ(out[i * 224 + j], inside ? 2.0f : 0.0f);
    }
}

TEST(Apply, PatchPadReassemblesPatchesInOrder) {
  auto d = PromptDesign::patch_pad(1, 8, 2, 2);  // cell 4, pad 1, resized 4x4
  std::vector<double> img(16);
  for (int k = 0; k < 16; ++k) img[k] = k;
  auto out = prepare_input(d, Tensor<double>({1, 4, 4}, img));
  EXPECT_EQ(out[1 * 8 + 1], 0.0);
  EXPECT_EQ(out[1 * 8 + 2], 1.0);
  EXPECT_EQ(out[1 * 8 + 5], 2.0);
  EXPECT_EQ(out[6 * 8 + 6], 15.0);
  EXPECT_EQ(out[5 * 8 + 1], 8.0);
}

TEST(Apply, LinearInPromptForAdditiveDesigns) {
  Rng rng(7);
  for (auto k : {DesignKind::kLoRVP, DesignKind::kPatchFree, DesignKind::kPatchSame}) {
    auto d = default_design(k, 3, 16, 4);
    auto p = init_prompt<double>(d, 1);
    fill_random(p, rng);
    auto x = random_tensor<double>({2, 3, 12, 12}, rng);
    const double alpha = 2.5;
    auto q = Prompt<double>(d, p.params().clone());
    // LoRVP is bilinear in (B, A); scaling B alone scales the product.
    for (auto& e : q.params().entries()) {
      if (k == DesignKind::kLoRVP && e.name == "A") continue;
      for (auto& v : Tensor<double>(e.value).mutable_data()) v *= alpha;
    }
    auto base = bilinear_resize(x, 16);
    auto lhs = sub(apply(q, x), base), rhs = scale(sub(apply(p, x), base), alpha);
    for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-9);
  }
}

TEST(Apply, WrongChannelCountIsShapeError) {
  auto p = init_prompt<float>(PromptDesign::lorvp(3, 16, 2), 0);
  EXPECT_THROW(apply(p, Tensor<float>::zeros({1, 1, 16, 16})), ShapeError);
}

TEST(Gradient, LowRankThroughFrozenModelMatchesFiniteDifferences) {
  BackboneConfig c;
  c.kind = BackboneKind::kTinyCnn;
  c.resolution = 8;
  c.embed_dim = 8;
  c.depth = 1;
  c.num_source_classes = 3;
  auto model = Backbone<double>::build(c);
  model.freeze();
  Rng rng(8);
  auto x = random_tensor<double>({2, 3, 6, 6}, rng);
  const std::vector<int> y{0, 2};
  for (auto k : {DesignKind::kLoRVP, DesignKind::kPad, DesignKind::kPatchSame}) {
    auto d = default_design(k, 3, 8, 4, 2);
    auto p = init_prompt<double>(d, 2);
    fill_random(p, rng);
    std::vector<Tensor<double>> inputs;
    for (auto& e : p.params().entries()) inputs.push_back(e.value);
    auto err = test::gradcheck_inputs(inputs, [&](const auto&) {
      return cross_entropy(model.forward(apply(p, x)).logits, y);
    });
    EXPECT_LT(err, 1e-4) << to_string(k);
    for (const auto& e : model.params().entries()) EXPECT_FALSE(e.value.has_grad());
  }
}

TEST(Export, ImageAndRawDump) {
  auto dir = std::filesystem::temp_directory_path();
  auto p = init_prompt<float>(PromptDesign::lorvp(3, 8, 2), 0);
  for (auto& v : p.params().at("B").mutable_data()) v = 0.5f;
  auto vp = p.materialize();
  export_prompt_image(vp, dir / "lorvp_vp.ppm");
  export_prompt_raw(vp, dir / "lorvp_vp.raw");
  std::ifstream img(dir / "lorvp_vp.ppm", std::ios::binary);
  std::string magic;
  std::size_t w, h, maxv;
  img >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 8u);
  EXPECT_EQ(h, 8u);
  EXPECT_EQ(std::filesystem::file_size(dir / "lorvp_vp.raw"), vp.numel() * 4);
  std::ifstream raw(dir / "lorvp_vp.raw", std::ios::binary);
  std::vector<float> back(vp.numel());
  raw.read(reinterpret_cast<char*>(back.data()), std::streamsize(back.size() * 4));
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], vp[i]);
  export_prompt_image(Tensor<float>::zeros({1, 4, 4}), dir / "lorvp_vp.pgm", 1.0);
  EXPECT_EQ(std::filesystem::file_size(dir / "lorvp_vp.pgm"), std::string("P5\n4 4\n255\n").size() + 16);
}

}  // namespace
}  // namespace lorvp
