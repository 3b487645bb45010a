#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "lorvp/backbones/pretrain.hpp"
#include "lorvp/data/synthetic.hpp"
#include "lorvp/nn/loss.hpp"
#include "lorvp/outmap/ilm.hpp"
#include "lorvp/outmap/transform.hpp"
#include "test_util.hpp"

namespace lorvp {
namespace {

using test::random_tensor;

void expect_valid(const LabelMap& m, std::size_t Ks, std::size_t Kt) {
  ASSERT_EQ(m.num_target(), Kt);
  std::vector<int> seen(Ks, 0);
  for (std::size_t t = 0; t < Kt; ++t) {
    ASSERT_LT(m[t], Ks);
    EXPECT_EQ(++seen[m[t]], 1);
  }
}

// Exhaustive greedy trace: list every (count, t, s), sort by count desc,
// t asc, s asc, and take pairs whose row and column are still free.
std::vector<std::size_t> greedy_oracle(const CountMatrix& c) {
  struct Cell {
    std::uint64_t n;
    std::size_t t, s;
  };
  std::vector<Cell> cells;
  for (std::size_t t = 0; t < c.size(); ++t)
    for (std::size_t s = 0; s < c[t].size(); ++s) cells.push_back({c[t][s], t, s});
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.n != b.n) return a.n > b.n;
    if (a.t != b.t) return a.t < b.t;
    return a.s < b.s;
  });
  std::vector<std::size_t> map(c.size(), SIZE_MAX);
  std::vector<bool> col(c.empty() ? 0 : c[0].size(), false);
  for (const auto& x : cells) {
    if (map[x.t] != SIZE_MAX || col[x.s]) continue;
    map[x.t] = x.s;
    col[x.s] = true;
  }
  return map;
}

// Best total count over all injective assignments (small sizes only).
std::uint64_t optimal_total(const CountMatrix& c) {
  const std::size_t Kt = c.size(), Ks = c[0].size();
  std::vector<std::size_t> cols(Ks);
  std::iota(cols.begin(), cols.end(), 0);
  std::uint64_t best = 0;
  do {
    std::uint64_t total = 0;
    for (std::size_t t = 0; t < Kt; ++t) total += c[t][cols[t]];
    best = std::max(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

CountMatrix random_counts(Rng& rng, std::size_t Kt, std::size_t Ks, std::uint64_t max_count) {
  CountMatrix c(Kt, std::vector<std::uint64_t>(Ks));
  for (auto& row : c)
    for (auto& v : row) v = rng.below(max_count + 1);
  return c;
}

TEST(Rlm, EqualSizesGivePermutation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = rlm(3, 3, seed);
    auto v = m.target_to_source();
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, (std::vector<std::size_t>{0, 1, 2}));
  }
}

TEST(Rlm, DeterministicAndValid) {
  EXPECT_EQ(rlm(10, 4, 5), rlm(10, 4, 5));
  expect_valid(rlm(10, 4, 5), 10, 4);
}

TEST(Rlm, MoreTargetsThanSourcesIsConfigError) { EXPECT_THROW(rlm(2, 3, 0), ConfigError); }

TEST(Flm, WorkedExample) {
  auto m = flm({{3, 0, 1}, {2, 5, 0}});
  EXPECT_EQ(m[1], 1u);
  EXPECT_EQ(m[0], 0u);
}

TEST(Flm, DiagonalDominantGivesIdentity) {
  CountMatrix c{{9, 1, 2, 0}, {3, 8, 1, 1}, {0, 2, 7, 4}};
  EXPECT_EQ(flm(c).target_to_source(), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Flm, AllEqualCountsMapTToT) {
  CountMatrix c(4, std::vector<std::uint64_t>(6, 3));
  EXPECT_EQ(flm(c).target_to_source(), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Flm, MoreTargetsThanSourcesIsConfigError) {
  EXPECT_THROW(flm({{1, 2}, {3, 4}, {5, 6}}), ConfigError);
}

TEST(Flm, MatchesGreedyTraceAndStaysValidOn1000RandomMatrices) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t Ks = 2 + rng.below(9), Kt = 1 + rng.below(Ks);
    auto c = random_counts(rng, Kt, Ks, 1 + rng.below(20));
    auto m = flm(c);
    expect_valid(m, Ks, Kt);
    EXPECT_EQ(m.target_to_source(), greedy_oracle(c));
    expect_valid(rlm(Ks, Kt, rng.next_u64()), Ks, Kt);
  }
}

TEST(Flm, PermutationEquivariantInSourceColumns) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const std::size_t Ks = 6, Kt = 4;
    auto c = random_counts(rng, Kt, Ks, 1000000);  // ties are vanishingly rare
    auto perm = rng.permutation(Ks);                // new column j holds old column perm[j]
    CountMatrix cp(Kt, std::vector<std::uint64_t>(Ks));
    for (std::size_t t = 0; t < Kt; ++t)
      for (std::size_t j = 0; j < Ks; ++j) cp[t][j] = c[t][perm[j]];
    auto a = flm(c), b = flm(cp);
    for (std::size_t t = 0; t < Kt; ++t) EXPECT_EQ(perm[b[t]], a[t]);
  }
}

TEST(Flm, GreedyGapAgainstOptimalAssignment) {
  Rng rng(13);
  double worst_ratio = 1.0;
  for (int i = 0; i < 300; ++i) {
    const std::size_t Kt = 1 + rng.below(4), Ks = Kt + rng.below(3);
    auto c = random_counts(rng, Kt, Ks, 10);
    auto m = flm(c);
    std::uint64_t greedy = 0;
    for (std::size_t t = 0; t < Kt; ++t) greedy += c[t][m[t]];
    const auto best = optimal_total(c);
    EXPECT_LE(greedy, best);
    // Greedy matching is a 1/2-approximation of maximum-weight matching.
    EXPECT_GE(2 * greedy, best);
    if (best > 0) worst_ratio = std::min(worst_ratio, double(greedy) / double(best));
  }
  RecordProperty("worst_greedy_ratio", std::to_string(worst_ratio));
}

TEST(LabelMap, RejectsNonInjective) {
  EXPECT_THROW(LabelMap({1, 1}, 3), ContractError);
  EXPECT_THROW(LabelMap({0, 5}, 3), ContractError);
}

TEST(LabelMap, CsvRoundtrip) {
  auto m = rlm(10, 6, 3);
  const auto csv = label_map_csv(m);
  EXPECT_EQ(csv.substr(0, 27), "target_index,source_index\n0");
  EXPECT_EQ(parse_label_map_csv(csv, 10), m);
  EXPECT_THROW(parse_label_map_csv("target_index,source_index\n0,1\n0,2\n", 10), FormatError);
}

TEST(Transform, IdentityMapIsIdentity) {
  Rng rng(14);
  auto x = random_tensor<float>({5, 7}, rng);
  std::vector<std::size_t> id(7);
  std::iota(id.begin(), id.end(), 0);
  auto y = transform(x, LabelMap(id, 7));
  EXPECT_EQ(test::checksum(y), test::checksum(x));
}

TEST(Transform, SelectionCopiesColumnsAndPreservesArgmax) {
  Rng rng(15);
  auto x = random_tensor<float>({8, 10}, rng);
  auto m = rlm(10, 4, 2);
  auto y = transform(x, m);
  for (std::size_t b = 0; b < 8; ++b) {
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(y[b * 4 + t], x[b * 10 + m[t]]);
      if (y[b * 4 + t] > y[b * 4 + best_t]) best_t = t;
    }
    std::size_t best_s = m[0];
    for (std::size_t t = 1; t < 4; ++t)
      if (x[b * 10 + m[t]] > x[b * 10 + best_s]) best_s = m[t];
    EXPECT_EQ(m[best_t], best_s);
  }
}

TEST(Transform, WrongWidthIsShapeError) {
  EXPECT_THROW(transform(Tensor<float>::zeros({2, 9}), rlm(10, 3, 0)), ShapeError);
  auto h = make_head<float>(TransformKind::kLP, 64, 10, 0);
  EXPECT_THROW(transform(Tensor<float>::zeros({2, 10}), h), ShapeError);
}

TEST(Head, ShapesAndDeterminism) {
  auto lp = make_head<float>(TransformKind::kLP, 64, 10, 1);
  EXPECT_EQ(lp.params.at("weight").shape(), (Shape{10, 64}));
  auto fm = make_head<float>(TransformKind::kFM, 10, 4, 1);
  EXPECT_EQ(fm.params.at("weight").shape(), (Shape{4, 10}));
  EXPECT_EQ(make_head<float>(TransformKind::kLP, 64, 10, 1).params.checksum(), lp.params.checksum());
  for (auto v : lp.params.at("bias").data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(make_head<float>(TransformKind::kRLM, 4, 4, 0), ConfigError);
}

TEST(Head, IdentityFmIsIdentity) {
  Rng rng(16);
  auto h = make_head<float>(TransformKind::kFM, 5, 5, 0);
  auto w = h.params.at("weight").mutable_data();
  std::fill(w.begin(), w.end(), 0.0f);
  for (int i = 0; i < 5; ++i) w[i * 6] = 1.0f;
  auto x = random_tensor<float>({3, 5}, rng);
  auto y = transform(x, h);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

struct Toy {
  Backbone<float> model;
  NormalizedDataset target;
};

Toy toy_task(std::uint64_t seed) {
  SyntheticSpec src;
  src.num_samples = 300;
  src.num_classes = 6;
  src.separation = 0.9;
  src.seed = seed;
  auto source = gen_synthetic(src);
  const auto stats = channel_stats(source);
  BackboneConfig c;
  c.kind = BackboneKind::kTinyCnn;
  c.embed_dim = 16;
  c.num_source_classes = 6;
  c.seed = seed;
  auto model = Backbone<float>::build(c);
  PretrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 32;
  tc.seed = seed;
  pretrain(model, normalize(source, stats), tc);
  model.freeze();
  auto tgt = target_of(src, 30.0);
  tgt.num_classes = 4;
  return {std::move(model), normalize(gen_synthetic(tgt), stats)};
}

double mapped_loss(const Backbone<float>& model, const Tensor<float>& x, const std::vector<int>& y,
                   const LabelMap& m) {
  NoGradGuard no_grad;
  return cross_entropy(transform(model.forward(x).logits, m), y).item();
}

TEST(Ilm, RefreshIsDeterministicAndMatchesPlainFlmAtZeroPrompt) {
  auto toy = toy_task(1);
  auto prompt = init_prompt<float>(PromptDesign::lorvp(3, 32, 4), 0);
  auto x = prepare_input(prompt.design(), toy.target.images);
  auto a = ilm_refresh(toy.model, prompt, x, toy.target.labels, 4, 64);
  auto b = ilm_refresh(toy.model, prompt, x, toy.target.labels, 4, 64, 1);
  EXPECT_EQ(a, b);
  CountMatrix plain(4, std::vector<std::uint64_t>(6, 0));
  {
    NoGradGuard no_grad;
    accumulate_counts(plain, toy.model.forward(bilinear_resize(toy.target.images, 32)).logits, toy.target.labels);
  }
  EXPECT_EQ(a, flm(plain));
}

TEST(Ilm, RefreshedMapLossAtMostRandomMapOverThreeSeeds) {
  double ilm_total = 0, rlm_total = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto toy = toy_task(seed);
    auto prompt = init_prompt<float>(PromptDesign::lorvp(3, 32, 4), seed);
    auto x = prepare_input(prompt.design(), toy.target.images);
    auto refreshed = ilm_refresh(toy.model, prompt, x, toy.target.labels, 4);
    ilm_total += mapped_loss(toy.model, x, toy.target.labels, refreshed);
    rlm_total += mapped_loss(toy.model, x, toy.target.labels, rlm(6, 4, seed));
  }
  EXPECT_LE(ilm_total / 3, rlm_total / 3);
}

}  // namespace
}  // namespace lorvp
