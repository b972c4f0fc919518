#include <gtest/gtest.h>

#include <cmath>

#include "superpose/compiler.hpp"
#include "superpose/generate.hpp"

using namespace superpose;

namespace {

SubproblemPlan block(SubproblemKind kind, std::vector<std::vector<std::size_t>> pairs, std::size_t rows,
                     double density, double light_density = 0.0, std::vector<std::size_t> heavy = {}) {
  SubproblemPlan sub;
  sub.kind = kind;
  sub.n_sub = rows;
  sub.density = density;
  sub.light_density = light_density;
  sub.light_threshold = 2;
  sub.super_threshold = 4;
  sub.zeta = 100.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    sub.outputs.push_back(i);
    sub.inputs.insert(sub.inputs.end(), pairs[i].begin(), pairs[i].end());
    sub.output_inputs.push_back(std::move(pairs[i]));
  }
  std::sort(sub.inputs.begin(), sub.inputs.end());
  sub.inputs.erase(std::unique(sub.inputs.begin(), sub.inputs.end()), sub.inputs.end());
  std::sort(heavy.begin(), heavy.end());
  sub.heavy = std::move(heavy);
  return sub;
}

SparseMatrix c0_of(const PartialLayer& p, std::size_t cols) { return SparseMatrix::from_triplets(p.rows, cols, p.c0); }

SparseMatrix d1_of(const PartialLayer& p, std::size_t outs) { return SparseMatrix::from_triplets(outs, p.rows, p.d1); }

std::vector<std::uint32_t> column(const SparseMatrix& m, std::size_t c) {
  const auto t = m.transpose();
  const auto cols = t.row_cols(c);
  return {cols.begin(), cols.end()};
}

bool subset(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

ErrorKind error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::IoError;
}

}  // namespace

TEST(LowInfluence, SingleUsePairSharesSpec) {
  auto rng = Rng::derive(1, "t");
  const auto part = compile_low_influence(block(SubproblemKind::LowInfluence, {{0, 1}}, 50, 0.2), rng);
  const auto c0 = c0_of(part, 2);
  ASSERT_EQ(part.specs.size(), 1u);
  const auto& s = part.specs[0].support;
  EXPECT_EQ(column(c0, 0), s);
  EXPECT_EQ(column(c0, 1), s);
  const auto d1 = d1_of(part, 1);
  ASSERT_EQ(d1.row_cols(0).size(), s.size());
  for (const auto v : d1.row_values(0)) EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(s.size()));
  for (const auto b : part.bias) EXPECT_EQ(b, -1.0);
}

TEST(LowInfluence, TwoUsesGiveUnionOfSpecs) {
  auto rng = Rng::derive(2, "t");
  const auto part = compile_low_influence(block(SubproblemKind::LowInfluence, {{0, 1}, {0, 2}}, 60, 0.2), rng);
  std::vector<std::uint32_t> both;
  std::set_union(part.specs[0].support.begin(), part.specs[0].support.end(), part.specs[1].support.begin(),
                 part.specs[1].support.end(), std::back_inserter(both));
  EXPECT_EQ(column(c0_of(part, 3), 0), both);
}

TEST(LowInfluence, ActivePairFillsSpecExactly) {
  auto rng = Rng::derive(3, "t");
  const auto part = compile_low_influence(block(SubproblemKind::LowInfluence, {{0, 1}, {2, 3}}, 80, 0.1), rng);
  const auto c0 = c0_of(part, 4);
  auto h = c0.multiply(std::vector<double>{1.0, 1.0, 0.0, 0.0});
  for (std::size_t r = 0; r < h.size(); ++r) h[r] = relu(h[r] + part.bias[r]);
  for (const auto r : part.specs[0].support) EXPECT_EQ(h[r], 1.0);
  const auto y = d1_of(part, 2).multiply(h);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
}

TEST(LowInfluence, HeavyInputRejected) {
  auto rng = Rng::derive(4, "t");
  const auto sub = block(SubproblemKind::LowInfluence, {{0, 1}, {0, 2}, {0, 3}}, 40, 0.2);
  EXPECT_EQ(error_of([&] { compile_low_influence(sub, rng); }), ErrorKind::InfluenceViolation);
}

TEST(HighInfluence, IdenticalColumnsGiveFullOverlap) {
  auto rng = Rng::derive(5, "t");
  const auto part = compile_high_influence(block(SubproblemKind::HighInfluence, {{0, 1}}, 10, 1.0), rng);
  const auto d1 = d1_of(part, 1);
  ASSERT_EQ(d1.row_cols(0).size(), 10u);
  for (const auto v : d1.row_values(0)) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(HighInfluence, OverlapRowsAreIntersection) {
  auto rng = Rng::derive(6, "t");
  const auto part = compile_high_influence(block(SubproblemKind::HighInfluence, {{0, 1}, {1, 2}}, 200, 0.4), rng);
  const auto c0 = c0_of(part, 3);
  std::vector<std::uint32_t> ov;
  const auto a = column(c0, 1);
  const auto b = column(c0, 2);
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(ov));
  const auto d1 = d1_of(part, 2);
  EXPECT_EQ(std::vector<std::uint32_t>(d1.row_cols(1).begin(), d1.row_cols(1).end()), ov);
}

TEST(HighInfluence, DisjointColumnsIsEmptyOverlap) {
  // One row per column and two rows: some seed gives disjoint columns.
  bool saw = false;
  for (std::uint64_t seed = 0; seed < 40 && !saw; ++seed) {
    auto rng = Rng::derive(seed, "t");
    saw = error_of([&] { compile_high_influence(block(SubproblemKind::HighInfluence, {{0, 1}}, 8, 0.1), rng); }) ==
          ErrorKind::EmptyOverlap;
  }
  EXPECT_TRUE(saw);
}

TEST(HighInfluence, MeanOverlapMatchesExpectation) {
  const std::size_t mp = 4096;
  const std::size_t n = CodecParams::neurons_for(mp, 2.0);
  const double t = static_cast<double>(ceil_fourth_root(mp));
  const double expected = static_cast<double>(n) / (t * t);
  double total = 0.0;
  const int trials = 200;
  for (int s = 0; s < trials; ++s) {
    auto rng = Rng::derive(static_cast<std::uint64_t>(s), "ov");
    const auto part = compile_high_influence(block(SubproblemKind::HighInfluence, {{0, 1}}, n, 1.0 / t), rng);
    total += static_cast<double>(part.d1.size());
  }
  EXPECT_NEAR(total / trials, expected, 0.3 * expected);
}

TEST(MixedRegular, LightColumnInsidePartner) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = Rng::derive(seed, "mr");
    const auto part = compile_mixed_regular(
        block(SubproblemKind::MixedRegular, {{0, 2}, {0, 3}, {1, 3}}, 120, 0.3, 0.3, {0, 1}), rng);
    const auto c0 = c0_of(part, 4);
    EXPECT_TRUE(subset(column(c0, 2), column(c0, 0)));
    std::vector<std::uint32_t> either;
    const auto h0 = column(c0, 0);
    const auto h1 = column(c0, 1);
    std::set_union(h0.begin(), h0.end(), h1.begin(), h1.end(), std::back_inserter(either));
    EXPECT_TRUE(subset(column(c0, 3), either));
  }
}

TEST(MixedRegular, EmptyPartnerGivesEmptyLight) {
  const std::vector<std::uint32_t> none;
  auto rng = Rng::derive(0, "e");
  EXPECT_TRUE(conditioned_column(rng, 30, {&none}, 1.0).empty());
}

TEST(MixedSuper, CutoffArithmetic) {
  auto rng = Rng::derive(7, "ms");
  const auto sub = block(SubproblemKind::MixedSuper, {{0, 2}, {1, 3}}, 40, 0.5, 0.5, {0, 1});
  const auto part = compile_mixed_super(sub, rng);
  ASSERT_EQ(part.rows, 41u);
  const auto c0 = c0_of(part, 4);
  const auto d1 = d1_of(part, 2);
  EXPECT_EQ(part.bias[40], -1.0);
  EXPECT_EQ(c0.at(40, 0), 1.0);
  EXPECT_EQ(c0.at(40, 1), 1.0);
  EXPECT_EQ(c0.at(40, 2), 0.0);
  EXPECT_EQ(d1.at(0, 40), -100.0);

  auto hidden = [&](std::vector<double> x) {
    auto h = c0.multiply(x);
    for (std::size_t r = 0; r < h.size(); ++r) h[r] = relu(h[r] + part.bias[r]);
    return h;
  };
  EXPECT_EQ(hidden({1, 0, 1, 0})[40], 0.0);
  const auto both = hidden({1, 1, 0, 0});
  EXPECT_EQ(both[40], 1.0);
  for (const auto y : d1.multiply(both)) EXPECT_LE(y, 0.0);
  for (const auto v : hidden({0, 0, 0, 0})) EXPECT_EQ(v, 0.0);
}

TEST(MixedSuper, TooManySuperHeavies) {
  auto rng = Rng::derive(8, "ms");
  auto sub = block(SubproblemKind::MixedSuper, {{0, 5}, {1, 5}, {2, 5}}, 40, 0.5, 0.5, {0, 1, 2});
  sub.super_threshold = 2;
  EXPECT_EQ(error_of([&] { compile_mixed_super(sub, rng); }), ErrorKind::TooManySuperHeavies);
}

TEST(Disjunction, ZeroBiasSingleInputFills) {
  auto rng = Rng::derive(9, "or");
  auto sub = block(SubproblemKind::Disjunction, {{0}}, 30, 0.3);
  const auto part = compile_disjunction(sub, rng);
  for (const auto b : part.bias) EXPECT_EQ(b, 0.0);
  const auto y = d1_of(part, 1).multiply(c0_of(part, 1).multiply(std::vector<double>{1.0}));
  EXPECT_DOUBLE_EQ(y[0], 1.0);
}

TEST(InputEncoding, BlocksAndExclusiveRows) {
  EncodingBlockSpec a{20, 0.3, {0, 1, 2}, {}};
  EncodingBlockSpec b{20, 0.1, {1, 3}, {3}};
  const auto enc = build_input_encoding({a, b}, 4, 1, "enc");
  EXPECT_EQ(enc.matrix.rows(), 40u);
  EXPECT_EQ(enc.decoder.rows(), 5u);
  ASSERT_TRUE(enc.decoded_index(1, 3).has_value());
  EXPECT_FALSE(enc.decoded_index(1, 0).has_value());
  // Feature 3 owns rows 20..21 of block b and nobody else touches them.
  for (std::uint32_t r = 20; r < 22; ++r) {
    const auto cols = enc.matrix.matrix.row_cols(r);
    ASSERT_EQ(cols.size(), 1u);
    EXPECT_EQ(cols[0], 3u);
  }
  // Block isolation: decoded copy k only reads rows of its own block.
  for (std::size_t k = 0; k < enc.decoder.rows(); ++k) {
    const bool first = k < 3;
    for (const auto r : enc.decoder.matrix.row_cols(k)) EXPECT_EQ(r < 20, first);
  }
}

TEST(ReadoutDecoder, EmptyColumnDecodesToZero) {
  const auto m = SparseMatrix::from_triplets(3, 2, {{0, 0, 1.0}, {2, 0, 1.0}});
  const auto d = readout_decoder({m, ChannelKind::Compression, "x"});
  EXPECT_DOUBLE_EQ(d.matrix.at(0, 0), 0.5);
  EXPECT_TRUE(d.matrix.row_cols(1).empty());
}

TEST(EvaluateRules, GuardSuppresses) {
  std::vector<OutputRule> rules = {{RuleOp::And, {0, 1}, 0}, {RuleOp::Or, {2}, -1}};
  std::vector<Guard> guards = {{{0}, {0, 1, 2}, 3}};
  EXPECT_EQ(evaluate_rules(rules, guards, {1, 1, 0}), (std::vector<std::size_t>{0}));
  EXPECT_EQ(evaluate_rules(rules, guards, {1, 1, 1}), (std::vector<std::size_t>{1}));
}

TEST(AssembleLayer, FoldAndBlockStructure) {
  const auto c = generate_mixed(64, 1);
  auto params = CodecParams::for_features(c.m_prime(), 2.0);
  const auto plan = plan_plain_layer(c, params, Strategy::Partition, 2);
  const auto in = build_input_encoding(plan.encoding, c.m, 1, "in");
  const auto out = build_input_encoding(plan.producer_partition(), plan.m_out, 1, "out");

  CompiledLayer layer;
  for (std::uint64_t seed = 0;; ++seed) {
    try {
      layer = assemble_layer(plan, in, out.matrix, params, seed, "t");
      break;
    } catch (const Error& e) {
      ASSERT_LT(seed, 50u) << e.what();
    }
  }
  std::size_t expected = 0;
  for (const auto& b : plan.blocks) expected += plan.n_sub + (b.kind == SubproblemKind::MixedSuper ? 1 : 0);
  EXPECT_EQ(layer.hidden_dim(), expected);
  EXPECT_EQ(layer.meta.zeta, 2.0 * static_cast<double>(expected));

  EXPECT_EQ(layer.w1, layer.c0.matrix.multiply(layer.d0.matrix));
  EXPECT_EQ(layer.w2, layer.c1.matrix.multiply(layer.d1.matrix));

  // No C0 or D1 entry couples two different blocks.
  for (std::size_t bi = 0; bi < layer.meta.blocks.size(); ++bi) {
    const auto& b = layer.meta.blocks[bi];
    std::vector<char> own(layer.d0.rows(), 0);
    for (const auto eb : b.encoding_blocks) {
      const auto& e = in.blocks[eb];
      for (std::size_t k = 0; k < e.features.size(); ++k) own[e.decode_offset + k] = 1;
    }
    for (std::size_t r = b.hidden_offset; r < b.hidden_offset + b.hidden_rows; ++r) {
      for (const auto col : layer.c0.matrix.row_cols(r)) EXPECT_TRUE(own[col]);
    }
    for (const auto o : b.outputs) {
      for (const auto col : layer.d1.matrix.row_cols(o)) {
        EXPECT_GE(col, b.hidden_offset);
        EXPECT_LT(col, b.hidden_offset + b.hidden_rows);
      }
    }
  }
}

TEST(PlanBlocks, AutoPicksHighInfluenceWhenDense) {
  const auto c = generate_high_influence(256, 0, 2);
  const auto params = CodecParams::for_features(c.m_prime());
  const auto plan = plan_plain_layer(c, params, Strategy::Auto, 2);
  ASSERT_EQ(plan.blocks.size(), 1u);
  EXPECT_EQ(plan.blocks[0].kind, SubproblemKind::HighInfluence);
  EXPECT_DOUBLE_EQ(plan.blocks[0].density, 1.0 / 4.0);
}

TEST(PlanBlocks, DensitiesPerKind) {
  const auto c = generate_mixed(256, 4);
  auto params = CodecParams::for_features(c.m_prime());
  params.gamma = 2.0;
  const auto plan = plan_plain_layer(c, params, Strategy::Partition, 2);
  for (const auto& b : plan.blocks) {
    switch (b.kind) {
      case SubproblemKind::LowInfluence:
        EXPECT_DOUBLE_EQ(b.density, CodecParams::density_for(256, plan.n_sub, 1.0));
        break;
      case SubproblemKind::HighInfluence:
      case SubproblemKind::MixedRegular: EXPECT_DOUBLE_EQ(b.density, 0.25); break;
      case SubproblemKind::MixedSuper:
        EXPECT_DOUBLE_EQ(b.density, 0.5);
        EXPECT_DOUBLE_EQ(b.light_density, 4.0 / 16.0);
        break;
      case SubproblemKind::Disjunction: break;
    }
  }
}
