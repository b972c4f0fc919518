#include <gtest/gtest.h>

#include <cmath>

#include "superpose/codec.hpp"

using namespace superpose;

namespace {

CodecParams params_for(std::size_t n, double p, std::uint64_t seed = 0) {
  CodecParams params;
  params.n = n;
  params.p = p;
  params.seed = seed;
  return params;
}

}  // namespace

TEST(Rng, DeriveIsDeterministicAndTagSensitive) {
  auto a = Rng::derive(5, "x");
  auto b = Rng::derive(5, "x");
  auto c = Rng::derive(5, "y");
  const auto va = a.next();
  EXPECT_EQ(va, b.next());
  EXPECT_NE(va, c.next());
}

TEST(Rng, SampleDistinctIsSortedAndUnique) {
  auto rng = Rng::derive(1, "t");
  const auto s = rng.sample_distinct(20, 7);
  ASSERT_EQ(s.size(), 7u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
}

TEST(SparseMatrix, DuplicateTripletsSumAndTransposeRoundTrips) {
  const auto a = SparseMatrix::from_triplets(2, 3, {{0, 1, 1.0}, {0, 1, 2.0}, {1, 2, 4.0}});
  EXPECT_EQ(a.nnz(), 2u);
  EXPECT_DOUBLE_EQ(a.at(0, 1), 3.0);
  const auto t = a.transpose();
  EXPECT_DOUBLE_EQ(t.at(2, 1), 4.0);
  EXPECT_EQ(t.transpose().to_dense(), a.to_dense());
  EXPECT_THROW(SparseMatrix::from_triplets(1, 1, {{1, 0, 1.0}}), Error);
}

TEST(SparseMatrix, ProductMatchesDense) {
  auto rng = Rng::derive(3, "mm");
  std::vector<Triplet> ea, eb;
  for (std::uint32_t r = 0; r < 6; ++r)
    for (std::uint32_t c = 0; c < 5; ++c)
      if (rng.bernoulli(0.4)) ea.push_back({r, c, rng.uniform()});
  for (std::uint32_t r = 0; r < 5; ++r)
    for (std::uint32_t c = 0; c < 4; ++c)
      if (rng.bernoulli(0.4)) eb.push_back({r, c, rng.uniform()});
  const auto a = SparseMatrix::from_triplets(6, 5, ea);
  const auto b = SparseMatrix::from_triplets(5, 4, eb);
  const auto da = a.to_dense();
  const auto db = b.to_dense();
  const auto sparse = a.multiply(b).to_dense();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < 5; ++k) sum += da[i * 5 + k] * db[k * 4 + j];
      EXPECT_NEAR(sparse[i * 4 + j], sum, 1e-15);
    }
  }
  const std::vector<double> x = {1.0, -2.0, 0.5, 0.0, 3.0};
  const auto ax = a.multiply(x);
  const auto dx = dense_multiply(da, 6, 5, x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(ax[i], dx[i], 1e-15);
}

TEST(BuildCompression, FullDensityGivesAllOnesColumn) {
  const auto c = build_compression(1, params_for(5, 1.0), "t");
  EXPECT_EQ(c.matrix.nnz(), 5u);
}

TEST(BuildCompression, DeterministicPerSeedAndTag) {
  const auto params = params_for(50, 0.1, 9);
  EXPECT_EQ(build_compression(100, params, "a"), build_compression(100, params, "a"));
  EXPECT_NE(build_compression(100, params, "a").matrix, build_compression(100, params, "b").matrix);
}

TEST(BuildCompression, BinaryAndMeanSupportNearTwelve) {
  const std::size_t m = 4096;
  const std::size_t n = static_cast<std::size_t>(std::ceil(std::sqrt(m) * std::log2(m)));
  ASSERT_EQ(n, 768u);
  const auto c = build_compression(m, params_for(n, std::log2(m) / static_cast<double>(n), 1), "mean");
  for (const auto& t : c.matrix.triplets()) ASSERT_EQ(t.value, 1.0);
  const double mean = static_cast<double>(c.matrix.nnz()) / static_cast<double>(m);
  EXPECT_GE(mean, 10.8);
  EXPECT_LE(mean, 13.2);
}

TEST(BuildCompression, ZeroDensityIsEmptyColumn) {
  EXPECT_THROW(build_compression(3, params_for(10, 0.0), "z"), Error);
}

TEST(BuildDecompression, SingleOne) {
  const auto c = build_compression(1, params_for(1, 1.0), "one");
  const auto d = build_decompression(c);
  EXPECT_DOUBLE_EQ(d.matrix.at(0, 0), 1.0);
  EXPECT_EQ(d.kind, ChannelKind::Decompression);
}

TEST(BuildDecompression, WeightsAreReciprocalSupport) {
  const auto c = build_compression(200, params_for(60, 0.07, 2), "w");
  const auto d = build_decompression(c);
  const auto t = c.matrix.transpose();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto vals = d.matrix.row_values(i);
    ASSERT_EQ(vals.size(), t.row_cols(i).size());
    double sum = 0.0;
    for (const auto v : vals) {
      EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(vals.size()));
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(BuildDecompression, DiagonalOfDCIsOne) {
  const std::size_t m = 4096;
  const std::size_t n = 768;
  const double p = 12.0 / n;
  const auto c = build_compression(m, params_for(n, p, 4), "dc");
  const auto dc = build_decompression(c).matrix.multiply(c.matrix);
  const auto ct = c.matrix.transpose();
  double off_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    EXPECT_NEAR(dc.at(i, i), 1.0, 1e-12);
    const auto cols = dc.row_cols(i);
    const auto vals = dc.row_values(i);
    const auto own = ct.row_cols(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == i) continue;
      off_sum += vals[k];
      // An off-diagonal 1 means column i's support sits inside column j's.
      const auto other = ct.row_cols(cols[k]);
      const bool inside = std::includes(other.begin(), other.end(), own.begin(), own.end());
      EXPECT_EQ(std::abs(vals[k] - 1.0) < 1e-12, inside);
      EXPECT_LE(vals[k], 1.0 + 1e-12);
    }
  }
  const double off_mean = off_sum / static_cast<double>(m * (m - 1));
  EXPECT_NEAR(off_mean, p, p * 0.25);
}

TEST(BuildDecompression, RejectsDecompressionInput) {
  const auto c = build_compression(4, params_for(4, 1.0), "r");
  EXPECT_THROW(build_decompression(build_decompression(c)), Error);
}

TEST(ClippedRelu, Examples) {
  EXPECT_EQ(clipped_relu(0.2), 0.0);
  EXPECT_EQ(clipped_relu(0.9), 1.0);
  EXPECT_EQ(clipped_relu(2.0), 1.0);
  EXPECT_EQ(clipped_relu(-3.0), 0.0);
  SuperposedState mid{{0.0, 0.5}, ""};
  try {
    clipped_relu(mid, ClipMode::Checked);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MidRangeValue);
  }
  EXPECT_NO_THROW(clipped_relu(mid, ClipMode::Unchecked));
}

TEST(ClippedRelu, BoundariesAreMidRange) {
  EXPECT_TRUE(is_mid_range(0.25));
  EXPECT_TRUE(is_mid_range(0.75));
  EXPECT_FALSE(is_mid_range(0.2499));
  EXPECT_FALSE(is_mid_range(0.7501));
}

TEST(ClippedRelu, IdempotentOnBinary) {
  SuperposedState x{{0.0, 1.0, 1.0, 0.0}, ""};
  const auto once = clipped_relu(x);
  EXPECT_EQ(once.values, x.values);
  EXPECT_EQ(clipped_relu(once).values, once.values);
}

TEST(Compress, ZeroAndOneHot) {
  const std::size_t m = 256;
  const auto c = build_compression(m, params_for(128, 8.0 / 128, 5), "oh");
  const auto d = build_decompression(c);
  std::vector<double> y(m, 0.0);
  const auto zero = compress(y, c);
  for (const auto v : zero.values) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(threshold(decode(zero, d)).ones.empty());
  y[17] = 1.0;
  const auto x = compress(y, c);
  for (std::size_t r = 0; r < c.rows(); ++r) EXPECT_EQ(x.values[r], c.matrix.at(r, 17));
  EXPECT_DOUBLE_EQ(decode(x, d)[17], 1.0);
  EXPECT_THROW(compress(std::vector<double>(3, 0.0), c), Error);
}

TEST(Compress, LinearInY) {
  const std::size_t m = 64;
  const auto c = build_compression(m, params_for(32, 0.2, 6), "lin");
  std::vector<double> a(m, 0.0), b(m, 0.0), ab(m, 0.0);
  a[1] = 1.0;
  b[9] = 1.0;
  ab[1] = ab[9] = 1.0;
  const auto xa = compress(a, c).values;
  const auto xb = compress(b, c).values;
  const auto xab = compress(ab, c).values;
  for (std::size_t r = 0; r < xab.size(); ++r) EXPECT_DOUBLE_EQ(xab[r], xa[r] + xb[r]);
}

TEST(EncodeColumns, OverlapIsOrNotSum) {
  const auto c = build_compression(2, params_for(4, 1.0), "or");
  const std::vector<std::size_t> both = {0, 1};
  for (const auto v : encode_columns(c, both).values) EXPECT_EQ(v, 1.0);
}

TEST(Threshold, ClassifiesThreeBands) {
  const std::vector<double> v = {0.0, 0.25, 0.26, 0.74, 0.75, 1.2};
  const auto r = threshold(v);
  EXPECT_EQ(r.ones, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(r.ambiguous, (std::vector<std::size_t>{2, 3}));
  EXPECT_FALSE(r.clean());
}

TEST(Permutation, IdentityAndSwap) {
  const std::size_t m = 64;
  const auto params = params_for(512, 10.0 / 512, 11);
  const auto c = build_compression(m, params, "in");
  const auto d = build_decompression(c);
  std::vector<std::size_t> swap(m);
  std::iota(swap.begin(), swap.end(), 0);
  std::swap(swap[0], swap[1]);
  const auto layer = build_permutation_layer(d, swap, params, "perm");
  const std::vector<std::size_t> zero = {0};
  const auto out = permute_in_superposition(encode_columns(c, zero), layer, ClipMode::Unchecked);
  EXPECT_EQ(threshold(decode(out, layer.fresh_decoder)).ones, (std::vector<std::size_t>{1}));

  std::vector<std::size_t> bad(m, 0);
  EXPECT_THROW(build_permutation_layer(d, bad, params, "bad"), Error);
}
