#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"

using namespace superpose;

TEST(PlanNetwork, StagesPerCircuitShape) {
  const auto opt = fixtures::wide_options();
  EXPECT_EQ(plan_network({fixtures::small_circuit()}, opt).stages.size(), 1u);
  const auto chain = generate_chain(8, 3, 1);
  EXPECT_EQ(plan_network(chain, opt).stages.size(), 3u);
  auto kand = plan_network({generate_k_and(10, 4, 4, 4, 1)}, opt);
  ASSERT_EQ(kand.stages.size(), 1u);
  EXPECT_GE(kand.stages.front().layers.size(), 3u);  // copies, tree level, combine
}

TEST(PlanNetwork, RejectsBrokenChains) {
  const auto opt = fixtures::wide_options();
  EXPECT_THROW(plan_network({}, opt), Error);
  const auto a = parse_circuit("m=4\nand 0 1\n");
  try {
    plan_network({a, a}, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(TryConstruct, SmallBuildReportsAttempts) {
  const auto& r = fixtures::small_build();
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_TRUE(r.report.pass);
  EXPECT_EQ(r.report.attempts, r.attempts());
  EXPECT_TRUE(r.transcript.back().pass);
  EXPECT_EQ(r.network.m, 6u);
  EXPECT_EQ(r.network.m_out, 3u);
  EXPECT_EQ(r.network.layers.size(), 1u);
}

TEST(TryConstruct, DeterministicBytes) {
  const auto a = try_construct({fixtures::small_circuit()}, fixtures::wide_options(4));
  const auto b = try_construct({fixtures::small_circuit()}, fixtures::wide_options(4));
  ASSERT_EQ(a.ok, b.ok);
  EXPECT_EQ(serialize(a.network), serialize(b.network));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(TryConstruct, ZeroDensityFailsAsConstructionFailed) {
  auto opt = fixtures::wide_options();
  opt.params.beta = 0.0;
  opt.max_restarts = 3;
  const auto r = try_construct({fixtures::small_circuit()}, opt);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.attempts(), 3u);
  try {
    compile_network({fixtures::small_circuit()}, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstructionFailed);
  }
}

TEST(TryConstruct, KeepFailedStillYieldsANetwork) {
  auto opt = fixtures::wide_options();
  opt.params.alpha = 0.5;
  opt.params.beta = 1.0;
  opt.max_restarts = 1;
  opt.keep_failed = true;
  const auto circuit = generate_single_use(64, 2);
  const auto r = try_construct({circuit}, opt);
  if (r.ok) GTEST_SKIP() << "alpha 0.5 happened to pass";
  EXPECT_FALSE(r.error.empty());
  ASSERT_EQ(r.network.layers.size(), 1u);
  EXPECT_EQ(r.network.output_decoding.rows(), circuit.m_prime());
}

TEST(TryConstruct, ChainOfTwo) {
  auto opt = fixtures::wide_options(2);
  const auto chain = generate_chain(6, 2, 5);
  const auto r = try_construct(chain, opt);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.network.layers.size(), 2u);
  VerifyOptions v;
  v.mode = VerifyMode::Exhaustive;
  EXPECT_TRUE(verify_network(r.network, v).pass);
}

TEST(Sweep, CsvHeaderAndRows) {
  auto opt = fixtures::wide_options();
  opt.max_restarts = 1;
  const auto rows = sweep([](std::size_t mp, std::uint64_t s) { return generate_single_use(mp, s); }, {4}, {64.0, 256.0}, 2,
                          opt);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n, CodecParams::neurons_for(4, 64.0));
  EXPECT_EQ(rows[1].seeds, 2u);
  for (const auto& r : rows) {
    EXPECT_LE(r.passes, r.seeds);
    EXPECT_DOUBLE_EQ(r.mean_restarts, 1.0);
    EXPECT_FALSE(std::isnan(r.max_type_a));
  }
  std::ostringstream out;
  write_sweep_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepHeader);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST(Sweep, NanWhenNothingWasBuilt) {
  SweepRow row;
  row.mprime = 4;
  row.alpha = 1;
  std::ostringstream out;
  write_sweep_csv(out, {row});
  EXPECT_NE(out.str().find(",nan,nan,nan"), std::string::npos);
}
