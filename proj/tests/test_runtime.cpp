#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"

using namespace superpose;

namespace {

const Network& net() {
  const auto& r = fixtures::small_build();
  EXPECT_TRUE(r.ok) << r.error;
  return r.network;
}

ErrorKind kind_of(const std::string& bytes) {
  try {
    deserialize(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "deserialize accepted corrupt bytes";
  return ErrorKind::IoError;
}

// Re-stamps the trailing CRC so only the targeted defect remains.
std::string restamp(std::string bytes) {
  const auto crc = detail::crc_of(std::string_view(bytes).substr(0, bytes.size() - 4));
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xFF);
  return bytes;
}

}  // namespace

TEST(Runtime, SmallBuildDecodesEveryPair) {
  const ForwardEngine engine(net());
  EXPECT_EQ(engine.run(std::vector<std::size_t>{}).ones, std::vector<std::size_t>{});
  EXPECT_EQ(engine.run(std::vector<std::size_t>{0, 1}).ones, std::vector<std::size_t>{0});
  EXPECT_EQ(engine.run(std::vector<std::size_t>{4, 5}).ones, std::vector<std::size_t>{2});
  EXPECT_TRUE(engine.run(std::vector<std::size_t>{1, 2}).ones.empty());
}

TEST(Runtime, TooManyActive) {
  try {
    encode_input(std::vector<std::size_t>{0, 1, 2}, net());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooManyActive);
  }
  EXPECT_NO_THROW(encode_input(std::vector<std::size_t>{3, 3}, net()));
}

TEST(Runtime, FoldedSparseDenseAndUnfoldedAgree) {
  const auto& n = net();
  const ForwardEngine engine(n);
  for (const ActiveSet& s : {ActiveSet{}, ActiveSet{2}, ActiveSet{0, 1}, ActiveSet{2, 3}, ActiveSet{1, 4}}) {
    const auto x0 = encode_input(s, n);
    const auto sparse = engine.forward(x0, ClipMode::Unchecked).values;
    const auto dense = forward_dense(n, x0).values;
    std::vector<double> unfolded = x0.values;
    for (const auto& layer : n.layers) unfolded = step_unfolded(layer, unfolded, ClipMode::Unchecked);
    ASSERT_EQ(sparse.size(), dense.size());
    for (std::size_t r = 0; r < sparse.size(); ++r) {
      EXPECT_NEAR(sparse[r], dense[r], 1e-9);
      EXPECT_NEAR(sparse[r], unfolded[r], 1e-9);
    }
  }
}

TEST(Serialize, RoundTripIsExact) {
  const auto bytes = serialize(net());
  const auto back = deserialize(bytes);
  EXPECT_EQ(back, net());
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(bytes.substr(0, kMagic.size()), kMagic);
}

TEST(Serialize, SaveLoadThroughFile) {
  const auto path = (std::filesystem::temp_directory_path() / "superpose_rt.spn").string();
  save(net(), path);
  EXPECT_EQ(load(path), net());
  std::filesystem::remove(path);
  try {
    load(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}

TEST(Serialize, FlippedByteIsChecksumMismatch) {
  auto bytes = serialize(net());
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_EQ(kind_of(bytes), ErrorKind::ChecksumMismatch);
}

TEST(Serialize, WrongVersionIsVersionMismatch) {
  auto bytes = serialize(net());
  const std::string from = "\"format_version\":1";
  const auto at = bytes.find(from);
  ASSERT_NE(at, std::string::npos);
  bytes.replace(at, from.size(), "\"format_version\":7");
  EXPECT_EQ(kind_of(restamp(bytes)), ErrorKind::VersionMismatch);
}

TEST(Serialize, BadMagicAndTruncation) {
  auto bytes = serialize(net());
  bytes[0] = 'X';
  EXPECT_EQ(kind_of(restamp(bytes)), ErrorKind::MalformedFile);
  EXPECT_EQ(kind_of("short"), ErrorKind::MalformedFile);
  const auto good = serialize(net());
  EXPECT_EQ(kind_of(restamp(good.substr(0, good.size() - 40))), ErrorKind::MalformedFile);
}
