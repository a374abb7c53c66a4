#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <zlib.h>

#include "cdpkit/arch.hpp"
#include "cdpkit/errors.hpp"
#include "cdpkit/weight_store.hpp"
#include "support.hpp"

using namespace cdpkit;
using cdpkit::fixtures::Rng;

namespace {

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + at, 4);
  return v;
}

WeightStore small_store() {
  Rng rng(3);
  WeightStore s;
  s.manifest = {"toy", 42, 1};
  s.tensors["layer1/kernel"] = rng.tensor({3, 3, 2, 4});
  s.tensors["a/vector"] = rng.tensor({5});
  return s;
}

}  // namespace

TEST(WeightStoreTest, RoundTripIsBitExact) {
  const auto store = random_weights(l2net_spec(), 77);
  const auto bytes = encode_weight_store(store);
  const auto back = decode_weight_store(bytes);
  EXPECT_EQ(back, store);
  EXPECT_EQ(encode_weight_store(back), bytes);
}

TEST(WeightStoreTest, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cdpkit_store_test.cdpw";
  const auto store = small_store();
  write_weight_store(store, path);
  EXPECT_EQ(read_weight_store(path), store);
  std::filesystem::remove(path);
  EXPECT_THROW(read_weight_store(path), WeightMismatch);
}

TEST(WeightStoreTest, LayoutMatchesContainerFormat) {
  WeightStore s;
  s.manifest = {"x", 1, 1};
  s.tensors["t"] = Tensor({2}, {1.5f, -2.0f});
  const auto bytes = encode_weight_store(s);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CDPW");
  EXPECT_EQ(read_u32(bytes, 4), 1u);
  EXPECT_EQ(read_u32(bytes, 8), 2u);  // manifest + t
  const auto crc = ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4));
  EXPECT_EQ(read_u32(bytes, bytes.size() - 4), crc);
  // "t" sorts after the manifest: u16 len, name, u8 ndim, u32 dim, f32 data, u32 crc.
  const std::size_t t_at = bytes.size() - 4 - (2 + 1 + 1 + 4 + 8);
  EXPECT_EQ(bytes[t_at], 1);
  EXPECT_EQ(bytes[t_at + 2], 't');
  EXPECT_EQ(bytes[t_at + 3], 1);
  EXPECT_EQ(read_u32(bytes, t_at + 4), 2u);
  float v;
  std::memcpy(&v, bytes.data() + t_at + 8, 4);
  EXPECT_EQ(v, 1.5f);
}

TEST(WeightStoreTest, CorruptionIsDetected) {
  const auto bytes = encode_weight_store(small_store());
  for (std::size_t at : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x40;
    EXPECT_THROW(decode_weight_store(bad), WeightMismatch) << at;
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(decode_weight_store(truncated), WeightMismatch);
  EXPECT_THROW(decode_weight_store(std::vector<std::uint8_t>(3)), WeightMismatch);
}

TEST(WeightStoreTest, SeededInitialisationIsDeterministic) {
  const auto arch = l2net_spec();
  EXPECT_EQ(random_weights(arch, 1), random_weights(arch, 1));
  EXPECT_NE(random_weights(arch, 1).tensors, random_weights(arch, 2).tensors);
  EXPECT_EQ(random_weights(arch, 1).manifest.seed, 1u);
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
}

TEST(WeightStoreTest, InitialisationScalesWithFanIn) {
  const auto store = random_weights(l2net_spec(), 4);
  const auto& k = store.tensors.at("layer6/kernel");
  double sq = 0.0;
  for (float v : k.data()) sq += double(v) * v;
  EXPECT_NEAR(sq / double(k.size()), 1.0 / (9 * 128), 0.1 / (9 * 128));
}

TEST(WeightStoreTest, CheckStoreNamesOffendingTensor) {
  const auto arch = l2net_spec();
  auto store = random_weights(arch, 1);
  EXPECT_NO_THROW(check_store(arch, store));

  auto wrong = store;
  wrong.tensors["layer3/kernel"] = Tensor({3, 3, 32, 65});
  try {
    check_store(arch, wrong);
    FAIL();
  } catch (const WeightMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("layer3/kernel"), std::string::npos);
  }
  auto missing = store;
  missing.tensors.erase("layer7/kernel");
  EXPECT_THROW(check_store(arch, missing), WeightMismatch);
  auto extra = store;
  extra.tensors["layer9/kernel"] = Tensor({1});
  EXPECT_THROW(check_store(arch, extra), WeightMismatch);
}

TEST(WeightStoreTest, LayerAccessors) {
  auto store = random_weights(l2net_spec(), 1);
  const auto w = store.layer(2);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w.at("kernel").dims(), (Shape{3, 3, 32, 32}));
  store.set_layer(2, {{"depthwise", Tensor({3, 3, 32})}, {"pointwise", Tensor({32, 32})}});
  EXPECT_FALSE(store.tensors.contains("layer2/kernel"));
  EXPECT_TRUE(store.tensors.contains("layer2/pointwise"));
  EXPECT_EQ(layer_weights(l2net_spec(), random_weights(l2net_spec(), 1)).size(), 7u);
}
