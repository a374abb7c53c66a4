#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cdpkit/arch.hpp"
#include "cdpkit/arch_io.hpp"
#include "cdpkit/cost.hpp"
#include "cdpkit/errors.hpp"

using namespace cdpkit;

TEST(L2NetTest, LayerTable) {
  const auto arch = l2net_spec();
  ASSERT_EQ(arch.layers.size(), 7u);
  EXPECT_EQ(arch.input, (InputShape{32, 32, 1}));
  const std::vector<std::array<std::size_t, 5>> expected{
      {3, 1, 32, 1, 1},   {3, 32, 32, 1, 1},   {3, 32, 64, 2, 1},   {3, 64, 64, 1, 1},
      {3, 64, 128, 2, 1}, {3, 128, 128, 1, 1}, {8, 128, 128, 1, 0}};
  for (std::size_t i = 0; i < 7; ++i) {
    const auto& l = arch.layers[i];
    EXPECT_EQ(l.kind, LayerKind::Standard);
    EXPECT_EQ((std::array<std::size_t, 5>{l.kernel, l.in_channels, l.out_channels, l.stride,
                                          l.padding}),
              expected[i])
        << "layer " << i + 1;
  }
  EXPECT_EQ(output_shape(arch), (Shape{1, 1, 128}));
  EXPECT_EQ(model_cost(arch).per_layer[2].cost.params, 18432u);
}

TEST(SuperPointTest, LayerTable) {
  const auto arch = superpoint_spec();
  ASSERT_EQ(arch.layers.size(), 10u);
  EXPECT_EQ(arch.input, (InputShape{320, 240, 3}));
  EXPECT_EQ(arch.pools, (std::set<std::size_t>{2, 4, 6}));
  const std::vector<std::size_t> outs{64, 64, 64, 64, 128, 128, 128, 128, 256, 65};
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(arch.layers[i].out_channels, outs[i]);
    EXPECT_EQ(arch.layers[i].group, i < 8 ? "backbone" : "head");
  }
  EXPECT_EQ(arch.layers[9].kernel, 1u);
  EXPECT_EQ(output_shape(arch), (Shape{30, 40, 65}));
}

TEST(ArchSpecTest, ChannelChainingIsValidated) {
  auto arch = l2net_spec();
  arch.layers[3].in_channels = 32;
  EXPECT_THROW(arch.validate(), InvalidArgument);
  arch = l2net_spec();
  arch.pools = {9};
  EXPECT_THROW(arch.validate(), InvalidArgument);
}

TEST(BuiltinTest, Lookup) {
  EXPECT_TRUE(is_builtin_arch("l2net"));
  EXPECT_TRUE(is_builtin_arch("superpoint"));
  EXPECT_FALSE(is_builtin_arch("vgg"));
  EXPECT_EQ(builtin_arch("l2net"), l2net_spec());
  EXPECT_THROW(builtin_arch("vgg"), InvalidArgument);
}

TEST(ArchJsonTest, RoundTripsBuiltins) {
  for (const auto& arch : {l2net_spec(), superpoint_spec()}) {
    EXPECT_EQ(arch_from_json(arch_to_json(arch)), arch);
  }
}

TEST(ArchJsonTest, ParsesEveryKind) {
  const auto arch = arch_from_json(R"({
    "name": "mixed",
    "input": [16, 16, 4],
    "layers": [
      {"kind": "conv", "k": 3, "c": 4, "n": 8, "stride": 1, "pad": 1, "act": "relu"},
      {"kind": "depthsep", "k": 3, "c": 8, "n": 8, "pad": 1, "t": 2},
      {"kind": "tucker2", "k": 3, "c": 8, "n": 8, "pad": 1, "r1": 4, "r2": 5},
      {"kind": "tdw", "k": 3, "c": 8, "n": 8, "pad": 1, "r": 3, "inner_act": "relu"},
      {"kind": "cdp", "k": 3, "c": 8, "n": 8, "stride": 2, "pad": 1, "alpha": 2, "group": "tail"}
    ],
    "pools": [1]
  })");
  ASSERT_EQ(arch.layers.size(), 5u);
  EXPECT_EQ(arch.layers[0].activation, Activation::ReLU);
  EXPECT_EQ(arch.layers[1].width_multiplier, 2u);
  EXPECT_EQ(arch.layers[2].rank_out, 5u);
  EXPECT_EQ(arch.layers[3].inner_activation, Activation::ReLU);
  EXPECT_EQ(arch.layers[4].alpha, 2u);
  EXPECT_EQ(arch.layers[4].group, "tail");
  EXPECT_EQ(output_shape(arch), (Shape{4, 4, 8}));
}

TEST(ArchJsonTest, SyntaxErrorCarriesPosition) {
  try {
    arch_from_json("{\n  \"name\": \"x\",\n  \"input\": [1, 2,, 3]\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_GT(e.column(), 0);
  }
}

TEST(ArchJsonTest, SemanticErrors) {
  EXPECT_THROW(arch_from_json(""), ParseError);
  EXPECT_THROW(arch_from_json("[]"), ParseError);
  EXPECT_THROW(arch_from_json(R"({"name": "x", "input": [4, 4, 1], "layers": []})"), ParseError);
  EXPECT_THROW(arch_from_json(R"({"name": "x", "input": [4, 4], "layers": [{"kind": "conv", "k": 1, "c": 1, "n": 1}]})"),
               ParseError);
  EXPECT_THROW(arch_from_json(R"({"name": "x", "input": [4, 4, 1], "layers": [{"kind": "dense", "k": 1, "c": 1, "n": 1}]})"),
               ParseError);
  EXPECT_THROW(arch_from_json(R"({"name": "x", "input": [4, 4, 1], "layers": [{"kind": "conv", "k": 3, "c": 2, "n": 1}]})"),
               ParseError);
  EXPECT_THROW(arch_from_json(R"({"name": "x", "input": [4, 4, 1], "layers": [{"kind": "conv", "k": -3, "c": 1, "n": 1}]})"),
               ParseError);
}

TEST(ArchJsonTest, LoadsFileOrBuiltin) {
  EXPECT_EQ(load_arch("superpoint"), superpoint_spec());
  const auto path = std::filesystem::temp_directory_path() / "cdpkit_arch_test.json";
  {
    std::ofstream out(path);
    out << arch_to_json(l2net_spec());
  }
  EXPECT_EQ(load_arch(path.string()), l2net_spec());
  std::filesystem::remove(path);
  EXPECT_THROW(load_arch("/nonexistent/arch.json"), ParseError);
}
