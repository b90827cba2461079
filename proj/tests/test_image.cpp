#include <gtest/gtest.h>

#include <sstream>

#include "deepsent/image.hpp"
#include "deepsent/random.hpp"

using namespace deepsent;

TEST(Ppm, BinaryScaledToUnitRange) {
  std::string bytes = "P6\n# comment\n2 1\n255\n";
  bytes += std::string("\x00\x80\xff\xff\x00\x33", 6);
  const Tensor t = parse_ppm(bytes);
  ASSERT_EQ(t.shape, (std::vector<Index>{1, 2, 3}));
  EXPECT_EQ(t.data[0], 0.0);
  EXPECT_EQ(t.data[1], 128.0 / 255.0);
  EXPECT_EQ(t.data[2], 1.0);
  EXPECT_EQ(t.data[5], 51.0 / 255.0);
}

TEST(Ppm, AsciiVariant) {
  const Tensor t = parse_ppm("P3 1 2 15\n0 15 5\n15 0 0\n");
  ASSERT_EQ(t.shape, (std::vector<Index>{2, 1, 3}));
  EXPECT_EQ(t.data[1], 1.0);
  EXPECT_EQ(t.data[3], 1.0);
}

TEST(Ppm, MalformedInputs) {
  EXPECT_THROW(parse_ppm("P5 1 1 255\n\x01"), ParseError);
  EXPECT_THROW(parse_ppm("P6 2 2 255\n\x01\x02"), ParseError);
  EXPECT_THROW(parse_ppm("P6 x 2 255\n"), ParseError);
  EXPECT_THROW(load_ppm("/nonexistent.ppm"), IoError);
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(1);
  Tensor t({4, 5, 3});
  for (Index i = 0; i < t.size(); ++i) t.data[i] = uniform01(rng);
  EXPECT_EQ(resize_bilinear(t, 4, 5), t);
}

TEST(Resize, ConstantImageStaysConstant) {
  Tensor t({3, 7, 3});
  t.data.setConstant(0.25);
  const Tensor r = resize_bilinear(t, 224, 224);
  EXPECT_EQ(r.shape, (std::vector<Index>{224, 224, 3}));
  for (Index i = 0; i < r.size(); ++i) ASSERT_NEAR(r.data[i], 0.25, 1e-15);
}

TEST(Resize, HorizontalRampHalvedAveragesPairs) {
  Tensor t({1, 4, 1});
  t.data << 0, 1, 2, 3;
  const Tensor r = resize_bilinear(t, 1, 2);
  // Pixel centers at 0.5 and 2.5 in source coordinates.
  EXPECT_NEAR(r.data[0], 0.5, 1e-15);
  EXPECT_NEAR(r.data[1], 2.5, 1e-15);
}

TEST(Resize, StaysInUnitRange) {
  Rng rng(2);
  Tensor t({5, 3, 3});
  for (Index i = 0; i < t.size(); ++i) t.data[i] = uniform01(rng);
  const Tensor r = resize_bilinear(t, 11, 9);
  EXPECT_GE(r.data.minCoeff(), 0.0);
  EXPECT_LE(r.data.maxCoeff(), 1.0);
}

TEST(FeatureFile, ParseWriteRoundTrip) {
  std::istringstream in("a 1 2 3\nb 0.5 -1e-3 7\n");
  const FeatureStore s = parse_feature_file(in);
  EXPECT_EQ(s.dim(), 3);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ((*s.find("b"))[1], -1e-3);
  EXPECT_EQ(s.find("c"), nullptr);
  std::ostringstream out;
  write_feature_file(s, out);
  std::istringstream back_in(out.str());
  const FeatureStore back = parse_feature_file(back_in);
  EXPECT_EQ(back.entries(), s.entries());
}

TEST(FeatureFile, Errors) {
  std::istringstream ragged("a 1 2\nb 1\n");
  try {
    parse_feature_file(ragged);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream empty("");
  EXPECT_THROW(parse_feature_file(empty), ParseError);
  std::istringstream dup("a 1\na 2\n");
  const FeatureStore s = parse_feature_file(dup);
  EXPECT_EQ((*s.find("a"))[0], 1.0);
  EXPECT_EQ(s.warnings().size(), 1u);
  EXPECT_THROW(load_feature_file("/nonexistent/features.txt"), IoError);
}
