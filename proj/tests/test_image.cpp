#include <gtest/gtest.h>

#include <cstring>

#include "livestyle/image.hpp"
#include "test_util.hpp"

using namespace livestyle;
using namespace livestyle::image;

namespace {

ImageTensor constant_image(std::size_t h, std::size_t w, float v) { return ImageTensor(h, w, Range::unit, v); }

RawImage raw(std::size_t w, std::size_t h, std::vector<std::uint8_t> px) { return RawImage{w, h, 3, std::move(px)}; }

}  // namespace

TEST(Decode, WhitePixelPng) {
  const auto png = encode_image(constant_image(1, 1, 1.0f), Format::png);
  const auto img = decode_image(png);
  EXPECT_EQ(img.width, 1u);
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{255, 255, 255}));
}

TEST(Decode, BlackJpegWithinLossyTolerance) {
  const auto jpg = encode_image(constant_image(2, 2, 0.0f), Format::jpeg);
  ASSERT_GE(jpg.size(), 3u);
  EXPECT_EQ(jpg[0], 0xFF);
  EXPECT_EQ(jpg[1], 0xD8);
  const auto img = decode_image(jpg);
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 2u);
  for (auto p : img.pixels) EXPECT_LE(p, 3);
}

TEST(Decode, RejectsNonImages) {
  const std::string text = "hello";
  EXPECT_THROW(decode_image({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}), UnsupportedFormat);
  EXPECT_THROW(decode_image({}), UnsupportedFormat);
}

TEST(Decode, TruncatedStreamsAreCorrupt) {
  Rng rng(1);
  auto png = encode_image(testutil::random_image(16, 16, rng), Format::png);
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_image(png), CorruptImage);
  auto jpg = encode_image(testutil::random_image(16, 16, rng), Format::jpeg);
  jpg.resize(20);
  EXPECT_THROW(decode_image(jpg), CorruptImage);
}

TEST(UnitTensor, ScalesByExactly255) {
  const auto t = to_unit_tensor(raw(3, 1, {255, 0, 128, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(t.range, Range::unit);
  EXPECT_FLOAT_EQ(t.data[0], 1.0f);
  EXPECT_FLOAT_EQ(t.data[1], 0.0f);
  EXPECT_NEAR(t.data[2], 0.50196, 1e-5);
  EXPECT_EQ(t.data[2], 128.0f / 255.0f);
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(2);
  const auto t = testutil::random_image(7, 7, rng);
  const auto r = resize(t, 7);
  EXPECT_EQ(r.data, t.data);
}

TEST(Resize, CheckerboardAveragesToHalf) {
  ImageTensor t(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    t.at(0, 0, c) = 0;
    t.at(0, 1, c) = 1;
    t.at(1, 0, c) = 1;
    t.at(1, 1, c) = 0;
  }
  const auto r = resize(t, 1);
  ASSERT_EQ(r.height, 1u);
  for (float v : r.data) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resize, ConstantExtension) {
  const auto r = resize(constant_image(1, 1, 0.3f), 4);
  ASSERT_EQ(r.height, 4u);
  ASSERT_EQ(r.width, 4u);
  for (float v : r.data) EXPECT_FLOAT_EQ(v, 0.3f);
}

TEST(Resize, NonSquareToSquareKeepsRangeTag) {
  Rng rng(3);
  auto t = normalize(testutil::random_image(5, 9, rng), PreprocessSpec{});
  const auto r = resize(t, 4);
  EXPECT_EQ(r.range, Range::backbone);
  EXPECT_EQ(r.data.size(), 4u * 4u * 3u);
  EXPECT_THROW(resize(t, 0), InvalidSize);
}

TEST(Normalize, IdentityParameters) {
  PreprocessSpec spec;
  spec.channel_means = {0, 0, 0};
  spec.channel_stds = {1, 1, 1};
  Rng rng(4);
  const auto t = testutil::random_image(4, 4, rng);
  EXPECT_EQ(normalize(t, spec).data, t.data);
}

TEST(Normalize, Arithmetic) {
  PreprocessSpec spec;
  spec.channel_means = {0.5f, 0.5f, 0.5f};
  spec.channel_stds = {0.25f, 0.25f, 0.25f};
  const auto n = normalize(constant_image(1, 1, 0.5f), spec);
  for (float v : n.data) EXPECT_EQ(v, 0.0f);
  const auto one = normalize(constant_image(1, 1, 1.0f), spec);
  for (float v : one.data) EXPECT_FLOAT_EQ(v, 2.0f);
}

TEST(Normalize, InversePairAndRangeChecks) {
  Rng rng(5);
  const PreprocessSpec spec;
  const auto t = testutil::random_image(8, 8, rng);
  const auto back = denormalize(normalize(t, spec), spec);
  for (std::size_t i = 0; i < t.data.size(); ++i) EXPECT_NEAR(back.data[i], t.data[i], 1e-6);
  EXPECT_THROW(denormalize(t, spec), RangeMismatch);
  EXPECT_THROW(normalize(normalize(t, spec), spec), RangeMismatch);

  // normalize(denormalize(n)) on an in-range BACKBONE tensor
  const auto n = normalize(t, spec);
  const auto n2 = normalize(denormalize(n, spec), spec);
  for (std::size_t i = 0; i < n.data.size(); ++i) EXPECT_NEAR(n2.data[i], n.data[i], 1e-5);
}

TEST(Normalize, DenormalizeClips) {
  ImageTensor t(1, 1, Range::backbone, 100.0f);
  for (float v : denormalize(t, PreprocessSpec{}).data) EXPECT_EQ(v, 1.0f);
  ImageTensor lo(1, 1, Range::backbone, -100.0f);
  for (float v : denormalize(lo, PreprocessSpec{}).data) EXPECT_EQ(v, 0.0f);
}

TEST(PreprocessSpecValidation, Invariants) {
  PreprocessSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.target_size = 31;
  EXPECT_THROW(spec.validate(), InvalidSize);
  spec.target_size = 32;
  spec.channel_stds[1] = 0.0f;
  EXPECT_THROW(spec.validate(), InvalidParams);
}

TEST(Encode, RoundHalfUpAndClipping) {
  ImageTensor t(1, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    t.at(0, 0, c) = 0.5f;
    t.at(0, 1, c) = 1.3f;
    t.at(0, 2, c) = -0.2f;
  }
  const auto q = quantize(t);
  EXPECT_EQ(q.pixels[0], 128);
  EXPECT_EQ(q.pixels[3], 255);
  EXPECT_EQ(q.pixels[6], 0);
  const auto img = decode_image(encode_image(t, Format::png));
  EXPECT_EQ(img.pixels, q.pixels);
}

TEST(Encode, NanBecomesZero) {
  ImageTensor t(1, 1, Range::unit, std::nanf(""));
  for (auto p : quantize(t).pixels) EXPECT_EQ(p, 0);
}

TEST(Encode, PngRoundTripWithinQuantization) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.index(20), w = 1 + rng.index(20);
    auto t = testutil::random_image(h, w, rng);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-0.2, 1.2));  // exercise clipping too
    const auto back = to_unit_tensor(decode_image(encode_image(t, Format::png)));
    ASSERT_EQ(back.height, h);
    ASSERT_EQ(back.width, w);
    for (std::size_t i = 0; i < t.data.size(); ++i)
      EXPECT_LE(std::abs(back.data[i] - std::clamp(t.data[i], 0.0f, 1.0f)), 1.0f / 255.0f + 1e-7f);
  }
}

TEST(Encode, PngIsDeterministic) {
  Rng rng(7);
  const auto t = testutil::random_image(9, 13, rng);
  EXPECT_EQ(encode_image(t, Format::png), encode_image(t, Format::png));
}

TEST(Encode, RejectsBackboneRange) {
  ImageTensor t(1, 1, Range::backbone, 0.0f);
  EXPECT_THROW(encode_image(t, Format::png), RangeMismatch);
}

TEST(Chw, RoundTrip) {
  Rng rng(8);
  const auto t = testutil::random_image(3, 5, rng);
  const auto chw = to_chw<float>(t);
  EXPECT_EQ(chw.shape, (Shape{3, 3, 5}));
  EXPECT_EQ(chw[1 * 15 + 2 * 5 + 4], t.at(2, 4, 1));
  EXPECT_EQ(from_chw(chw, Range::unit).data, t.data);
}

TEST(NoNaN, PipelineOnFiniteInput) {
  Rng rng(9);
  const auto t = testutil::random_image(6, 10, rng);
  for (const auto& out : {resize(t, 3), resize(t, 17), normalize(t, PreprocessSpec{}),
                          denormalize(normalize(t, PreprocessSpec{}), PreprocessSpec{})})
    for (float v : out.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Decode, DropsAlphaChannel) {
  // 2x1 RGBA PNG: (10,20,30,0) and (200,100,50,128)
  const std::vector<std::uint8_t> rgba_png{
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00,
      0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0xf4, 0x22, 0x7f, 0x8a, 0x00,
      0x00, 0x00, 0x11, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0xe4, 0x12, 0x91, 0x63, 0xd8, 0x17, 0x20,
      0xd2, 0x00, 0x00, 0x06, 0x32, 0x01, 0xe0, 0xbb, 0x66, 0x9f, 0x29, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45,
      0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
  const auto img = decode_image(rgba_png);
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{10, 20, 30, 200, 100, 50}));
}
