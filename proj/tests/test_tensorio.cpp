#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "semhint/tensor_io.hpp"
#include "test_util.hpp"

using namespace semhint;

namespace {

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST(Tensor, RowMajorAddressing) {
  Tensor<int> t(3, 4, 2);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 2; ++k) t(r, c, k) = static_cast<int>(100 * r + 10 * c + k);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(t.index(r, c, k), (r * 4 + c) * 2 + k);
        EXPECT_EQ(t[(r * 4 + c) * 2 + k], static_cast<int>(100 * r + 10 * c + k));
      }
  EXPECT_THROW(t.at(3, 0), Error);
}

TEST(Tensor, DegenerateShapeRejected) {
  EXPECT_THROW(Image(0, 4), Error);
  EXPECT_THROW(Image(4, 0), Error);
  EXPECT_THROW(Image(2, 2, 0), Error);
  try {
    Image(0, 3);
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate shape rejected");
  }
}

TEST(TensorIO, SmallRoundTrips) {
  auto dir = test::scratch_dir("tio_small");
  Image f(2, 3, 1, {0.1f, -2.f, 3.5f, 1e-30f, 7.f, -0.f});
  io::save_tensor(f, dir / "f.stn");
  EXPECT_TRUE(bit_equal(io::load_tensor_as<float>(dir / "f.stn"), f));

  LabelMap seven(1, 1, 1, 7);
  io::save_tensor(seven, dir / "i.stn");
  EXPECT_EQ(io::load_tensor_as<std::int32_t>(dir / "i.stn")[0], 7);
  EXPECT_EQ(bytes_of(dir / "i.stn"), std::string("STN1 i32 1 1 1\n\x07\0\0\0", 19));
  EXPECT_THROW(io::load_tensor_as<float>(dir / "i.stn"), Error);
}

TEST(TensorIO, LittleEndianPayload) {
  Image one(1, 1, 1, 1.0f);
  const std::string enc = io::encode_tensor(one);
  EXPECT_EQ(enc.substr(0, 15), "STN1 f32 1 1 1\n");
  const std::string payload = enc.substr(15);
  ASSERT_EQ(payload.size(), 4u);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(payload[0]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(payload[3]), 0x3f);
}

TEST(TensorIO, MalformedInputs) {
  auto expect_msg = [](const std::string& bytes, const char* msg) {
    try {
      io::decode_tensor(bytes);
      ADD_FAILURE() << "no error for " << msg;
    } catch (const Error& e) {
      EXPECT_STREQ(e.what(), msg);
    }
  };
  expect_msg(std::string("STN1 u8 4 4 1\n") + std::string(15, 'x'), "payload length mismatch");
  expect_msg(std::string("STN1 u8 4 4 1\n") + std::string(17, 'x'), "payload length mismatch");
  expect_msg("STN1 f64 1 1 1\n12345678", "unsupported dtype");
  expect_msg("STN2 u8 1 1 1\nx", "malformed header");
  expect_msg("STN1 u8 1 1\nx", "malformed header");
  expect_msg("STN1 u8 1 1 1 1\nx", "malformed header");
  expect_msg("STN1 u8 -1 1 1\nx", "malformed header");
  expect_msg("STN1  u8 1 1 1\nx", "malformed header");
  expect_msg("STN1 u8 1 1 1", "malformed header");
  expect_msg("STN1 u8 0 1 1\n", "degenerate shape rejected");
}

TEST(TensorIO, RandomRoundTripProperty) {
  std::mt19937_64 rng(42);
  auto dir = test::scratch_dir("tio_prop");
  std::uniform_int_distribution<std::size_t> dim(1, 17), ch(1, 4);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int i = 0; i < 60; ++i) {
    const std::size_t h = dim(rng), w = dim(rng), c = ch(rng);
    Image f(h, w, c);
    for (auto& v : f) v = std::bit_cast<float>(bits(rng));  // includes NaN / inf patterns
    LabelMap l(h, w, c);
    for (auto& v : l) v = static_cast<std::int32_t>(bits(rng));
    ByteImage b(h, w, c);
    for (auto& v : b) v = static_cast<std::uint8_t>(bits(rng));
    io::save_tensor(f, dir / "f.stn");
    io::save_tensor(l, dir / "l.stn");
    io::save_tensor(b, dir / "b.stn");
    EXPECT_TRUE(bit_equal(io::load_tensor_as<float>(dir / "f.stn"), f));
    EXPECT_EQ(io::load_tensor_as<std::int32_t>(dir / "l.stn"), l);
    EXPECT_EQ(io::load_tensor_as<std::uint8_t>(dir / "b.stn"), b);
  }
}

TEST(TensorIO, MaskRoundTrip) {
  auto dir = test::scratch_dir("tio_mask");
  Mask m(3, 5);
  m.set(0, 0, true);
  m.set(2, 4, true);
  io::save_mask(m, dir / "m.stn");
  EXPECT_EQ(io::load_mask(dir / "m.stn"), m);
}

TEST(TensorIO, AtomicWriteLeavesNoTemp) {
  auto dir = test::scratch_dir("tio_atomic");
  io::atomic_write(dir / "a.bin", "hello");
  EXPECT_EQ(bytes_of(dir / "a.bin"), "hello");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.bin.tmp"));
  EXPECT_THROW(io::atomic_write(dir / "missing" / "a.bin", "x"), Error);
}

TEST(Pnm, DecodeGradientAndPixel) {
  const std::string p5 = std::string("P5\n2 2\n255\n") + std::string("\x00\x55\xaa\xff", 4);
  const auto g = io::decode_pnm(p5);
  ASSERT_EQ(g.channels(), 1u);
  EXPECT_EQ(g(0, 0), 0);
  EXPECT_EQ(g(0, 1), 85);
  EXPECT_EQ(g(1, 0), 170);
  EXPECT_EQ(g(1, 1), 255);

  const auto rgb = io::decode_pnm(std::string("P6 1 1 255\n\x01\x02\x03"));
  ASSERT_EQ(rgb.channels(), 3u);
  EXPECT_EQ(rgb(0, 0, 0), 1);
  EXPECT_EQ(rgb(0, 0, 1), 2);
  EXPECT_EQ(rgb(0, 0, 2), 3);
}

TEST(Pnm, CommentsAndErrors) {
  const auto g = io::decode_pnm(std::string("P5\n# note\n1 1\n# more\n255\n\x07"));
  EXPECT_EQ(g[0], 7);
  auto msg = [](const std::string& s) {
    try {
      io::decode_pnm(s);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(msg("P2\n1 1\n255\n7\n"), "only binary PGM/PPM");
  EXPECT_EQ(msg("P3\n1 1\n255\n1 2 3\n"), "only binary PGM/PPM");
  EXPECT_EQ(msg(std::string("P5\n1 1\n65535\n\0\0", 14)), "maxval must be 255");
  EXPECT_EQ(msg("P5\n2 1\n255\nx"), "payload length mismatch");
  EXPECT_EQ(msg("P7\n1 1\n255\nx"), "malformed header");
}

TEST(Pnm, RandomRoundTripAndChannelOrder) {
  std::mt19937_64 rng(7);
  auto dir = test::scratch_dir("pnm_prop");
  std::uniform_int_distribution<std::size_t> dim(1, 23);
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 1);
  for (int i = 0; i < 40; ++i) {
    ByteImage img(dim(rng), dim(rng), coin(rng) ? 3 : 1);
    for (auto& v : img) v = static_cast<std::uint8_t>(byte(rng));
    io::write_pgm_ppm(img, dir / "x.pnm");
    EXPECT_EQ(io::read_pgm_ppm(dir / "x.pnm"), img);
  }
  ByteImage px(1, 1, 3);
  px(0, 0, 0) = 10, px(0, 0, 1) = 20, px(0, 0, 2) = 30;
  const std::string enc = io::encode_pnm(px);
  EXPECT_EQ(enc, std::string("P6\n1 1\n255\n\x0a\x14\x1e"));
}

TEST(Conversions, UnitFloatAndBack) {
  ByteImage b(1, 3, 1, {0, 128, 255});
  const auto f = to_unit_float(b);
  EXPECT_FLOAT_EQ(f[0], 0.f);
  EXPECT_FLOAT_EQ(f[1], 128.f / 255.f);
  EXPECT_FLOAT_EQ(f[2], 1.f);
  EXPECT_EQ(to_bytes(f), b);
}
