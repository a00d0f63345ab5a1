#pragma once

// STN1 tensor container and binary PGM/PPM codecs.
//
// STN1 layout: one ASCII line "STN1 <dtype> <H> <W> <C>\n" followed by the
// raw payload, little-endian, row-major with interleaved channels.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "semhint/tensor.hpp"

namespace semhint::io {

namespace detail {

template <class T>
T byteswap(T v) noexcept {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <class T>
void append_le(std::string& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    std::memcpy(out.data() + start, values.data(), values.size() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T v = byteswap(values[i]);
      std::memcpy(out.data() + start + i * sizeof(T), &v, sizeof(T));
    }
  }
}

template <class T>
std::vector<T> read_le(std::string_view bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
    for (auto& v : out) v = byteswap(v);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::size_t parse_dim(std::string_view tok) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw Error("malformed header");
  return v;
}

}  // namespace detail

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// failed write never leaves a truncated artifact behind.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot write " + path.string() + ": " + ec.message());
  }
}

template <class T>
std::string encode_tensor(const Tensor<T>& t) {
  std::ostringstream header;
  header << "STN1 " << dtype_name(dtype_of<T>::value) << ' ' << t.height() << ' ' << t.width() << ' '
         << t.channels() << '\n';
  std::string out = header.str();
  detail::append_le<T>(out, t.data());
  return out;
}

inline AnyTensor decode_tensor(std::string_view bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos || eol > 128) throw Error("malformed header");
  const std::string_view line = bytes.substr(0, eol);

  std::vector<std::string_view> tok;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const auto next = line.find(' ', pos);
    const auto end = next == std::string_view::npos ? line.size() : next;
    tok.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
  if (tok.size() != 5 || tok[0] != "STN1") throw Error("malformed header");

  const std::size_t h = detail::parse_dim(tok[2]);
  const std::size_t w = detail::parse_dim(tok[3]);
  const std::size_t c = detail::parse_dim(tok[4]);
  semhint::detail::check_shape(h, w, c);

  const std::string_view payload = bytes.substr(eol + 1);
  auto decode = [&]<class T>(std::type_identity<T>) -> AnyTensor {
    if (payload.size() != h * w * c * sizeof(T)) throw Error("payload length mismatch");
    return Tensor<T>(h, w, c, detail::read_le<T>(payload));
  };
  if (tok[1] == "f32") return decode(std::type_identity<float>{});
  if (tok[1] == "u8") return decode(std::type_identity<std::uint8_t>{});
  if (tok[1] == "i32") return decode(std::type_identity<std::int32_t>{});
  throw Error("unsupported dtype");
}

template <class T>
void save_tensor(const Tensor<T>& t, const std::filesystem::path& path) {
  atomic_write(path, encode_tensor(t));
}

inline void save_mask(const Mask& m, const std::filesystem::path& path) { save_tensor(m.to_tensor(), path); }

inline AnyTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_file(path)); }

/// Loads and insists on a particular element type.
template <class T>
Tensor<T> load_tensor_as(const std::filesystem::path& path) {
  AnyTensor any = load_tensor(path);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  const DType got = std::visit([]<class U>(const Tensor<U>&) { return dtype_of<U>::value; }, any);
  throw Error(std::string("dtype mismatch in ") + path.string() + ": expected " +
              dtype_name(dtype_of<T>::value) + ", got " + dtype_name(got));
}

inline Mask load_mask(const std::filesystem::path& path) { return Mask::from_tensor(load_tensor_as<std::uint8_t>(path)); }

// ---------------------------------------------------------------------------
// PGM / PPM (binary only, maxval 255)

inline std::string encode_pnm(const ByteImage& img) {
  if (img.channels() != 1 && img.channels() != 3) throw Error("PGM/PPM needs 1 or 3 channels");
  std::ostringstream header;
  header << (img.channels() == 1 ? "P5" : "P6") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  std::string out = header.str();
  out.append(reinterpret_cast<const char*>(img.data().data()), img.size());
  return out;
}

inline ByteImage decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw Error("malformed header");
  const char kind = bytes[1];
  if (kind >= '1' && kind <= '4') throw Error("only binary PGM/PPM");
  if (kind != '5' && kind != '6') throw Error("malformed header");
  const std::size_t channels = kind == '5' ? 1 : 3;

  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') ++pos;
    if (pos == start) throw Error("malformed header");
    return detail::parse_dim(bytes.substr(start, pos - start));
  };
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw Error("maxval must be 255");
  if (pos >= bytes.size()) throw Error("payload length mismatch");
  ++pos;  // exactly one whitespace byte separates header and raster

  semhint::detail::check_shape(h, w, channels);
  const std::string_view payload = bytes.substr(pos);
  if (payload.size() != h * w * channels) throw Error("payload length mismatch");
  std::vector<std::uint8_t> data(payload.begin(), payload.end());
  return ByteImage(h, w, channels, std::move(data));
}

inline ByteImage read_pgm_ppm(const std::filesystem::path& path) { return decode_pnm(detail::read_file(path)); }

inline void write_pgm_ppm(const ByteImage& img, const std::filesystem::path& path) {
  atomic_write(path, encode_pnm(img));
}

/// Min-max normalized 8-bit preview of a single-channel float map.
inline ByteImage preview(const Tensor<float>& t) {
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  const float span = *hi - *lo;
  ByteImage out(t.height(), t.width(), t.channels());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = span > 0 ? (t[i] - *lo) / span : 0.0f;
    out[i] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
  }
  return out;
}

}  // namespace semhint::io
