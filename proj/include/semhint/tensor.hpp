#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace semhint {

/// Every library failure (bad shapes, malformed files, violated preconditions)
/// surfaces as this exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType { f32, u8, i32 };

inline const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::u8: return "u8";
    case DType::i32: return "i32";
  }
  return "?";
}

template <class T> struct dtype_of;
template <> struct dtype_of<float> { static constexpr DType value = DType::f32; };
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::u8; };
template <> struct dtype_of<std::int32_t> { static constexpr DType value = DType::i32; };

namespace detail {

inline void check_shape(std::size_t h, std::size_t w, std::size_t c) {
  if (h == 0 || w == 0 || c == 0) throw Error("degenerate shape rejected");
}

}  // namespace detail

/// Dense H x W x C array, row-major with interleaved channels:
/// index(r, c, ch) = (r * width + c) * channels + ch.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor(std::size_t height, std::size_t width, std::size_t channels = 1, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    detail::check_shape(height, width, channels);
    data_.assign(height * width * channels, fill);
  }

  Tensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    detail::check_shape(height, width, channels);
    if (data_.size() != height * width * channels) throw Error("payload length mismatch");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t r, std::size_t c, std::size_t ch = 0) const noexcept {
    return (r * width_ + c) * channels_ + ch;
  }

  T& operator()(std::size_t r, std::size_t c, std::size_t ch = 0) noexcept { return data_[index(r, c, ch)]; }
  const T& operator()(std::size_t r, std::size_t c, std::size_t ch = 0) const noexcept {
    return data_[index(r, c, ch)];
  }

  T& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    if (r >= height_ || c >= width_ || ch >= channels_) throw Error("tensor index out of range");
    return (*this)(r, c, ch);
  }
  const T& at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    if (r >= height_ || c >= width_ || ch >= channels_) throw Error("tensor index out of range");
    return (*this)(r, c, ch);
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vector() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <class U>
  bool same_plane(const Tensor<U>& o) const noexcept {
    return height_ == o.height() && width_ == o.width();
  }
  template <class U>
  bool same_shape(const Tensor<U>& o) const noexcept {
    return same_plane(o) && channels_ == o.channels();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<T> data_;
};

using Image = Tensor<float>;
using DepthMap = Tensor<float>;
using DisparityMap = Tensor<float>;
using ProbMap = Tensor<float>;
using LabelMap = Tensor<std::int32_t>;
using ByteImage = Tensor<std::uint8_t>;

using AnyTensor = std::variant<Tensor<float>, Tensor<std::uint8_t>, Tensor<std::int32_t>>;

/// One flag per pixel; marks which samples of a same-sized tensor carry evidence.
class Mask {
 public:
  Mask(std::size_t height, std::size_t width, bool fill = false)
      : height_(height), width_(width) {
    detail::check_shape(height, width, 1);
    bits_.assign(height * width, fill ? 1 : 0);
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return bits_.size(); }

  bool operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * width_ + c] != 0; }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t r, std::size_t c, bool v) noexcept { bits_[r * width_ + c] = v ? 1 : 0; }
  void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool any() const noexcept { return count() > 0; }

  template <class T>
  bool matches(const Tensor<T>& t) const noexcept {
    return height_ == t.height() && width_ == t.width();
  }
  bool same_shape(const Mask& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  Mask& operator&=(const Mask& o) {
    if (!same_shape(o)) throw Error("mask shape mismatch");
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= o.bits_[i];
    return *this;
  }
  friend Mask operator&(Mask a, const Mask& b) { return a &= b; }
  Mask operator~() const {
    Mask out(*this);
    for (auto& b : out.bits_) b ^= 1;
    return out;
  }

  friend bool operator==(const Mask& a, const Mask& b) = default;

  /// 0/1 u8 tensor, the on-disk representation of masks.
  ByteImage to_tensor() const { return ByteImage(height_, width_, 1, bits_); }

  static Mask from_tensor(const ByteImage& t) {
    if (t.channels() != 1) throw Error("mask tensor must have one channel");
    Mask m(t.height(), t.width());
    for (std::size_t i = 0; i < t.size(); ++i) m.bits_[i] = t[i] != 0 ? 1 : 0;
    return m;
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint8_t> bits_;
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  std::transform(src.begin(), src.end(), out.begin(), [](From v) { return static_cast<To>(v); });
  return Tensor<To>(src.height(), src.width(), src.channels(), std::move(out));
}

/// u8 [0,255] -> f32 [0,1].
inline Image to_unit_float(const ByteImage& src) {
  std::vector<float> out(src.size());
  std::transform(src.begin(), src.end(), out.begin(), [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return Image(src.height(), src.width(), src.channels(), std::move(out));
}

/// f32 [0,1] -> u8, clamped and rounded.
template <class T>
ByteImage to_bytes(const Tensor<T>& src) {
  std::vector<std::uint8_t> out(src.size());
  std::transform(src.begin(), src.end(), out.begin(), [](T v) {
    const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0 + 0.5;
    return static_cast<std::uint8_t>(s);
  });
  return ByteImage(src.height(), src.width(), src.channels(), std::move(out));
}

template <class T, class U>
void require_same_plane(const Tensor<T>& a, const Tensor<U>& b, const char* what) {
  if (!a.same_plane(b)) throw Error(std::string("shape mismatch: ") + what);
}

template <class T>
void require_mask(const Mask& m, const Tensor<T>& t, const char* what) {
  if (!m.matches(t)) throw Error(std::string("shape mismatch: ") + what);
}

}  // namespace semhint
