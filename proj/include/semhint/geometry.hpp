#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semhint/tensor.hpp"
#include "semhint/tensor_io.hpp"

namespace semhint::geometry {

/// Pinhole intrinsics in pixels.
struct Camera {
  double fx, fy, cx, cy;

  Camera(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (!(fx > 0) || !(fy > 0)) throw Error("camera focal lengths must be positive");
  }

  friend bool operator==(const Camera&, const Camera&) = default;
};

/// Rigid transform mapping target-camera points into the source camera.
class Pose {
 public:
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    constexpr double kTol = 1e-6;
    if (!rotation_.allFinite() || !translation_.allFinite()) throw Error("pose must be finite");
    if (((rotation_.transpose() * rotation_) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kTol)
      throw Error("pose rotation is not orthonormal");
    if (std::abs(rotation_.determinant() - 1.0) > kTol) throw Error("pose rotation must have determinant +1");
  }

  static Pose identity() { return {Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()}; }

  /// Rectified stereo: source camera sits `baseline` meters to the right of the target.
  static Pose stereo(double baseline) { return {Eigen::Matrix3d::Identity(), Eigen::Vector3d(-baseline, 0, 0)}; }

  const Eigen::Matrix3d& rotation() const noexcept { return rotation_; }
  const Eigen::Vector3d& translation() const noexcept { return translation_; }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Coefficients of depth = 1 / (c1 * disparity + c2).
struct DepthParams {
  double c1, c2;

  DepthParams(double c1_, double c2_) : c1(c1_), c2(c2_) {
    if (!(c1 > 0) || !(c2 > 0)) throw Error("depth params must be positive");
  }
};

template <std::floating_point T>
Tensor<T> disparity_to_depth(const Tensor<T>& disparity, const DepthParams& p) {
  Tensor<T> depth(disparity.height(), disparity.width(), disparity.channels());
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const T s = disparity[i];
    if (!(s >= T(0) && s <= T(1))) throw Error("disparity outside [0,1]");
    depth[i] = static_cast<T>(1.0 / (p.c1 * static_cast<double>(s) + p.c2));
  }
  return depth;
}

/// Per-pixel (u, v) source coordinates stored as a 2-channel tensor, plus
/// the pixels whose sample has photometric support.
template <std::floating_point T>
struct Projection {
  Tensor<T> coords;
  Mask valid;
};

template <std::floating_point T>
struct Sampled {
  Tensor<T> values;
  Mask valid;
};

namespace detail {
// Slack for projections that land a rounding error outside the frame.
inline constexpr double kFrameSlack = 1e-4;

inline bool inside(double u, double v, std::size_t h, std::size_t w) {
  return std::isfinite(u) && std::isfinite(v) && u >= -kFrameSlack && v >= -kFrameSlack &&
         u <= static_cast<double>(w - 1) + kFrameSlack && v <= static_cast<double>(h - 1) + kFrameSlack;
}
}  // namespace detail

/// Back-projects every target pixel with its depth, moves it by `pose` and
/// projects into a source frame of size src_height x src_width.
template <std::floating_point T>
Projection<T> project(const Tensor<T>& depth, const Pose& pose, const Camera& k_src, const Camera& k_tgt,
                      std::size_t src_height, std::size_t src_width) {
  if (depth.channels() != 1) throw Error("depth must have one channel");
  Projection<T> out{Tensor<T>(depth.height(), depth.width(), 2), Mask(depth.height(), depth.width())};
  const Eigen::Matrix3d& R = pose.rotation();
  const Eigen::Vector3d& t = pose.translation();
  for (std::size_t r = 0; r < depth.height(); ++r) {
    for (std::size_t c = 0; c < depth.width(); ++c) {
      const double z = depth(r, c);
      if (!(z > 0) || !std::isfinite(z)) throw Error("non-positive input depth");
      const Eigen::Vector3d p((static_cast<double>(c) - k_tgt.cx) / k_tgt.fx * z,
                              (static_cast<double>(r) - k_tgt.cy) / k_tgt.fy * z, z);
      const Eigen::Vector3d q = R * p + t;
      double u = 0, v = 0;
      bool ok = q.z() > 0;
      if (ok) {
        u = k_src.fx * q.x() / q.z() + k_src.cx;
        v = k_src.fy * q.y() / q.z() + k_src.cy;
        ok = detail::inside(u, v, src_height, src_width);
      }
      out.coords(r, c, 0) = static_cast<T>(u);
      out.coords(r, c, 1) = static_cast<T>(v);
      out.valid.set(r, c, ok);
    }
  }
  return out;
}

template <std::floating_point T>
Projection<T> project(const Tensor<T>& depth, const Pose& pose, const Camera& k_src, const Camera& k_tgt) {
  return project(depth, pose, k_src, k_tgt, depth.height(), depth.width());
}

/// Blends the four source pixels around each (u, v). Samples outside the
/// frame are masked out and set to zero rather than clamped.
template <std::floating_point T>
Sampled<T> bilinear_sample(const Tensor<T>& src, const Tensor<T>& coords) {
  if (coords.channels() != 2) throw Error("sample coordinates need two channels");
  const std::size_t h = src.height(), w = src.width(), ch = src.channels();
  Sampled<T> out{Tensor<T>(coords.height(), coords.width(), ch, T(0)), Mask(coords.height(), coords.width())};
  for (std::size_t r = 0; r < coords.height(); ++r) {
    for (std::size_t c = 0; c < coords.width(); ++c) {
      double u = coords(r, c, 0);
      double v = coords(r, c, 1);
      if (!detail::inside(u, v, h, w)) continue;
      u = std::clamp(u, 0.0, static_cast<double>(w - 1));
      v = std::clamp(v, 0.0, static_cast<double>(h - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(u));
      const auto y0 = static_cast<std::size_t>(std::floor(v));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double ax = u - static_cast<double>(x0);
      const double ay = v - static_cast<double>(y0);
      for (std::size_t k = 0; k < ch; ++k) {
        const double top = (1 - ax) * src(y0, x0, k) + ax * src(y0, x1, k);
        const double bottom = (1 - ax) * src(y1, x0, k) + ax * src(y1, x1, k);
        out.values(r, c, k) = static_cast<T>((1 - ay) * top + ay * bottom);
      }
      out.valid.set(r, c, true);
    }
  }
  return out;
}

/// Synthesizes the target view from the source image and target depth.
template <std::floating_point T>
Sampled<T> warp(const Tensor<T>& source, const Tensor<T>& target_depth, const Pose& pose, const Camera& k_src,
                const Camera& k_tgt) {
  require_same_plane(source, target_depth, "warp source vs depth");
  auto proj = project(target_depth, pose, k_src, k_tgt, source.height(), source.width());
  auto sampled = bilinear_sample(source, proj.coords);
  sampled.valid &= proj.valid;
  return sampled;
}

template <std::floating_point T>
Sampled<T> warp(const Tensor<T>& source, const Tensor<T>& target_depth, const Pose& pose, const Camera& k) {
  return warp(source, target_depth, pose, k, k);
}

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& t) {
  Tensor<T> out(t.height(), t.width(), t.channels());
  for (std::size_t r = 0; r < t.height(); ++r)
    for (std::size_t c = 0; c < t.width(); ++c)
      for (std::size_t k = 0; k < t.channels(); ++k) out(r, c, k) = t(r, t.width() - 1 - c, k);
  return out;
}

/// Weight placed on the mirrored prediction at column `col`: 1 at the left
/// border, falling linearly to 0 across the first 5% of the width.
inline double flip_border_weight(std::size_t col, std::size_t width) {
  const double x = width > 1 ? static_cast<double>(col) / static_cast<double>(width - 1) : 0.0;
  return 1.0 - std::clamp(20.0 * (x - 0.05), 0.0, 1.0);
}

/// Merges a prediction with the un-mirrored prediction of the mirrored
/// input. Each lateral border takes the estimate that saw it with context;
/// the interior gets the mean.
template <std::floating_point T>
Tensor<T> flip_postprocess(const Tensor<T>& pred, const Tensor<T>& pred_of_flipped) {
  if (!pred.same_shape(pred_of_flipped)) throw Error("shape mismatch: flip post-processing inputs");
  const Tensor<T> mirrored = flip_horizontal(pred_of_flipped);
  const std::size_t w = pred.width();
  Tensor<T> out(pred.height(), w, pred.channels());
  for (std::size_t r = 0; r < pred.height(); ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double wl = flip_border_weight(c, w);
      const double wr = flip_border_weight(w - 1 - c, w);
      for (std::size_t k = 0; k < pred.channels(); ++k) {
        const double a = pred(r, c, k);
        const double b = mirrored(r, c, k);
        out(r, c, k) = static_cast<T>(wr * a + wl * b + (1.0 - wl - wr) * 0.5 * (a + b));
      }
    }
  }
  return out;
}

/// Bilinear resize with half-pixel centers (align_corners = false).
template <std::floating_point T>
Tensor<T> resize_bilinear(const Tensor<T>& src, std::size_t height, std::size_t width) {
  Tensor<T> out(height, width, src.channels());
  const double sy = static_cast<double>(src.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(src.width()) / static_cast<double>(width);
  for (std::size_t r = 0; r < height; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, src.height() - 1);
    const double ay = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, src.width() - 1);
      const double ax = x - static_cast<double>(x0);
      for (std::size_t k = 0; k < src.channels(); ++k) {
        const double top = (1 - ax) * src(y0, x0, k) + ax * src(y0, x1, k);
        const double bottom = (1 - ax) * src(y1, x0, k) + ax * src(y1, x1, k);
        out(r, c, k) = static_cast<T>((1 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

/// 2x2 box average; dimensions must be even.
template <std::floating_point T>
Tensor<T> downsample_area_2x(const Tensor<T>& src) {
  if (src.height() % 2 != 0 || src.width() % 2 != 0) throw Error("downsample needs even dimensions");
  Tensor<T> out(src.height() / 2, src.width() / 2, src.channels());
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c)
      for (std::size_t k = 0; k < src.channels(); ++k)
        out(r, c, k) = static_cast<T>(0.25 * (static_cast<double>(src(2 * r, 2 * c, k)) + src(2 * r, 2 * c + 1, k) +
                                              src(2 * r + 1, 2 * c, k) + src(2 * r + 1, 2 * c + 1, k)));
  return out;
}

// ---------------------------------------------------------------------------
// Rig config: "fx fy cx cy" followed by 12 numbers, the row-major 3x4 [R | t].
// '#' starts a comment.

struct Rig {
  Camera camera;
  Pose pose;
};

inline Rig parse_rig(std::istream& in) {
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error("rig config: not a number: " + tok);
      }
    }
  }
  if (v.size() != 16) throw Error("rig config needs 16 numbers (fx fy cx cy + 3x4 pose), got " + std::to_string(v.size()));
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) R(i, j) = v[4 + 4 * i + j];
    t(i) = v[4 + 4 * i + 3];
  }
  return {Camera(v[0], v[1], v[2], v[3]), Pose(R, t)};
}

inline Rig read_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_rig(in);
}

inline std::string format_rig(const Camera& k, const Pose& pose) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << '\n';
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) os << pose.rotation()(i, j) << ' ';
    os << pose.translation()(i) << '\n';
  }
  return os.str();
}

}  // namespace semhint::geometry
