#pragma once

// Self-supervised depth and pseudo-label segmentation losses. Every per-pixel
// loss reduces by the mean over valid pixels; accumulation is in double.

#include <array>
#include <cmath>
#include <concepts>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>

#include "semhint/geometry.hpp"
#include "semhint/tensor.hpp"

namespace semhint::losses {

/// Local statistics use a window x window box filter with reflection padding.
struct SsimParams {
  int window = 3;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;

  void validate() const {
    if (window < 3 || window % 2 == 0) throw Error("SSIM window must be odd and >= 3");
    if (!(c1 > 0) || !(c2 > 0)) throw Error("SSIM constants must be positive");
  }
};

/// Loss weights. Defaults are the first (pseudo-label free) training phase.
struct LossWeights {
  double beta1 = 1.0;          // depth branch
  double beta2 = 1.0;          // segmentation branch
  double lambda_pe = 1.0;      // photometric
  double lambda_h = 1.0;       // stereo depth hints
  double lambda_rfd = 0.0;     // refined-depth hints
  double lambda_s = 0.0;       // edge-aware smoothness
  double lambda_ps = 1.0;      // pseudo-label cross-entropy
  double lambda_rfs = 0.0;     // refined-label cross-entropy
  double gamma = 0.85;         // SSIM vs L1 blend
  double alpha = 0.5;          // shared-parameter gradient split

  void validate() const {
    for (double v : {beta1, beta2, lambda_pe, lambda_h, lambda_rfd, lambda_s, lambda_ps, lambda_rfs})
      if (!(v >= 0) || !std::isfinite(v)) throw Error("loss weights must be finite and >= 0");
    if (!(gamma >= 0 && gamma <= 1)) throw Error("gamma must lie in [0,1]");
    if (!(alpha >= 0 && alpha <= 1)) throw Error("alpha must lie in [0,1]");
  }

  static LossWeights phase1() { return {}; }

  /// Fine-tuning phase: refined-depth and refined-label terms switched on.
  static LossWeights phase2() {
    LossWeights w;
    w.lambda_rfd = 1.0;
    w.lambda_rfs = 1.0;
    return w;
  }

  /// Flat `key = value` lines, '#' comments. Unlisted keys keep defaults.
  static LossWeights parse(std::istream& in) {
    LossWeights w;
    const std::map<std::string, double LossWeights::*> keys = {
        {"beta1", &LossWeights::beta1},         {"beta2", &LossWeights::beta2},
        {"lambda_pe", &LossWeights::lambda_pe}, {"lambda_h", &LossWeights::lambda_h},
        {"lambda_rfd", &LossWeights::lambda_rfd}, {"lambda_s", &LossWeights::lambda_s},
        {"lambda_ps", &LossWeights::lambda_ps}, {"lambda_rfs", &LossWeights::lambda_rfs},
        {"gamma", &LossWeights::gamma},         {"alpha", &LossWeights::alpha}};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      std::istringstream probe(line);
      std::string any;
      if (!(probe >> any)) continue;
      if (eq == std::string::npos) throw Error("weights line " + std::to_string(lineno) + ": expected key = value");
      std::istringstream ks(line.substr(0, eq)), vs(line.substr(eq + 1));
      std::string key, rest;
      double value = 0;
      if (!(ks >> key) || !(vs >> value) || (vs >> rest)) throw Error("weights line " + std::to_string(lineno) + ": malformed");
      const auto it = keys.find(key);
      if (it == keys.end()) throw Error("unknown weight key: " + key);
      w.*(it->second) = value;
    }
    w.validate();
    return w;
  }
};

namespace detail {

inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
  return static_cast<std::size_t>(i);
}

template <class T>
void require_valid_pixels(const std::optional<Mask>& mask, const Tensor<T>& t) {
  if (mask) {
    require_mask(*mask, t, "loss mask");
    if (!mask->any()) throw Error("no valid pixels under mask");
  }
}

inline bool on(const std::optional<Mask>& mask, std::size_t i) { return !mask || (*mask)[i]; }

/// Local box-filter statistics of one channel pair at one pixel.
struct LocalStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

template <class T>
LocalStats local_stats(const Tensor<T>& a, const Tensor<T>& b, std::size_t r, std::size_t c, std::size_t k, int window) {
  const int half = window / 2;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -half; dy <= half; ++dy) {
    const std::size_t y = reflect(static_cast<std::ptrdiff_t>(r) + dy, a.height());
    for (int dx = -half; dx <= half; ++dx) {
      const std::size_t x = reflect(static_cast<std::ptrdiff_t>(c) + dx, a.width());
      const double va = a(y, x, k), vb = b(y, x, k);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  }
  const double n = static_cast<double>(window * window);
  LocalStats s{sa / n, sb / n, 0, 0, 0};
  s.var_a = saa / n - s.mu_a * s.mu_a;
  s.var_b = sbb / n - s.mu_b * s.mu_b;
  s.cov = sab / n - s.mu_a * s.mu_b;
  return s;
}

inline double ssim_from(const LocalStats& s, const SsimParams& p) {
  const double num = (2 * s.mu_a * s.mu_b + p.c1) * (2 * s.cov + p.c2);
  const double den = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1) * (s.var_a + s.var_b + p.c2);
  return num / den;
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> ssim_map(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& p = {}) {
  p.validate();
  if (!a.same_shape(b)) throw Error("shape mismatch: SSIM inputs");
  Tensor<T> out(a.height(), a.width(), a.channels());
  for (std::size_t r = 0; r < a.height(); ++r)
    for (std::size_t c = 0; c < a.width(); ++c)
      for (std::size_t k = 0; k < a.channels(); ++k)
        out(r, c, k) = static_cast<T>(detail::ssim_from(detail::local_stats(a, b, r, c, k, p.window), p));
  return out;
}

/// gamma/2 * (1 - SSIM) + (1 - gamma) * |target - warped|, channel-averaged
/// per pixel, then averaged over the mask.
template <std::floating_point T>
T photometric_loss(const Tensor<T>& target, const Tensor<T>& warped, const std::optional<Mask>& mask, double gamma,
                   const SsimParams& p = {}) {
  if (!target.same_shape(warped)) throw Error("shape mismatch: photometric inputs");
  if (!(gamma >= 0 && gamma <= 1)) throw Error("gamma must lie in [0,1]");
  detail::require_valid_pixels(mask, target);
  p.validate();
  const std::size_t ch = target.channels();
  double total = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < target.height(); ++r) {
    for (std::size_t c = 0; c < target.width(); ++c) {
      if (!detail::on(mask, r * target.width() + c)) continue;
      double px = 0;
      for (std::size_t k = 0; k < ch; ++k) {
        const double l1 = std::abs(static_cast<double>(target(r, c, k)) - warped(r, c, k));
        double dssim = 0;
        if (gamma > 0) dssim = 1.0 - detail::ssim_from(detail::local_stats(target, warped, r, c, k, p.window), p);
        px += 0.5 * gamma * dssim + (1.0 - gamma) * l1;
      }
      total += px / static_cast<double>(ch);
      ++n;
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <std::floating_point T>
T photometric_loss(const Tensor<T>& target, const Tensor<T>& warped, const std::optional<Mask>& mask,
                   const LossWeights& w, const SsimParams& p = {}) {
  return photometric_loss(target, warped, mask, w.gamma, p);
}

/// mean log(1 + |pred - target|). Serves both the stereo hint term and the
/// refined-depth term; only the target differs.
template <std::floating_point T>
T hint_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::optional<Mask>& mask = std::nullopt) {
  if (!pred.same_shape(target) || pred.channels() != 1) throw Error("shape mismatch: hint loss inputs");
  detail::require_valid_pixels(mask, pred);
  double total = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!detail::on(mask, i)) continue;
    if (!(pred[i] > 0) || !(target[i] > 0)) throw Error("non-positive depth");
    total += std::log1p(std::abs(static_cast<double>(pred[i]) - target[i]));
    ++n;
  }
  return static_cast<T>(total / static_cast<double>(n));
}

/// Edge-aware smoothness on mean-normalized disparity with forward
/// differences; the x and y terms are each averaged over their own support.
template <std::floating_point T>
T smoothness_loss(const Tensor<T>& disparity, const Tensor<T>& image) {
  if (!disparity.same_plane(image) || disparity.channels() != 1) throw Error("shape mismatch: smoothness inputs");
  double mean = 0;
  for (T v : disparity) mean += v;
  mean /= static_cast<double>(disparity.size());
  if (!(mean > 0)) throw Error("zero-mean disparity");

  const std::size_t h = image.height(), w = image.width(), ch = image.channels();
  auto img_grad = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
    double g = 0;
    for (std::size_t k = 0; k < ch; ++k) g += std::abs(static_cast<double>(image(r1, c1, k)) - image(r0, c0, k));
    return g / static_cast<double>(ch);
  };
  double lx = 0, ly = 0;
  if (w > 1) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c)
        lx += std::abs((static_cast<double>(disparity(r, c + 1)) - disparity(r, c)) / mean) * std::exp(-img_grad(r, c, r, c + 1));
    lx /= static_cast<double>(h * (w - 1));
  }
  if (h > 1) {
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        ly += std::abs((static_cast<double>(disparity(r + 1, c)) - disparity(r, c)) / mean) * std::exp(-img_grad(r, c, r + 1, c));
    ly /= static_cast<double>((h - 1) * w);
  }
  return static_cast<T>(lx + ly);
}

/// Floor applied inside the log of the cross-entropy.
inline constexpr double kProbFloor = 1e-7;

namespace detail {

template <class T>
void check_probabilities(const Tensor<T>& probs) {
  for (std::size_t i = 0; i < probs.pixels(); ++i) {
    double sum = 0;
    for (std::size_t k = 0; k < probs.channels(); ++k) {
      const double v = probs[i * probs.channels() + k];
      if (!(v >= 0) || !std::isfinite(v)) throw Error("probabilities must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-5) throw Error("prediction is not normalized");
  }
}

}  // namespace detail

/// -(1/N) sum_i sum_k y_ik log(p_ik) with one-hot targets from class ids.
template <std::floating_point T>
T cross_entropy(const LabelMap& target, const Tensor<T>& probs) {
  if (!target.same_plane(probs) || target.channels() != 1) throw Error("shape mismatch: cross-entropy inputs");
  detail::check_probabilities(probs);
  const auto classes = static_cast<std::int32_t>(probs.channels());
  double total = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::int32_t y = target[i];
    if (y < 0 || y >= classes) throw Error("label " + std::to_string(y) + " outside class range");
    total -= std::log(std::max<double>(probs[i * probs.channels() + static_cast<std::size_t>(y)], kProbFloor));
  }
  return static_cast<T>(total / static_cast<double>(target.size()));
}

/// Soft-target variant; `target` holds a distribution per pixel.
template <std::floating_point T>
T cross_entropy(const Tensor<T>& target, const Tensor<T>& probs) {
  if (!target.same_shape(probs)) throw Error("shape mismatch: cross-entropy inputs");
  detail::check_probabilities(probs);
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (target[i] != 0) total -= target[i] * std::log(std::max<double>(probs[i], kProbFloor));
  return static_cast<T>(total / static_cast<double>(probs.pixels()));
}

struct DepthTerms {
  double photometric = 0, hint = 0, refined_depth = 0, smoothness = 0;
};
struct SegTerms {
  double pseudo = 0, refined = 0;
};

inline double total_depth_loss(const DepthTerms& t, const LossWeights& w) {
  return w.lambda_pe * t.photometric + w.lambda_h * t.hint + w.lambda_rfd * t.refined_depth + w.lambda_s * t.smoothness;
}

inline double total_seg_loss(const SegTerms& t, const LossWeights& w) {
  return w.lambda_ps * t.pseudo + w.lambda_rfs * t.refined;
}

inline double total_loss(double depth_loss, double seg_loss, const LossWeights& w) {
  return w.beta1 * depth_loss + w.beta2 * seg_loss;
}

inline double total_loss(const DepthTerms& d, const SegTerms& s, const LossWeights& w) {
  return total_loss(total_depth_loss(d, w), total_seg_loss(s, w), w);
}

/// Photometric loss of each of the four disparity scales (1, 1/2, 1/4, 1/8).
/// Coarse disparities are bilinearly upsampled to full resolution before
/// conversion to depth and warping.
template <std::floating_point T>
std::array<T, 4> multiscale_photometric_terms(std::span<const Tensor<T>> disparities, const Tensor<T>& target,
                                              const Tensor<T>& source, const geometry::Pose& pose,
                                              const geometry::Camera& k, const geometry::DepthParams& dp, double gamma,
                                              const SsimParams& p = {}) {
  if (disparities.size() != 4) throw Error("multi-scale loss needs exactly 4 disparity maps");
  if (!target.same_shape(source)) throw Error("shape mismatch: target vs source");
  const std::size_t h = target.height(), w = target.width();
  std::array<T, 4> terms{};
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& disp = disparities[s];
    if (disp.height() * (std::size_t{1} << s) != h || disp.width() * (std::size_t{1} << s) != w || disp.channels() != 1)
      throw Error("disparity scale " + std::to_string(s) + " has wrong shape");
    const Tensor<T> full = s == 0 ? disp : geometry::resize_bilinear(disp, h, w);
    const auto depth = geometry::disparity_to_depth(full, dp);
    const auto warped = geometry::warp(source, depth, pose, k);
    if (!warped.valid.any()) throw Error("no valid pixels under mask");
    terms[s] = photometric_loss(target, warped.values, warped.valid, gamma, p);
  }
  return terms;
}

template <std::floating_point T>
T multiscale_photometric(std::span<const Tensor<T>> disparities, const Tensor<T>& target, const Tensor<T>& source,
                         const geometry::Pose& pose, const geometry::Camera& k, const geometry::DepthParams& dp,
                         double gamma, const SsimParams& p = {}) {
  const auto terms = multiscale_photometric_terms(disparities, target, source, pose, k, dp, gamma, p);
  double sum = 0;
  for (T t : terms) sum += t;
  return static_cast<T>(sum / 4.0);
}

/// Gradient arriving at a shared parameter: alpha * (from depth losses) +
/// (1 - alpha) * (from segmentation losses). Forward activations are not
/// touched; only the backward signal is reweighted.
template <std::floating_point T>
Tensor<T> combine_shared_gradients(const Tensor<T>& g_depth, const Tensor<T>& g_seg, double alpha) {
  if (!g_depth.same_shape(g_seg)) throw Error("shape mismatch: gradient tensors");
  if (!(alpha >= 0 && alpha <= 1)) throw Error("alpha must lie in [0,1]");
  Tensor<T> out(g_depth.height(), g_depth.width(), g_depth.channels());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(alpha * static_cast<double>(g_depth[i]) + (1.0 - alpha) * static_cast<double>(g_seg[i]));
  return out;
}

}  // namespace semhint::losses
