#pragma once

// Mutual depth / segmentation refinement.
//
// Both refinements partition pixels into a confident set C and an unreliable
// set U, then grow C into U one ring at a time. Updates are synchronous: each
// iteration reads only the previous iteration's C, which makes the result
// independent of visiting order. Every algorithm comes in two forms:
//
//   *_sequential  per-pixel reference loop (the oracle)
//   default       wavefront form built from whole-image pooling / kernel-tap
//                 passes, parallel over rows
//
// The two must agree bit for bit.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "semhint/geometry.hpp"
#include "semhint/parallel.hpp"
#include "semhint/tensor.hpp"

namespace semhint::refine {

struct RefineConfig {
  /// Label refinement acceptance threshold on |d_i - d_j| (meters). Unset means
  /// 0.05 * median depth over the initial confident set.
  std::optional<float> depth_threshold;
  /// Chebyshev neighborhood radius; 1 is the 8-connected 3x3 window.
  int radius = 1;
  int max_iterations = 512;
  /// Worker threads for the wavefront form; 0 picks hardware concurrency.
  unsigned threads = 0;

  void validate() const {
    if (depth_threshold && !(*depth_threshold > 0)) throw Error("depth threshold must be positive");
    if (radius < 1) throw Error("neighborhood radius must be >= 1");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
  }
};

/// Labels or depths together with the C / U partition.
template <class T>
struct RefineState {
  Tensor<T> values;
  Mask confident;
  Mask unreliable;
  int iteration = 0;

  /// C and U never overlap.
  bool disjoint() const {
    for (std::size_t i = 0; i < confident.pixels(); ++i)
      if (confident[i] && unreliable[i]) return false;
    return true;
  }
};

/// Ordered, duplicate-free list of semantic class ids.
class ClassSet {
 public:
  explicit ClassSet(std::vector<std::int32_t> ids) : ids_(std::move(ids)) {
    auto sorted = ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw Error("duplicate class id");
  }

  static ClassSet from_labels(const LabelMap& labels) {
    std::vector<std::int32_t> ids(labels.begin(), labels.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ClassSet(std::move(ids));
  }

  const std::vector<std::int32_t>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(std::int32_t id) const { return std::find(ids_.begin(), ids_.end(), id) != ids_.end(); }

 private:
  std::vector<std::int32_t> ids_;
};

struct RefineStats {
  int iterations = 0;
  std::size_t promoted = 0;    ///< pixels moved from U to C
  std::size_t changed = 0;     ///< pixels whose value differs from the input
  std::size_t unresolved = 0;  ///< pixels still in U at exit
};

struct SegRefinement {
  LabelMap labels;
  RefineStats stats;
  float threshold;
};

struct ClassState {
  std::int32_t class_id;
  RefineState<float> state;
};

struct DepthRefinement {
  DepthMap depth;
  RefineStats stats;
};

// ---------------------------------------------------------------------------
// shared helpers

namespace detail {

inline void check_depth(const DepthMap& d) {
  if (d.channels() != 1) throw Error("depth must have one channel");
  for (float v : d)
    if (!std::isfinite(v)) throw Error("non-finite depth");
}

inline float median_over(const DepthMap& d, const Mask& m) {
  std::vector<float> v;
  v.reserve(m.count());
  for (std::size_t i = 0; i < m.pixels(); ++i)
    if (m[i]) v.push_back(d[i]);
  if (v.empty()) return 0.0f;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline float resolve_threshold(const RefineConfig& cfg, const DepthMap& d, const Mask& confident) {
  if (cfg.depth_threshold) return *cfg.depth_threshold;
  const float th = 0.05f * median_over(d, confident);
  // Any positive value behaves the same when C is empty: nothing can propagate.
  return th > 0 ? th : std::numeric_limits<float>::min();
}

/// Neighbor offsets of a Chebyshev window in raster order, center excluded.
/// Raster order of offsets equals raster order of the neighbor pixels, which
/// is what the argmin tie-break relies on.
inline std::vector<std::pair<int, int>> window_offsets(int radius) {
  std::vector<std::pair<int, int>> taps;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy != 0 || dx != 0) taps.emplace_back(dy, dx);
  return taps;
}

/// Separable sliding-window reduction over a (2r+1)^2 Chebyshev window;
/// pixels outside the image contribute `identity`.
template <class T, class Op>
std::vector<T> pool2d(const std::vector<T>& in, std::size_t h, std::size_t w, int radius, T identity, Op op,
                      unsigned threads) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::vector<T> rows(in.size(), identity);
  parallel_rows(h, w * (2 * radius + 1), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t y = b; y < e; ++y) {
      for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x) {
        T acc = identity;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, x - r);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, x + r);
        for (std::ptrdiff_t k = lo; k <= hi; ++k) acc = op(acc, in[y * w + static_cast<std::size_t>(k)]);
        rows[y * w + static_cast<std::size_t>(x)] = acc;
      }
    }
  });
  std::vector<T> out(in.size(), identity);
  parallel_rows(h, w * (2 * radius + 1), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t y = b; y < e; ++y) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - r);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, static_cast<std::ptrdiff_t>(y) + r);
      for (std::size_t x = 0; x < w; ++x) {
        T acc = identity;
        for (std::ptrdiff_t k = lo; k <= hi; ++k) acc = op(acc, rows[static_cast<std::size_t>(k) * w + x]);
        out[y * w + x] = acc;
      }
    }
  });
  return out;
}

/// Unreliable pixels with at least one confident pixel in their window
/// (max-pool dilation of C intersected with U), in raster order.
inline std::vector<std::size_t> frontier(const Mask& confident, const Mask& unreliable, int radius, unsigned threads) {
  std::vector<std::uint8_t> c(confident.pixels());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = confident[i] ? 1 : 0;
  const auto dilated = pool2d<std::uint8_t>(c, confident.height(), confident.width(), radius, 0,
                                            [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); }, threads);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dilated.size(); ++i)
    if (dilated[i] && unreliable[i]) out.push_back(i);
  return out;
}

inline void finish_stats(RefineStats& s, const Mask& unreliable) { s.unresolved = unreliable.count(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Refine segmentation with depth

/// C = pixels where the pseudo label agrees with the prediction, U = the rest.
inline RefineState<std::int32_t> split_confidence_by_agreement(const LabelMap& pseudo, const LabelMap& predicted) {
  if (!pseudo.same_shape(predicted) || pseudo.channels() != 1) throw Error("shape mismatch: label maps");
  RefineState<std::int32_t> s{pseudo, Mask(pseudo.height(), pseudo.width()), Mask(pseudo.height(), pseudo.width())};
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    const bool agree = pseudo[i] == predicted[i];
    s.confident.set(i, agree);
    s.unreliable.set(i, !agree);
  }
  return s;
}

namespace detail {

inline void check_seg_inputs(const LabelMap& pseudo, const LabelMap& predicted, const DepthMap& depth,
                             const RefineConfig& cfg) {
  cfg.validate();
  if (!pseudo.same_shape(predicted) || !pseudo.same_plane(depth) || pseudo.channels() != 1)
    throw Error("shape mismatch: segmentation refinement inputs");
  check_depth(depth);
}

inline SegRefinement finish_seg(const LabelMap& pseudo, RefineState<std::int32_t>& s, RefineStats stats, float th) {
  for (std::size_t i = 0; i < pseudo.size(); ++i)
    if (s.values[i] != pseudo[i]) ++stats.changed;
  finish_stats(stats, s.unreliable);
  return {std::move(s.values), stats, th};
}

}  // namespace detail

/// Per-pixel reference: each pass visits U in raster order and scans its
/// window against the previous pass's C.
inline SegRefinement refine_segmentation_with_depth_sequential(const LabelMap& pseudo, const LabelMap& predicted,
                                                               const DepthMap& depth, const RefineConfig& cfg) {
  detail::check_seg_inputs(pseudo, predicted, depth, cfg);
  auto s = split_confidence_by_agreement(pseudo, predicted);
  const float th = detail::resolve_threshold(cfg, depth, s.confident);
  const auto h = static_cast<std::ptrdiff_t>(depth.height());
  const auto w = static_cast<std::ptrdiff_t>(depth.width());
  const int r = cfg.radius;
  RefineStats stats;

  while (stats.iterations < cfg.max_iterations) {
    auto next = s;
    std::size_t promoted = 0;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y * w + x);
        if (!s.unreliable[i]) continue;
        float best = std::numeric_limits<float>::infinity();
        std::optional<std::size_t> best_j;
        for (std::ptrdiff_t ny = y - r; ny <= y + r; ++ny) {
          for (std::ptrdiff_t nx = x - r; nx <= x + r; ++nx) {
            if (ny < 0 || nx < 0 || ny >= h || nx >= w || (ny == y && nx == x)) continue;
            const auto j = static_cast<std::size_t>(ny * w + nx);
            if (!s.confident[j]) continue;
            const float diff = std::abs(depth[i] - depth[j]);
            if (!best_j || diff < best) {
              best = diff;
              best_j = j;
            }
          }
        }
        if (!best_j) continue;
        if (best < th) next.values[i] = s.values[*best_j];
        next.unreliable.set(i, false);
        next.confident.set(i, true);
        ++promoted;
      }
    }
    if (promoted == 0) break;
    next.iteration = s.iteration + 1;
    s = std::move(next);
    stats.promoted += promoted;
    ++stats.iterations;
  }
  return detail::finish_seg(pseudo, s, stats, th);
}

/// Wavefront form. The frontier comes from a max-pool dilation of C; the
/// nearest-depth confident neighbor is found tap by tap, each tap being a
/// whole-frontier pass for one kernel offset, like a one-hot convolution.
inline SegRefinement refine_segmentation_with_depth(const LabelMap& pseudo, const LabelMap& predicted,
                                                    const DepthMap& depth, const RefineConfig& cfg) {
  detail::check_seg_inputs(pseudo, predicted, depth, cfg);
  auto s = split_confidence_by_agreement(pseudo, predicted);
  const float th = detail::resolve_threshold(cfg, depth, s.confident);
  const auto h = static_cast<std::ptrdiff_t>(depth.height());
  const auto w = static_cast<std::ptrdiff_t>(depth.width());
  const auto taps = detail::window_offsets(cfg.radius);
  RefineStats stats;

  std::vector<float> best;
  std::vector<std::int32_t> best_label;
  while (stats.iterations < cfg.max_iterations) {
    const auto front = detail::frontier(s.confident, s.unreliable, cfg.radius, cfg.threads);
    if (front.empty()) break;
    best.assign(front.size(), std::numeric_limits<float>::infinity());
    best_label.assign(front.size(), 0);
    std::vector<std::uint8_t> found(front.size(), 0);

    for (const auto& [dy, dx] : taps) {
      parallel_rows(front.size(), 1, cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t f = b; f < e; ++f) {
          const std::size_t i = front[f];
          const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(i) / w + dy;
          const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(i) % w + dx;
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          const auto j = static_cast<std::size_t>(ny * w + nx);
          if (!s.confident[j]) continue;
          const float diff = std::abs(depth[i] - depth[j]);
          if (!found[f] || diff < best[f]) {
            best[f] = diff;
            best_label[f] = s.values[j];
            found[f] = 1;
          }
        }
      });
    }

    for (std::size_t f = 0; f < front.size(); ++f) {
      const std::size_t i = front[f];
      if (best[f] < th) s.values[i] = best_label[f];
      s.unreliable.set(i, false);
      s.confident.set(i, true);
    }
    ++s.iteration;
    stats.promoted += front.size();
    ++stats.iterations;
  }
  return detail::finish_seg(pseudo, s, stats, th);
}

// ---------------------------------------------------------------------------
// Refine depth with segmentation

/// Splits every class z_k of `refined_seg` into C^k (segmentation consistent
/// across views and warp-valid) and U^k (everything else of that class).
inline std::vector<ClassState> split_confidence_by_consistency(const DepthMap& depth, const LabelMap& refined_seg,
                                                               const LabelMap& seg_target,
                                                               const LabelMap& seg_warped, const Mask& warp_valid,
                                                               const ClassSet& classes) {
  if (!depth.same_plane(refined_seg) || !refined_seg.same_shape(seg_target) || !seg_target.same_shape(seg_warped) ||
      !warp_valid.matches(depth) || refined_seg.channels() != 1 || depth.channels() != 1)
    throw Error("shape mismatch: consistency split inputs");
  for (std::int32_t v : refined_seg)
    if (!classes.contains(v)) throw Error("class " + std::to_string(v) + " not in class set");

  std::vector<ClassState> out;
  out.reserve(classes.size());
  for (std::int32_t k : classes.ids()) {
    ClassState cs{k, {depth, Mask(depth.height(), depth.width()), Mask(depth.height(), depth.width())}};
    for (std::size_t i = 0; i < depth.size(); ++i) {
      if (refined_seg[i] != k) continue;
      const bool consistent = seg_target[i] == seg_warped[i] && warp_valid[i];
      cs.state.confident.set(i, consistent);
      cs.state.unreliable.set(i, !consistent);
    }
    out.push_back(std::move(cs));
  }
  return out;
}

namespace detail {

inline void check_depth_states(const DepthMap& depth, const std::vector<ClassState>& states, const RefineConfig& cfg) {
  cfg.validate();
  check_depth(depth);
  for (const auto& cs : states) {
    if (!cs.state.values.same_shape(depth) || !cs.state.confident.matches(depth) || !cs.state.unreliable.matches(depth))
      throw Error("shape mismatch: class state vs depth");
  }
}

inline float clip(float u, float lo, float hi) { return std::max(std::min(u, hi), lo); }

/// Writes each class's pixels back into the output depth.
inline DepthRefinement merge_classes(const DepthMap& depth, const std::vector<RefineState<float>>& finals,
                                     RefineStats stats) {
  DepthMap out = depth;
  for (const auto& s : finals)
    for (std::size_t i = 0; i < out.size(); ++i)
      if (s.confident[i] || s.unreliable[i]) out[i] = s.values[i];
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] != depth[i]) ++stats.changed;
  for (const auto& s : finals) stats.unresolved += s.unreliable.count();
  return {std::move(out), stats};
}

}  // namespace detail

/// Per-pixel reference of the per-class clipping propagation.
inline DepthRefinement refine_depth_with_segmentation_sequential(const DepthMap& depth,
                                                                 const std::vector<ClassState>& states,
                                                                 const RefineConfig& cfg) {
  detail::check_depth_states(depth, states, cfg);
  const auto h = static_cast<std::ptrdiff_t>(depth.height());
  const auto w = static_cast<std::ptrdiff_t>(depth.width());
  const int r = cfg.radius;
  RefineStats stats;
  std::vector<RefineState<float>> finals;

  for (const auto& cs : states) {
    RefineState<float> s = cs.state;
    int iterations = 0;
    while (iterations < cfg.max_iterations) {
      auto next = s;
      std::size_t promoted = 0;
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
          const auto i = static_cast<std::size_t>(y * w + x);
          if (!s.unreliable[i]) continue;
          float lo = std::numeric_limits<float>::infinity();
          float hi = -std::numeric_limits<float>::infinity();
          bool any = false;
          for (std::ptrdiff_t ny = y - r; ny <= y + r; ++ny) {
            for (std::ptrdiff_t nx = x - r; nx <= x + r; ++nx) {
              if (ny < 0 || nx < 0 || ny >= h || nx >= w || (ny == y && nx == x)) continue;
              const auto j = static_cast<std::size_t>(ny * w + nx);
              if (!s.confident[j]) continue;
              lo = std::min(lo, s.values[j]);
              hi = std::max(hi, s.values[j]);
              any = true;
            }
          }
          if (!any) continue;
          next.values[i] = detail::clip(s.values[i], lo, hi);
          next.unreliable.set(i, false);
          next.confident.set(i, true);
          ++promoted;
        }
      }
      if (promoted == 0) break;
      next.iteration = s.iteration + 1;
      s = std::move(next);
      stats.promoted += promoted;
      ++iterations;
    }
    stats.iterations = std::max(stats.iterations, iterations);
    finals.push_back(std::move(s));
  }
  return detail::merge_classes(depth, finals, stats);
}

/// Wavefront form: per class, masked min- and max-pooling of confident
/// depths give the clip bounds for the whole frontier at once.
inline DepthRefinement refine_depth_with_segmentation(const DepthMap& depth, const std::vector<ClassState>& states,
                                                      const RefineConfig& cfg) {
  detail::check_depth_states(depth, states, cfg);
  const std::size_t h = depth.height(), w = depth.width();
  constexpr float kInf = std::numeric_limits<float>::infinity();
  auto fmin = [](float a, float b) { return std::min(a, b); };
  auto fmax = [](float a, float b) { return std::max(a, b); };
  RefineStats stats;
  std::vector<RefineState<float>> finals;

  for (const auto& cs : states) {
    RefineState<float> s = cs.state;
    int iterations = 0;
    std::vector<float> lo_in(depth.size()), hi_in(depth.size());
    while (iterations < cfg.max_iterations && s.unreliable.any()) {
      for (std::size_t i = 0; i < depth.size(); ++i) {
        lo_in[i] = s.confident[i] ? s.values[i] : kInf;
        hi_in[i] = s.confident[i] ? s.values[i] : -kInf;
      }
      const auto lo = detail::pool2d<float>(lo_in, h, w, cfg.radius, kInf, fmin, cfg.threads);
      const auto hi = detail::pool2d<float>(hi_in, h, w, cfg.radius, -kInf, fmax, cfg.threads);

      std::size_t promoted = 0;
      for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!s.unreliable[i] || lo[i] == kInf) continue;
        s.values[i] = detail::clip(s.values[i], lo[i], hi[i]);
        s.unreliable.set(i, false);
        s.confident.set(i, true);
        ++promoted;
      }
      if (promoted == 0) break;
      ++s.iteration;
      stats.promoted += promoted;
      ++iterations;
    }
    stats.iterations = std::max(stats.iterations, iterations);
    finals.push_back(std::move(s));
  }
  return detail::merge_classes(depth, finals, stats);
}

/// Anything callable as `LabelMap(const Image&)`.
template <class S>
concept Segmenter = std::invocable<S&, const Image&> &&
                    std::convertible_to<std::invoke_result_t<S&, const Image&>, LabelMap>;

struct ConsistencyInputs {
  Image warped;
  Mask warp_valid;
  LabelMap seg_target;
  LabelMap seg_warped;
};

/// Warps the source into the target view with the predicted depth and runs
/// the segmenter on both views. The segmenter must be deterministic.
template <Segmenter S>
ConsistencyInputs consistency_inputs(const DepthMap& depth, const Image& target, const Image& source,
                                     const geometry::Pose& pose, const geometry::Camera& k, S&& segmenter) {
  auto warped = geometry::warp(source, depth, pose, k);
  LabelMap seg_target = std::invoke(segmenter, target);
  LabelMap seg_warped = std::invoke(segmenter, warped.values);
  if (!seg_target.same_plane(target) || !seg_warped.same_plane(target) || seg_target.channels() != 1 ||
      seg_warped.channels() != 1)
    throw Error("segmenter output shape mismatch");
  return {std::move(warped.values), std::move(warped.valid), std::move(seg_target), std::move(seg_warped)};
}

/// Warp, segment both views, split per class and refine.
template <Segmenter S>
DepthRefinement refine_depth_full(const DepthMap& depth, const LabelMap& refined_seg, const Image& target,
                                  const Image& source, const geometry::Pose& pose, const geometry::Camera& k,
                                  S&& segmenter, const RefineConfig& cfg) {
  const auto in = consistency_inputs(depth, target, source, pose, k, std::forward<S>(segmenter));
  const auto states = split_confidence_by_consistency(depth, refined_seg, in.seg_target, in.seg_warped, in.warp_valid,
                                                      ClassSet::from_labels(refined_seg));
  return refine_depth_with_segmentation(depth, states, cfg);
}

}  // namespace semhint::refine
