#pragma once

// Rectified stereo scenes with exact ground truth: fronto-parallel textured
// planes in front of a textured background.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semhint/geometry.hpp"
#include "semhint/refine.hpp"
#include "semhint/tensor.hpp"

namespace semhint::synth {

enum class Shape { rect, disk };

/// A rect covers x0 <= u < x1, y0 <= v < y1; a disk covers points within
/// `radius` of (cx, cy). Coordinates are left-image pixel centres.
struct SceneObject {
  Shape shape = Shape::rect;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double cx = 0, cy = 0, radius = 0;
  double depth = 1;
  std::int32_t class_id = 1;
  std::uint64_t seed = 1;

  static SceneObject rect(double x0, double y0, double x1, double y1, double depth, std::int32_t cls,
                          std::uint64_t seed) {
    SceneObject o;
    o.shape = Shape::rect;
    o.x0 = x0, o.y0 = y0, o.x1 = x1, o.y1 = y1;
    o.depth = depth, o.class_id = cls, o.seed = seed;
    return o;
  }
  static SceneObject disk(double cx, double cy, double radius, double depth, std::int32_t cls, std::uint64_t seed) {
    SceneObject o;
    o.shape = Shape::disk;
    o.cx = cx, o.cy = cy, o.radius = radius;
    o.depth = depth, o.class_id = cls, o.seed = seed;
    return o;
  }

  bool covers(double u, double v) const {
    if (shape == Shape::rect) return u >= x0 && u < x1 && v >= y0 && v < y1;
    return (u - cx) * (u - cx) + (v - cy) * (v - cy) <= radius * radius;
  }
};

struct SceneSpec {
  std::size_t height = 128;
  std::size_t width = 256;
  std::size_t channels = 3;
  geometry::Camera camera{200, 200, 127.5, 63.5};
  double baseline = 0.1;
  double background_depth = 10;
  std::int32_t background_class = 0;
  std::uint64_t background_seed = 1;
  double texture_cell = 4;  // value-noise lattice spacing, pixels
  std::vector<SceneObject> objects;

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) throw Error("degenerate scene size");
    if (!(baseline > 0)) throw Error("baseline must be positive");
    if (!(background_depth > 0) || !std::isfinite(background_depth)) throw Error("background depth must be positive");
    if (!(texture_cell > 0)) throw Error("texture cell must be positive");
    for (const auto& o : objects) {
      if (!(o.depth > 0)) throw Error("object depth must be positive");
      if (!(o.depth < background_depth)) throw Error("object must lie in front of the background");
      if (o.shape == Shape::rect && !(o.x1 > o.x0 && o.y1 > o.y0)) throw Error("empty rectangle");
      if (o.shape == Shape::disk && !(o.radius > 0)) throw Error("disk radius must be positive");
    }
  }

  geometry::Pose pose() const { return geometry::Pose::stereo(baseline); }
  double disparity(double depth) const { return camera.fx * baseline / depth; }
};

struct CorruptionSpec {
  int bleed_width = 0;
  double seg_flip_rate = 0;
  std::uint64_t seed = 0;
  std::vector<std::int32_t> classes;  // flip targets; empty = classes present in the labels

  void validate() const {
    if (bleed_width < 0) throw Error("bleed width must be >= 0");
    if (!(seg_flip_rate >= 0 && seg_flip_rate <= 1)) throw Error("flip rate must lie in [0, 1]");
  }
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

inline double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::size_t ch) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix(h ^ static_cast<std::uint64_t>(iy));
  return unit(splitmix(h ^ ch));
}

}  // namespace detail

/// Bilinear value noise around `mean`, amplitude +-0.15.
inline double texture(std::uint64_t seed, double mean, double cell, double u, double v, std::size_t ch) {
  const double x = u / cell, y = v / cell;
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double ax = x - fx, ay = y - fy;
  const double top = (1 - ax) * detail::lattice(seed, ix, iy, ch) + ax * detail::lattice(seed, ix + 1, iy, ch);
  const double bot =
      (1 - ax) * detail::lattice(seed, ix, iy + 1, ch) + ax * detail::lattice(seed, ix + 1, iy + 1, ch);
  return mean + 0.3 * ((1 - ay) * top + ay * bot - 0.5);
}

/// Mean intensity of surface `i` (0 = background) among `n` surfaces.
inline double surface_mean(std::size_t i, std::size_t n) {
  return n <= 1 ? 0.5 : 0.2 + 0.6 * static_cast<double>(i) / static_cast<double>(n - 1);
}

struct RenderedScene {
  Image left;
  Image right;
  DepthMap depth;     // left view
  LabelMap seg;       // left view
  Mask occlusion;     // left pixels hidden behind a nearer surface in the right view
};

namespace detail {

// Nearest surface seen at left-image position (u, v) after shifting every
// surface by its own disparity; 0 is the background.
inline std::size_t front_surface(const SceneSpec& s, double u, double v, bool right_view) {
  std::size_t best = 0;
  double best_z = s.background_depth;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    const double shift = right_view ? s.disparity(o.depth) : 0.0;
    if (o.depth < best_z && o.covers(u + shift, v)) {
      best = i + 1;
      best_z = o.depth;
    }
  }
  return best;
}

}  // namespace detail

inline RenderedScene render(const SceneSpec& s) {
  s.validate();
  const std::size_t h = s.height, w = s.width, n = s.objects.size() + 1;
  RenderedScene out{Image(h, w, s.channels), Image(h, w, s.channels), DepthMap(h, w), LabelMap(h, w), Mask(h, w)};
  auto depth_of = [&](std::size_t i) { return i == 0 ? s.background_depth : s.objects[i - 1].depth; };
  auto seed_of = [&](std::size_t i) { return i == 0 ? s.background_seed : s.objects[i - 1].seed; };
  auto class_of = [&](std::size_t i) { return i == 0 ? s.background_class : s.objects[i - 1].class_id; };
  // Surface texture is attached to left-image coordinates.
  auto shade = [&](std::size_t i, double u, double v, std::size_t ch) {
    return static_cast<float>(texture(seed_of(i), surface_mean(i, n), s.texture_cell, u, v, ch));
  };

  for (std::size_t r = 0; r < h; ++r) {
    const double v = static_cast<double>(r);
    for (std::size_t c = 0; c < w; ++c) {
      const double u = static_cast<double>(c);
      const std::size_t i = detail::front_surface(s, u, v, false);
      out.depth(r, c) = static_cast<float>(depth_of(i));
      out.seg(r, c) = class_of(i);
      for (std::size_t k = 0; k < s.channels; ++k) out.left(r, c, k) = shade(i, u, v, k);

      // Right view: pixel x shows the surface point at left column x + disparity.
      const std::size_t j = detail::front_surface(s, u, v, true);
      const double src_u = u + s.disparity(depth_of(j));
      for (std::size_t k = 0; k < s.channels; ++k) out.right(r, c, k) = shade(j, src_u, v, k);

      // Left pixel lands at u - d in the right view; occluded if a nearer
      // surface is in front there. Leaving the frame is not occlusion.
      const double xr = u - s.disparity(depth_of(i));
      if (xr >= -geometry::detail::kFrameSlack && xr <= static_cast<double>(w - 1) + geometry::detail::kFrameSlack)
        out.occlusion.set(r, c, depth_of(detail::front_surface(s, xr, v, true)) < depth_of(i));
    }
  }
  return out;
}

struct Corrupted {
  DepthMap depth;
  LabelMap seg;
};

/// Foreground bleed: every pixel takes the nearest depth within a
/// (2b+1)^2 window. Label flips draw raw mt19937_64 output so the result is
/// identical across standard libraries.
inline Corrupted corrupt(const DepthMap& depth, const LabelMap& seg, const CorruptionSpec& c) {
  c.validate();
  if (!depth.same_shape(seg) || depth.channels() != 1) throw Error("shape mismatch: depth vs labels");
  Corrupted out{depth, seg};
  if (c.bleed_width > 0) {
    const auto v = refine::detail::pool2d<float>(depth.vector(), depth.height(), depth.width(), c.bleed_width,
                                                 std::numeric_limits<float>::infinity(),
                                                 [](float a, float b) { return std::min(a, b); }, 1);
    out.depth = DepthMap(depth.height(), depth.width(), 1, v);
  }
  if (c.seg_flip_rate > 0) {
    std::vector<std::int32_t> classes = c.classes;
    if (classes.empty()) {
      std::set<std::int32_t> present(seg.begin(), seg.end());
      classes.assign(present.begin(), present.end());
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw Error("label flips need at least two classes");
    std::mt19937_64 rng(c.seed);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      const double u = detail::unit(rng());
      const std::uint64_t pick = rng();
      if (u >= c.seg_flip_rate) continue;
      std::vector<std::int32_t> others;
      for (auto k : classes)
        if (k != seg[i]) others.push_back(k);
      out.seg[i] = others[pick % others.size()];
    }
  }
  return out;
}

/// Segmenter that knows the scene: a pixel keeps its ground-truth class
/// when the image still shows the left view there, otherwise it is void (-1).
class ReferenceSegmenter {
 public:
  ReferenceSegmenter(Image reference, LabelMap labels, double tolerance = 1e-3)
      : ref_(std::move(reference)), labels_(std::move(labels)), tol_(tolerance) {
    require_same_plane(ref_, labels_, "reference segmenter");
  }

  LabelMap operator()(const Image& img) const {
    if (!img.same_shape(ref_)) throw Error("shape mismatch: segmenter input");
    LabelMap out(img.height(), img.width(), 1, -1);
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      bool same = true;
      for (std::size_t k = 0; k < img.channels(); ++k)
        same = same && std::abs(img[p * img.channels() + k] - ref_[p * img.channels() + k]) <= tol_;
      if (same) out[p] = labels_[p];
    }
    return out;
  }

 private:
  Image ref_;
  LabelMap labels_;
  double tol_;
};

struct SynthConfig {
  SceneSpec scene;
  CorruptionSpec corruption;
};

/// Flat `key = value` config; `object = rect x0 y0 x1 y1 depth class seed`
/// or `object = disk cx cy radius depth class seed`, repeatable.
inline SynthConfig parse_config(std::istream& is) {
  SynthConfig cfg;
  auto& s = cfg.scene;
  std::optional<double> cx, cy;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hpos = line.find('#'); hpos != std::string::npos) line.resize(hpos);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    auto fail = [&](const std::string& m) { return Error("config line " + std::to_string(lineno) + ": " + m); };
    if (eq == std::string::npos) throw fail("expected key = value");
    std::istringstream ks(line.substr(0, eq));
    std::string key;
    ks >> key;
    std::istringstream vs(line.substr(eq + 1));
    auto num = [&](auto& dst) {
      if (!(vs >> dst)) throw fail("bad value for " + key);
    };
    if (key == "height") num(s.height);
    else if (key == "width") num(s.width);
    else if (key == "channels") num(s.channels);
    else if (key == "fx") num(s.camera.fx);
    else if (key == "fy") num(s.camera.fy);
    else if (key == "cx") { double v; num(v); cx = v; }
    else if (key == "cy") { double v; num(v); cy = v; }
    else if (key == "baseline") num(s.baseline);
    else if (key == "background.depth") num(s.background_depth);
    else if (key == "background.class") num(s.background_class);
    else if (key == "background.seed") num(s.background_seed);
    else if (key == "texture_cell") num(s.texture_cell);
    else if (key == "bleed_width") num(cfg.corruption.bleed_width);
    else if (key == "seg_flip_rate") num(cfg.corruption.seg_flip_rate);
    else if (key == "corruption_seed") num(cfg.corruption.seed);
    else if (key == "object") {
      std::string kind;
      vs >> kind;
      double a, b, c, d = 0, z;
      std::int32_t cls;
      std::uint64_t seed;
      if (kind == "rect") {
        if (!(vs >> a >> b >> c >> d >> z >> cls >> seed)) throw fail("rect needs x0 y0 x1 y1 depth class seed");
        s.objects.push_back(SceneObject::rect(a, b, c, d, z, cls, seed));
      } else if (kind == "disk") {
        if (!(vs >> a >> b >> c >> z >> cls >> seed)) throw fail("disk needs cx cy radius depth class seed");
        s.objects.push_back(SceneObject::disk(a, b, c, z, cls, seed));
      } else {
        throw fail("object kind must be rect or disk");
      }
    } else {
      throw fail("unknown key " + key);
    }
    std::string extra;
    if (vs >> extra) throw fail("trailing text after " + key);
  }
  // Principal point defaults to the image centre.
  s.camera.cx = cx.value_or((static_cast<double>(s.width) - 1) / 2);
  s.camera.cy = cy.value_or((static_cast<double>(s.height) - 1) / 2);
  s.camera = geometry::Camera(s.camera.fx, s.camera.fy, s.camera.cx, s.camera.cy);
  s.validate();
  cfg.corruption.validate();
  return cfg;
}

inline SynthConfig read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  return parse_config(f);
}

/// The bleed-recovery scene: one square at 2 m on a 10 m background,
/// disparities 10 px and 2 px.
inline SceneSpec square_scene(std::size_t height = 128, std::size_t width = 256) {
  SceneSpec s;
  s.height = height;
  s.width = width;
  s.camera = geometry::Camera(200, 200, (static_cast<double>(width) - 1) / 2, (static_cast<double>(height) - 1) / 2);
  s.baseline = 0.1;
  s.background_depth = 10;
  s.background_class = 0;
  s.background_seed = 11;
  const double side = static_cast<double>(std::min(height, width)) / 2;
  const double x0 = std::floor((static_cast<double>(width) - side) / 2);
  const double y0 = std::floor((static_cast<double>(height) - side) / 2);
  s.objects.push_back(SceneObject::rect(x0, y0, x0 + side, y0 + side, 2.0, 1, 23));
  return s;
}

}  // namespace semhint::synth
