#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semhint/tensor.hpp"

namespace semhint::metrics {

/// Standard depth-benchmark error and accuracy figures.
struct DepthEvalResult {
  double abs_rel = 0;
  double sq_rel = 0;
  double rmse = 0;
  double rmse_log = 0;
  double delta1 = 0;  ///< fraction with max(gt/pred, pred/gt) < 1.25
  double delta2 = 0;  ///< ... < 1.25^2
  double delta3 = 0;  ///< ... < 1.25^3
  std::size_t valid_pixel_count = 0;

  /// abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,n_valid
  std::string csv_row() const {
    std::ostringstream os;
    os << std::setprecision(9) << abs_rel << ',' << sq_rel << ',' << rmse << ',' << rmse_log << ',' << delta1 << ','
       << delta2 << ',' << delta3 << ',' << valid_pixel_count;
    return os.str();
  }
  static constexpr const char* csv_header = "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,n_valid";
};

inline constexpr double kDefaultDepthCap = 80.0;
inline constexpr double kMinPredDepth = 1e-3;

/// Scores `pred` against `gt` on pixels where gt is marked valid and
/// 0 < gt <= cap. Predictions are clamped to [1e-3, cap]; no median scaling.
inline DepthEvalResult evaluate_depth(const DepthMap& pred, const DepthMap& gt, const std::optional<Mask>& gt_valid,
                                      double cap = kDefaultDepthCap) {
  if (!pred.same_shape(gt) || pred.channels() != 1) throw Error("shape mismatch: prediction vs ground truth");
  if (gt_valid) require_mask(*gt_valid, gt, "ground-truth validity mask");
  if (!(cap > kMinPredDepth)) throw Error("depth cap must exceed 1e-3");

  DepthEvalResult r;
  double sq = 0, sq_log = 0;
  std::size_t a1 = 0, a2 = 0, a3 = 0, n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt_valid && !(*gt_valid)[i]) continue;
    const double g = gt[i];
    if (!(g > 0) || g > cap) continue;
    const double p = std::clamp(static_cast<double>(pred[i]), kMinPredDepth, cap);
    const double ratio = std::max(g / p, p / g);
    a1 += ratio < 1.25;
    a2 += ratio < 1.25 * 1.25;
    a3 += ratio < 1.25 * 1.25 * 1.25;
    const double err = g - p;
    r.abs_rel += std::abs(err) / g;
    r.sq_rel += err * err / g;
    sq += err * err;
    const double lerr = std::log(g) - std::log(p);
    sq_log += lerr * lerr;
    ++n;
  }
  if (n == 0) throw Error("zero valid pixels");
  const double dn = static_cast<double>(n);
  r.abs_rel /= dn;
  r.sq_rel /= dn;
  r.rmse = std::sqrt(sq / dn);
  r.rmse_log = std::sqrt(sq_log / dn);
  r.delta1 = static_cast<double>(a1) / dn;
  r.delta2 = static_cast<double>(a2) / dn;
  r.delta3 = static_cast<double>(a3) / dn;
  r.valid_pixel_count = n;
  return r;
}

struct Point2 {
  double x, y;
};

struct ErrorSummary {
  double mean = 0;
  double stddev = 0;  ///< population standard deviation
};

/// Pixel distance between tracked reprojections and their annotations.
inline ErrorSummary reprojection_error(const std::vector<Point2>& tracked, const std::vector<Point2>& truth) {
  if (tracked.size() != truth.size()) throw Error("point lists differ in length");
  if (tracked.empty()) throw Error("no points to compare");
  std::vector<double> d(tracked.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::hypot(tracked[i].x - truth[i].x, tracked[i].y - truth[i].y);
  ErrorSummary s;
  for (double v : d) s.mean += v;
  s.mean /= static_cast<double>(d.size());
  for (double v : d) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(d.size()));
  return s;
}

}  // namespace semhint::metrics
