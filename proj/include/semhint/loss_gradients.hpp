#pragma once

// Closed-form per-pixel gradients of the differentiable losses, used to
// cross-check the loss implementations against finite differences.

#include "semhint/losses.hpp"

namespace semhint::losses {

/// d(photometric_loss) / d(warped).
template <std::floating_point T>
Tensor<T> photometric_loss_grad(const Tensor<T>& target, const Tensor<T>& warped, const std::optional<Mask>& mask,
                                double gamma, const SsimParams& p = {}) {
  if (!target.same_shape(warped)) throw Error("shape mismatch: photometric inputs");
  detail::require_valid_pixels(mask, target);
  p.validate();
  const std::size_t h = target.height(), w = target.width(), ch = target.channels();
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.pixels(); ++i)
    if (detail::on(mask, i)) ++n;
  const double per_term = 1.0 / (static_cast<double>(n) * static_cast<double>(ch));
  const double win = static_cast<double>(p.window * p.window);
  const int half = p.window / 2;

  Tensor<T> grad(h, w, ch, T(0));
  std::vector<double> acc(grad.size(), 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!detail::on(mask, r * w + c)) continue;
      for (std::size_t k = 0; k < ch; ++k) {
        const double diff = static_cast<double>(warped(r, c, k)) - target(r, c, k);
        acc[grad.index(r, c, k)] += (1.0 - gamma) * per_term * ((diff > 0) - (diff < 0));
        if (gamma == 0) continue;

        // SSIM = A*B / (E*F), A = 2 mu_a mu_b + C1, B = 2 cov + C2,
        // E = mu_a^2 + mu_b^2 + C1, F = var_a + var_b + C2; differentiate
        // w.r.t. the window moments of b and scatter through the window.
        const auto s = detail::local_stats(target, warped, r, c, k, p.window);
        const double A = 2 * s.mu_a * s.mu_b + p.c1, B = 2 * s.cov + p.c2;
        const double E = s.mu_a * s.mu_a + s.mu_b * s.mu_b + p.c1, F = s.var_a + s.var_b + p.c2;
        const double ssim = (A * B) / (E * F);
        const double g_mu = (2 * s.mu_a * B - 2 * s.mu_a * A) / (E * F) - ssim * (2 * s.mu_b * F - 2 * s.mu_b * E) / (E * F);
        const double g_sbb = -ssim / F;
        const double g_sab = 2 * A / (E * F);
        const double scale = -0.5 * gamma * per_term / win;
        for (int dy = -half; dy <= half; ++dy) {
          const std::size_t y = detail::reflect(static_cast<std::ptrdiff_t>(r) + dy, h);
          for (int dx = -half; dx <= half; ++dx) {
            const std::size_t x = detail::reflect(static_cast<std::ptrdiff_t>(c) + dx, w);
            const double bj = warped(y, x, k), aj = target(y, x, k);
            acc[grad.index(y, x, k)] += scale * (g_mu + 2 * g_sbb * bj + g_sab * aj);
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) grad[i] = static_cast<T>(acc[i]);
  return grad;
}

/// d(hint_loss) / d(pred).
template <std::floating_point T>
Tensor<T> hint_loss_grad(const Tensor<T>& pred, const Tensor<T>& target, const std::optional<Mask>& mask = std::nullopt) {
  if (!pred.same_shape(target)) throw Error("shape mismatch: hint loss inputs");
  detail::require_valid_pixels(mask, pred);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (detail::on(mask, i)) ++n;
  Tensor<T> grad(pred.height(), pred.width(), 1, T(0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!detail::on(mask, i)) continue;
    const double d = static_cast<double>(pred[i]) - target[i];
    grad[i] = static_cast<T>(((d > 0) - (d < 0)) / (1.0 + std::abs(d)) / static_cast<double>(n));
  }
  return grad;
}

/// d(smoothness_loss) / d(disparity), including the mean normalization.
template <std::floating_point T>
Tensor<T> smoothness_loss_grad(const Tensor<T>& disparity, const Tensor<T>& image) {
  const std::size_t h = disparity.height(), w = disparity.width(), ch = image.channels();
  double mean = 0;
  for (T v : disparity) mean += v;
  mean /= static_cast<double>(disparity.size());
  if (!(mean > 0)) throw Error("zero-mean disparity");

  auto edge = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
    double g = 0;
    for (std::size_t k = 0; k < ch; ++k) g += std::abs(static_cast<double>(image(r1, c1, k)) - image(r0, c0, k));
    return std::exp(-g / static_cast<double>(ch));
  };
  // Gradient w.r.t. the normalized disparity s* = s / mean.
  std::vector<double> gn(disparity.size(), 0.0);
  auto add_pair = [&](std::size_t i0, std::size_t i1, double wgt) {
    const double d = (static_cast<double>(disparity[i1]) - disparity[i0]) / mean;
    const double sgn = (d > 0) - (d < 0);
    gn[i1] += wgt * sgn;
    gn[i0] -= wgt * sgn;
  };
  if (w > 1) {
    const double nx = static_cast<double>(h * (w - 1));
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c) add_pair(r * w + c, r * w + c + 1, edge(r, c, r, c + 1) / nx);
  }
  if (h > 1) {
    const double ny = static_cast<double>((h - 1) * w);
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c) add_pair(r * w + c, (r + 1) * w + c, edge(r, c, r + 1, c) / ny);
  }
  // Chain through s*_i = s_i / mean(s).
  double dot = 0;
  for (std::size_t i = 0; i < gn.size(); ++i) dot += gn[i] * disparity[i];
  const double n = static_cast<double>(disparity.size());
  Tensor<T> grad(h, w, 1);
  for (std::size_t i = 0; i < gn.size(); ++i) grad[i] = static_cast<T>(gn[i] / mean - dot / (mean * mean * n));
  return grad;
}

/// d(cross_entropy) / d(probs) for class-id targets.
template <std::floating_point T>
Tensor<T> cross_entropy_grad(const LabelMap& target, const Tensor<T>& probs) {
  Tensor<T> grad(probs.height(), probs.width(), probs.channels(), T(0));
  const double n = static_cast<double>(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::size_t j = i * probs.channels() + static_cast<std::size_t>(target[i]);
    if (probs[j] > kProbFloor) grad[j] = static_cast<T>(-1.0 / (n * static_cast<double>(probs[j])));
  }
  return grad;
}

}  // namespace semhint::losses
