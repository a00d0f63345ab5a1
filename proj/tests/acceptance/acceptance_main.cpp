// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "semhint/semhint.hpp"

using namespace semhint;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << what << " :: " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

template <class T>
Tensor<T> uniform(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(h, w, c);
  for (auto& v : t) v = static_cast<T>(u(rng));
  return t;
}

LabelMap labels(std::mt19937_64& rng, std::size_t h, std::size_t w, int k) {
  LabelMap l(h, w);
  for (auto& v : l) v = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(k));
  return l;
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> dim(1, 32);
  std::uniform_int_distribution<int> ncls(2, 5), rad(1, 2);
  std::uniform_real_distribution<float> th(0.01f, 4.f);
  int seg_ok = 0, depth_ok = 0;
  const int n = 200;
  for (int t = 0; t < n; ++t) {
    const std::size_t h = dim(rng), w = dim(rng);
    const int k = ncls(rng);
    refine::RefineConfig cfg;
    cfg.radius = rad(rng);
    cfg.depth_threshold = th(rng);
    cfg.threads = 1 + static_cast<unsigned>(t % 3);
    const auto y = labels(rng, h, w, k), yhat = labels(rng, h, w, k);
    const auto d = uniform<float>(rng, h, w, 1, 0.5, 20.0);
    seg_ok += refine::refine_segmentation_with_depth_sequential(y, yhat, d, cfg).labels ==
              refine::refine_segmentation_with_depth(y, yhat, d, cfg).labels;

    const auto yt = labels(rng, h, w, k), yst = labels(rng, h, w, k);
    Mask valid(h, w);
    for (std::size_t i = 0; i < valid.pixels(); ++i) valid.set(i, rng() % 6 != 0);
    const auto states = refine::split_confidence_by_consistency(d, y, yt, yst, valid, refine::ClassSet::from_labels(y));
    const auto a = refine::refine_depth_with_segmentation_sequential(d, states, cfg).depth;
    const auto b = refine::refine_depth_with_segmentation(d, states, cfg).depth;
    depth_ok += a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
  }
  const double secs = seconds_since(t0);
  report(1, seg_ok == n && depth_ok == n && secs < 10, "refinement oracle equivalence",
         "alg1 " + std::to_string(seg_ok) + "/" + std::to_string(n) + ", alg2 " + std::to_string(depth_ok) + "/" +
             std::to_string(n) + " bitwise equal, " + fmt(secs, 3) + " s");
}

void criterion2() {
  constexpr std::int32_t A = 1, B = 2;
  const LabelMap y(1, 3, 1, {A, B, A}), yhat(1, 3, 1, {A, A, A});
  const DepthMap d(1, 3, 1, {1.0f, 1.01f, 5.0f});
  refine::RefineConfig loose, tight;
  loose.depth_threshold = 0.1f;
  tight.depth_threshold = 0.005f;
  bool ok = true;
  for (auto fn : {&refine::refine_segmentation_with_depth_sequential, &refine::refine_segmentation_with_depth}) {
    ok &= fn(y, yhat, d, loose).labels == LabelMap(1, 3, 1, {A, A, A});
    ok &= fn(y, yhat, d, tight).labels == LabelMap(1, 3, 1, {A, B, A});
  }
  const DepthMap dd(1, 3, 1, {2.0f, 9.0f, 2.2f});
  Mask u(1, 3);
  u.set(1, true);
  const std::vector<refine::ClassState> st{{A, {dd, ~u, u}}};
  for (auto fn : {&refine::refine_depth_with_segmentation_sequential, &refine::refine_depth_with_segmentation})
    ok &= fn(dd, st, refine::RefineConfig{}).depth == DepthMap(1, 3, 1, {2.0f, 2.2f, 2.2f});
  report(2, ok, "worked micro-fixtures", "alg1 [A,A,A] @0.1, [A,B,A] @0.005; alg2 [2.0,2.2,2.2]");
}

void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = synth::square_scene(128, 256);
  const auto scene = synth::render(spec);
  synth::CorruptionSpec cs;
  cs.bleed_width = 4;
  const auto noisy = synth::corrupt(scene.depth, scene.seg, cs);
  synth::ReferenceSegmenter segmenter(scene.left, scene.seg);
  const auto refined = refine::refine_depth_full(noisy.depth, scene.seg, scene.left, scene.right, spec.pose(),
                                                 spec.camera, segmenter, refine::RefineConfig{});
  const double secs = seconds_since(t0);

  std::size_t band = 0, restored = 0;
  double se_before = 0, se_after = 0;
  for (std::size_t i = 0; i < scene.depth.size(); ++i) {
    if (noisy.depth[i] == scene.depth[i]) continue;
    ++band;
    const double gt = scene.depth[i];
    restored += std::abs(refined.depth[i] - gt) <= 0.05 * gt;
    se_before += (noisy.depth[i] - gt) * (noisy.depth[i] - gt);
    se_after += (refined.depth[i] - gt) * (refined.depth[i] - gt);
  }
  const double frac = band ? static_cast<double>(restored) / static_cast<double>(band) : 0;
  const double rmse_b = band ? std::sqrt(se_before / static_cast<double>(band)) : 0;
  const double rmse_a = band ? std::sqrt(se_after / static_cast<double>(band)) : 0;
  const double drop = rmse_b > 0 ? 1 - rmse_a / rmse_b : 0;
  report(3, band > 0 && frac >= 0.9 && drop >= 0.5 && secs < 5, "bleeding-artifact recovery",
         std::to_string(band) + " band px, restored " + fmt(100 * frac, 4) + "%, band RMSE " + fmt(rmse_b, 4) + " -> " +
             fmt(rmse_a, 4) + " (drop " + fmt(100 * drop, 4) + "%), " + fmt(secs, 3) + " s");
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = synth::square_scene(128, 256);
  const auto scene = synth::render(spec);
  synth::CorruptionSpec cs;
  cs.seg_flip_rate = 0.1;
  cs.seed = 77;
  const auto noisy = synth::corrupt(scene.depth, scene.seg, cs);
  const auto r = refine::refine_segmentation_with_depth(noisy.seg, scene.seg, scene.depth, refine::RefineConfig{});
  const double secs = seconds_since(t0);
  std::size_t flipped = 0, still_wrong = 0;
  for (std::size_t i = 0; i < scene.seg.size(); ++i) {
    if (noisy.seg[i] == scene.seg[i]) continue;
    ++flipped;
    still_wrong += r.labels[i] != scene.seg[i];
  }
  const double reduction = flipped ? 1 - static_cast<double>(still_wrong) / static_cast<double>(flipped) : 0;
  report(4, flipped > 0 && reduction >= 0.7 && secs < 5, "label-noise recovery",
         std::to_string(flipped) + " flipped, " + std::to_string(still_wrong) + " still wrong, error reduced " +
             fmt(100 * reduction, 4) + "%, " + fmt(secs, 3) + " s");
}

void criterion5() {
  const auto spec = synth::square_scene(128, 256);
  const auto scene = synth::render(spec);
  const auto w = geometry::warp(scene.right, scene.depth, spec.pose(), spec.camera);
  double sum = 0;
  std::size_t n = 0;
  const std::size_t ch = scene.left.channels();
  for (std::size_t p = 0; p < scene.depth.size(); ++p) {
    if (!w.valid[p] || scene.occlusion[p]) continue;
    for (std::size_t k = 0; k < ch; ++k) sum += std::abs(w.values[p * ch + k] - scene.left[p * ch + k]);
    ++n;
  }
  const double mae = n ? sum / static_cast<double>(n * ch) : 1;

  std::mt19937_64 rng(5);
  const auto img = uniform<float>(rng, 48, 64, 3, 0, 1);
  const auto depth = uniform<float>(rng, 48, 64, 1, 0.5, 50);
  const auto id = geometry::warp(img, depth, geometry::Pose::identity(), geometry::Camera(60, 60, 31.5, 23.5));
  double worst = 0;
  for (std::size_t r = 1; r + 1 < 48; ++r)
    for (std::size_t c = 1; c + 1 < 64; ++c)
      for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(double(id.values(r, c, k)) - img(r, c, k)));
  report(5, mae < 0.02 && worst < 1e-6, "warp fidelity",
         "round-trip masked MAE " + fmt(mae) + " over " + std::to_string(n) + " px, identity max dev " + fmt(worst));
}

// Central-difference check; returns the worst relative error.
double gradient_error(const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
                      const Tensor<double>& g) {
  const double eps = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double dn = f(x);
    x[i] = keep;
    const double fd = (up - dn) / (2 * eps);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-3}));
  }
  return worst;
}

void criterion6() {
  std::mt19937_64 rng(6);
  bool ok = true;
  std::ostringstream det;
  const auto img = uniform<float>(rng, 8, 8, 3, 0, 1);
  const double pe_same = losses::photometric_loss(img, img, std::nullopt, 0.85);
  ok &= std::abs(pe_same) <= 1e-7;
  const double h = losses::hint_loss(DepthMap(1, 1, 1, 2.f), DepthMap(1, 1, 1, 1.f));
  ok &= std::abs(h - std::log(2.0)) <= 1e-7;
  det << "pe(I,I)=" << fmt(pe_same) << ", hint=" << fmt(h, 9);
  for (int k : {2, 19}) {
    const double ce = losses::cross_entropy(LabelMap(4, 4, 1, 0), ProbMap(4, 4, static_cast<std::size_t>(k), 1.f / k));
    ok &= std::abs(ce - std::log(static_cast<double>(k))) <= 1e-6;
    det << ", ce(K=" << k << ")-lnK=" << fmt(ce - std::log(static_cast<double>(k)), 3);
  }

  double worst = 0;
  for (double gamma : {0.0, 0.85}) {
    const auto t = uniform<double>(rng, 8, 8, 1, 0, 1), x = uniform<double>(rng, 8, 8, 1, 0, 1);
    worst = std::max(worst, gradient_error([&](const Tensor<double>& w) { return losses::photometric_loss(t, w, std::nullopt, gamma); },
                                           x, losses::photometric_loss_grad(t, x, std::nullopt, gamma)));
  }
  const auto tgt = uniform<double>(rng, 8, 8, 1, 1, 5), pred = uniform<double>(rng, 8, 8, 1, 1, 5);
  worst = std::max(worst, gradient_error([&](const Tensor<double>& p) { return losses::hint_loss(p, tgt); }, pred,
                                         losses::hint_loss_grad(pred, tgt)));
  const auto im = uniform<double>(rng, 8, 8, 3, 0, 1), disp = uniform<double>(rng, 8, 8, 1, 0.1, 0.9);
  worst = std::max(worst, gradient_error([&](const Tensor<double>& d) { return losses::smoothness_loss(d, im); }, disp,
                                         losses::smoothness_loss_grad(disp, im)));
  auto probs = uniform<double>(rng, 8, 8, 4, 0.1, 1);
  for (std::size_t i = 0; i < probs.pixels(); ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += probs[i * 4 + c];
    for (std::size_t c = 0; c < 4; ++c) probs[i * 4 + c] /= s;
  }
  const auto lab = labels(rng, 8, 8, 4);
  worst = std::max(worst, gradient_error([&](const Tensor<double>& p) { return losses::cross_entropy(lab, p); }, probs,
                                         losses::cross_entropy_grad(lab, probs)));
  ok &= worst <= 1e-4;
  det << ", worst FD rel err " << fmt(worst, 3);
  report(6, ok, "loss identities and gradients", det.str());
}

void criterion7() {
  std::mt19937_64 rng(7);
  bool ok = true;
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto g1 = uniform<float>(rng, 6, 7, 2, -3, 3), g2 = uniform<float>(rng, 6, 7, 2, -3, 3);
    const auto h1 = uniform<float>(rng, 6, 7, 2, -3, 3), h2 = uniform<float>(rng, 6, 7, 2, -3, 3);
    const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
    ok &= losses::combine_shared_gradients(g1, h1, 1.0) == g1;
    ok &= losses::combine_shared_gradients(g1, h1, 0.0) == h1;
    ok &= losses::combine_shared_gradients(g1, g1, 0.5) == g1;
    const auto a1 = uniform<double>(rng, 6, 7, 2, -3, 3), a2 = uniform<double>(rng, 6, 7, 2, -3, 3);
    const auto b1 = uniform<double>(rng, 6, 7, 2, -3, 3), b2 = uniform<double>(rng, 6, 7, 2, -3, 3);
    Tensor<double> as(6, 7, 2), bs(6, 7, 2);
    for (std::size_t i = 0; i < as.size(); ++i) as[i] = a1[i] + a2[i], bs[i] = b1[i] + b2[i];
    const auto lhs = losses::combine_shared_gradients(as, bs, alpha);
    const auto p = losses::combine_shared_gradients(a1, b1, alpha), q = losses::combine_shared_gradients(a2, b2, alpha);
    for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, std::abs(lhs[i] - (p[i] + q[i])));
  }
  ok &= worst <= 1e-7;
  const bool half = losses::combine_shared_gradients(Image(1, 1, 1, 2.f), Image(1, 1, 1, 4.f), 0.5)[0] == 3.f;
  report(7, ok && half, "gradient scaling", "endpoints exact, combine(g,g,0.5)=g, linearity worst abs " + fmt(worst, 3));
}

void criterion8() {
  bool ok = true;
  std::mt19937_64 rng(8);
  const auto gt = uniform<float>(rng, 10, 10, 1, 1, 79);
  const auto same = metrics::evaluate_depth(gt, gt, std::nullopt);
  ok &= same.abs_rel == 0 && same.sq_rel == 0 && same.rmse == 0 && same.rmse_log == 0 && same.delta1 == 1 &&
        same.delta2 == 1 && same.delta3 == 1;
  const auto hf = metrics::evaluate_depth(DepthMap(1, 2, 1, {11.f, 18.f}), DepthMap(1, 2, 1, {10.f, 20.f}), std::nullopt);
  ok &= std::abs(hf.abs_rel - 0.1) <= 1e-6 && std::abs(hf.sq_rel - 0.15) <= 1e-6 &&
        std::abs(hf.rmse - std::sqrt(2.5)) <= 1e-6 && hf.delta1 == 1;
  int mono = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto g = uniform<float>(rng, 5, 5, 1, 0.5, 100), p = uniform<float>(rng, 5, 5, 1, 0.5, 100);
    const auto r = metrics::evaluate_depth(p, g, std::nullopt);
    mono += r.delta1 <= r.delta2 && r.delta2 <= r.delta3;
  }
  ok &= mono == 1000;
  const DepthMap capped(1, 5, 1, {10.f, 79.f, 80.f, 80.5f, 120.f});
  const auto cr = metrics::evaluate_depth(capped, capped, std::nullopt, 80);
  ok &= cr.valid_pixel_count == 3;
  report(8, ok, "metrics",
         "identity exact, fixture abs_rel " + fmt(hf.abs_rel, 9) + " sq_rel " + fmt(hf.sq_rel, 9) + " rmse " +
             fmt(hf.rmse, 9) + ", delta monotone " + std::to_string(mono) + "/1000, cap keeps " +
             std::to_string(cr.valid_pixel_count) + "/5");
}

void criterion9() {
  const auto& t = arch::default_tables();
  const std::int64_t sconv3 = arch::param_count(t.level("l4").back(), 128);
  bool decreasing = true;
  for (auto conv : {arch::SharingConvention::literal, arch::SharingConvention::entry_shared})
    for (const char* enc : {"resnet18", "resnet50"}) {
      std::int64_t prev = INT64_MAX;
      for (const char* lvl : arch::kLevels) {
        const auto s = arch::branch_param_totals(t, lvl, enc, conv).seg_specific_params;
        decreasing &= s < prev;
        prev = s;
      }
    }
  auto delta = [&](arch::SharingConvention c) {
    return static_cast<double>(arch::branch_param_totals(t, "l3", "resnet50", c, 19).seg_specific_params -
                               arch::branch_param_totals(t, "l4", "resnet50", c, 19).seg_specific_params) / 1e6;
  };
  const double d_entry = delta(arch::SharingConvention::entry_shared);
  const double d_literal = delta(arch::SharingConvention::literal);
  const double rel = std::abs(d_entry - 0.032) / 0.032;
  report(9, sconv3 == 129 && decreasing && rel <= 0.15, "architecture calculators",
         "sconv3 " + std::to_string(sconv3) + ", seg-specific strictly decreasing l0..l4, l3->l4 delta " +
             fmt(d_entry, 5) + "M (entry-shared, " + fmt(100 * rel, 3) + "% off 0.032M; literal rows " +
             fmt(d_literal, 5) + "M)");
}

void criterion10() {
  std::mt19937_64 rng(10);
  const auto dir = fs::temp_directory_path() / "semhint_acceptance_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::uniform_int_distribution<std::size_t> dim(1, 40), ch(1, 4);
  int stn_ok = 0, pnm_ok = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t h = dim(rng), w = dim(rng), c = ch(rng);
    const auto path = dir / "t.stn";
    bool same = false;
    switch (t % 3) {
      case 0: {
        Image x(h, w, c);
        for (auto& v : x) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
        io::save_tensor(x, path);
        const auto y = io::load_tensor_as<float>(path);
        same = y.same_shape(x) && std::memcmp(x.data().data(), y.data().data(), x.size() * 4) == 0;
        break;
      }
      case 1: {
        LabelMap x(h, w, c);
        for (auto& v : x) v = static_cast<std::int32_t>(rng());
        io::save_tensor(x, path);
        same = io::load_tensor_as<std::int32_t>(path) == x;
        break;
      }
      default: {
        ByteImage x(h, w, c);
        for (auto& v : x) v = static_cast<std::uint8_t>(rng());
        io::save_tensor(x, path);
        same = io::load_tensor_as<std::uint8_t>(path) == x;
      }
    }
    stn_ok += same;
  }
  for (int t = 0; t < 100; ++t) {
    ByteImage x(dim(rng), dim(rng), t % 2 ? 3 : 1);
    for (auto& v : x) v = static_cast<std::uint8_t>(rng());
    io::write_pgm_ppm(x, dir / "t.pnm");
    pnm_ok += io::read_pgm_ppm(dir / "t.pnm") == x;
  }
  fs::remove_all(dir);
  report(10, stn_ok == 500 && pnm_ok == 100, "format round-trips",
         "STN1 " + std::to_string(stn_ok) + "/500, PGM/PPM " + std::to_string(pnm_ok) + "/100 bit-exact");
}

}  // namespace

int main() {
  const std::function<void()> criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                            criterion6, criterion7, criterion8, criterion9, criterion10};
  for (std::size_t i = 0; i < std::size(criteria); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, "criterion threw", e.what());
    }
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
