#pragma once

// Command-line front end. run() is the whole program minus process setup so
// tests can drive it in-process.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semhint/semhint.hpp"

namespace semhint::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2 };

/// --threads wins, then SEMHINT_THREADS, then 0 (all cores).
inline unsigned thread_count(std::optional<unsigned> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SEMHINT_THREADS")) {
    try {
      std::size_t used = 0;
      const long v = std::stol(env, &used);
      if (used == std::string(env).size() && v >= 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
    throw Error("SEMHINT_THREADS must be a non-negative integer");
  }
  return 0;
}

namespace detail {

inline std::optional<Mask> optional_mask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return io::load_mask(path);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

// Outputs are staged in memory and only written once every input has been
// read and every computation has succeeded.
class Outputs {
 public:
  template <class T>
  void tensor(const fs::path& p, const Tensor<T>& t) { files_.emplace_back(p, io::encode_tensor(t)); }
  void mask(const fs::path& p, const Mask& m) { tensor(p, m.to_tensor()); }
  void pnm(const fs::path& p, const ByteImage& img) { files_.emplace_back(p, io::encode_pnm(img)); }
  void text(const fs::path& p, std::string s) { files_.emplace_back(p, std::move(s)); }
  void commit() const {
    for (const auto& [p, bytes] : files_) io::atomic_write(p, bytes);
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

inline refine::RefineConfig refine_config(std::optional<float> th, int radius, int max_iter, unsigned threads) {
  refine::RefineConfig cfg;
  cfg.depth_threshold = th;
  cfg.radius = radius;
  cfg.max_iterations = max_iter;
  cfg.threads = threads;
  cfg.validate();
  return cfg;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out_dir;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto cfg = synth::read_config(a.config);
  const auto scene = synth::render(cfg.scene);
  const auto noisy = synth::corrupt(scene.depth, scene.seg, cfg.corruption);
  const fs::path dir(a.out_dir);
  if (!fs::is_directory(dir)) throw Error("output directory does not exist: " + a.out_dir);

  detail::Outputs o;
  o.tensor(dir / "left.stn", scene.left);
  o.tensor(dir / "right.stn", scene.right);
  o.tensor(dir / "depth.stn", scene.depth);
  o.tensor(dir / "seg.stn", scene.seg);
  o.mask(dir / "occlusion.stn", scene.occlusion);
  o.tensor(dir / "noisy_depth.stn", noisy.depth);
  o.tensor(dir / "noisy_seg.stn", noisy.seg);
  o.text(dir / "rig.txt", geometry::format_rig(cfg.scene.camera, cfg.scene.pose()));
  const char* ext = cfg.scene.channels == 3 ? ".ppm" : ".pgm";
  if (cfg.scene.channels == 1 || cfg.scene.channels == 3) {
    o.pnm(dir / (std::string("left") + ext), to_bytes(scene.left));
    o.pnm(dir / (std::string("right") + ext), to_bytes(scene.right));
  }
  o.pnm(dir / "depth.pgm", io::preview(scene.depth));
  o.pnm(dir / "seg.pgm", io::preview(tensor_cast<float>(scene.seg)));
  o.pnm(dir / "occlusion.pgm", io::preview(tensor_cast<float>(scene.occlusion.to_tensor())));
  o.commit();
  out << "size " << cfg.scene.height << "x" << cfg.scene.width << "\n"
      << "objects " << cfg.scene.objects.size() << "\n"
      << "occluded " << scene.occlusion.count() << "\n";
  return kOk;
}

struct WarpArgs {
  std::string source, depth, rig, out, valid_out;
};

inline int cmd_warp(const WarpArgs& a, std::ostream& out) {
  const auto src = io::load_tensor_as<float>(a.source);
  const auto depth = io::load_tensor_as<float>(a.depth);
  const auto rig = geometry::read_rig(a.rig);
  const auto w = geometry::warp(src, depth, rig.pose, rig.camera);
  detail::Outputs o;
  o.tensor(a.out, w.values);
  if (!a.valid_out.empty()) o.mask(a.valid_out, w.valid);
  o.commit();
  out << "valid " << w.valid.count() << " of " << w.valid.pixels() << "\n";
  return kOk;
}

struct RefineSegArgs {
  std::string y, yhat, depth, out;
  std::optional<float> th;
  int radius = 1, max_iter = 512;
  bool sequential = false;
};

inline int cmd_refine_seg(const RefineSegArgs& a, unsigned threads, std::ostream& out) {
  const auto y = io::load_tensor_as<std::int32_t>(a.y);
  const auto yhat = io::load_tensor_as<std::int32_t>(a.yhat);
  const auto depth = io::load_tensor_as<float>(a.depth);
  const auto cfg = detail::refine_config(a.th, a.radius, a.max_iter, threads);
  const auto r = a.sequential ? refine::refine_segmentation_with_depth_sequential(y, yhat, depth, cfg)
                              : refine::refine_segmentation_with_depth(y, yhat, depth, cfg);
  detail::Outputs o;
  o.tensor(a.out, r.labels);
  o.commit();
  out << "relabeled " << r.stats.changed << "\n"
      << "promoted " << r.stats.promoted << "\n"
      << "unresolved " << r.stats.unresolved << "\n"
      << "iterations " << r.stats.iterations << "\n"
      << "threshold " << detail::fmt(r.threshold) << "\n";
  return kOk;
}

struct RefineDepthArgs {
  std::string depth, seg, out;
  // segmentations given directly
  std::string yt, yst, valid;
  // or computed from images with the reference segmenter
  std::string target, source, rig, ref_seg;
  double tol = 1e-3;
  int radius = 1, max_iter = 512;
  bool sequential = false;
};

inline int cmd_refine_depth(const RefineDepthArgs& a, unsigned threads, std::ostream& out) {
  const bool direct = !a.yt.empty() || !a.yst.empty();
  const bool images = !a.target.empty() || !a.source.empty() || !a.rig.empty() || !a.ref_seg.empty();
  if (direct == images) throw CLI::ValidationError("refine-depth", "give either --yt/--yst or --target/--source/--rig/--ref-seg");
  if (direct && (a.yt.empty() || a.yst.empty())) throw CLI::ValidationError("refine-depth", "--yt and --yst go together");
  if (images && (a.target.empty() || a.source.empty() || a.rig.empty() || a.ref_seg.empty()))
    throw CLI::ValidationError("refine-depth", "--target, --source, --rig and --ref-seg go together");

  const auto depth = io::load_tensor_as<float>(a.depth);
  const auto seg = io::load_tensor_as<std::int32_t>(a.seg);
  const auto cfg = detail::refine_config(std::nullopt, a.radius, a.max_iter, threads);

  LabelMap yt(1, 1), yst(1, 1);
  Mask valid(depth.height(), depth.width(), true);
  if (direct) {
    yt = io::load_tensor_as<std::int32_t>(a.yt);
    yst = io::load_tensor_as<std::int32_t>(a.yst);
    if (!a.valid.empty()) valid = io::load_mask(a.valid);
  } else {
    const auto target = io::load_tensor_as<float>(a.target);
    const auto source = io::load_tensor_as<float>(a.source);
    const auto rig = geometry::read_rig(a.rig);
    synth::ReferenceSegmenter seg_fn(target, io::load_tensor_as<std::int32_t>(a.ref_seg), a.tol);
    auto in = refine::consistency_inputs(depth, target, source, rig.pose, rig.camera, seg_fn);
    yt = std::move(in.seg_target);
    yst = std::move(in.seg_warped);
    valid = std::move(in.warp_valid);
  }
  const auto states =
      refine::split_confidence_by_consistency(depth, seg, yt, yst, valid, refine::ClassSet::from_labels(seg));
  const auto r = a.sequential ? refine::refine_depth_with_segmentation_sequential(depth, states, cfg)
                              : refine::refine_depth_with_segmentation(depth, states, cfg);
  detail::Outputs o;
  o.tensor(a.out, r.depth);
  o.commit();
  std::size_t unreliable = 0;
  for (const auto& s : states) unreliable += s.state.unreliable.count();
  out << "unreliable " << unreliable << "\n"
      << "changed " << r.stats.changed << "\n"
      << "unresolved " << r.stats.unresolved << "\n"
      << "iterations " << r.stats.iterations << "\n";
  return kOk;
}

struct LossArgs {
  std::string kind;
  std::string target, warped, mask, pred, disp, image, labels, probs, weights;
  double gamma = 0.85;
  bool phase2 = false;
  double pe = 0, hint = 0, rfd = 0, smooth = 0, ps = 0, rfs = 0;
};

inline int cmd_loss(const LossArgs& a, std::ostream& out) {
  auto need = [&](const std::string& v, const char* flag) {
    if (v.empty()) throw CLI::ValidationError("loss " + a.kind, std::string(flag) + " is required");
  };
  double v = 0;
  if (a.kind == "pe") {
    need(a.target, "--target"), need(a.warped, "--warped");
    v = losses::photometric_loss(io::load_tensor_as<float>(a.target), io::load_tensor_as<float>(a.warped),
                                 detail::optional_mask(a.mask), a.gamma);
  } else if (a.kind == "hint") {
    need(a.pred, "--pred"), need(a.target, "--target");
    v = losses::hint_loss(io::load_tensor_as<float>(a.pred), io::load_tensor_as<float>(a.target),
                          detail::optional_mask(a.mask));
  } else if (a.kind == "smooth") {
    need(a.disp, "--disp"), need(a.image, "--image");
    v = losses::smoothness_loss(io::load_tensor_as<float>(a.disp), io::load_tensor_as<float>(a.image));
  } else if (a.kind == "ce") {
    need(a.labels, "--labels"), need(a.probs, "--probs");
    v = losses::cross_entropy(io::load_tensor_as<std::int32_t>(a.labels), io::load_tensor_as<float>(a.probs));
  } else if (a.kind == "total") {
    losses::LossWeights w = a.phase2 ? losses::LossWeights::phase2() : losses::LossWeights::phase1();
    if (!a.weights.empty()) {
      std::ifstream f(a.weights);
      if (!f) throw Error("cannot open " + a.weights);
      w = losses::LossWeights::parse(f);
    }
    v = losses::total_loss(losses::DepthTerms{a.pe, a.hint, a.rfd, a.smooth}, losses::SegTerms{a.ps, a.rfs}, w);
  } else {
    throw CLI::ValidationError("loss", "kind must be pe, hint, smooth, ce or total");
  }
  out << detail::fmt(v) << "\n";
  return kOk;
}

struct EvalArgs {
  std::string pred, gt, mask;
  double cap = metrics::kDefaultDepthCap;
  bool header = false;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto r = metrics::evaluate_depth(io::load_tensor_as<float>(a.pred), io::load_tensor_as<float>(a.gt),
                                         detail::optional_mask(a.mask), a.cap);
  if (a.header) out << metrics::DepthEvalResult::csv_header << "\n";
  out << r.csv_row() << "\n";
  return kOk;
}

struct PpArgs {
  std::string pred, pred_flipped, out;
};

inline int cmd_pp(const PpArgs& a, std::ostream& out) {
  const auto r = geometry::flip_postprocess(io::load_tensor_as<float>(a.pred), io::load_tensor_as<float>(a.pred_flipped));
  detail::Outputs o;
  o.tensor(a.out, r);
  o.commit();
  out << "wrote " << a.out << "\n";
  return kOk;
}

struct ArchArgs {
  std::string level = "l4", encoder = "resnet18", convention = "entry-shared", tables;
  std::size_t height = 192, width = 640;
  std::optional<int> classes;
};

inline int cmd_arch(const ArchArgs& a, std::ostream& out) {
  const auto conv = arch::parse_convention(a.convention);
  const arch::DecoderTables tables = a.tables.empty() ? arch::default_tables() : arch::read_tables(a.tables);
  out << arch::report(tables, a.level, a.encoder, a.height, a.width, conv, a.classes);
  return kOk;
}

// ---------------------------------------------------------------------------

/// argv[0] excluded.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"semhint: mutual depth / segmentation refinement toolkit"};
  app.require_subcommand(1);
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "worker threads (0 = all cores; SEMHINT_THREADS if unset)");

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "render a synthetic stereo scene and its corruptions");
  c_synth->add_option("--config", sy.config, "scene config (key = value)")->required();
  c_synth->add_option("--out", sy.out_dir, "existing output directory")->required();

  WarpArgs wa;
  auto* c_warp = app.add_subcommand("warp", "warp a source image into the target view");
  c_warp->add_option("--source", wa.source)->required();
  c_warp->add_option("--depth", wa.depth, "target-view depth")->required();
  c_warp->add_option("--rig", wa.rig, "intrinsics + target-to-source pose")->required();
  c_warp->add_option("--out", wa.out)->required();
  c_warp->add_option("--valid-out", wa.valid_out, "optional validity mask output");

  RefineSegArgs rs;
  auto* c_rseg = app.add_subcommand("refine-seg", "relabel disagreeing pixels by depth proximity");
  c_rseg->add_option("--y", rs.y, "pseudo labels")->required();
  c_rseg->add_option("--yhat", rs.yhat, "predicted labels")->required();
  c_rseg->add_option("--depth", rs.depth, "predicted depth")->required();
  c_rseg->add_option("--out", rs.out)->required();
  c_rseg->add_option("--th", rs.th, "depth threshold (default 0.05 * median confident depth)");
  c_rseg->add_option("--radius", rs.radius, "neighborhood radius")->capture_default_str();
  c_rseg->add_option("--max-iter", rs.max_iter)->capture_default_str();
  c_rseg->add_flag("--sequential", rs.sequential, "use the reference implementation");

  RefineDepthArgs rd;
  auto* c_rdep = app.add_subcommand("refine-depth", "clip inconsistent depths to same-class neighbors");
  c_rdep->add_option("--depth", rd.depth)->required();
  c_rdep->add_option("--seg", rd.seg, "refined labels")->required();
  c_rdep->add_option("--out", rd.out)->required();
  c_rdep->add_option("--yt", rd.yt, "segmentation of the target image");
  c_rdep->add_option("--yst", rd.yst, "segmentation of the warped source");
  c_rdep->add_option("--valid", rd.valid, "warp validity mask (with --yt/--yst)");
  c_rdep->add_option("--target", rd.target, "target image");
  c_rdep->add_option("--source", rd.source, "source image");
  c_rdep->add_option("--rig", rd.rig);
  c_rdep->add_option("--ref-seg", rd.ref_seg, "labels for the reference segmenter");
  c_rdep->add_option("--tol", rd.tol, "reference segmenter intensity tolerance")->capture_default_str();
  c_rdep->add_option("--radius", rd.radius)->capture_default_str();
  c_rdep->add_option("--max-iter", rd.max_iter)->capture_default_str();
  c_rdep->add_flag("--sequential", rd.sequential);

  LossArgs lo;
  auto* c_loss = app.add_subcommand("loss", "evaluate one loss term");
  c_loss->add_option("kind", lo.kind, "pe | hint | smooth | ce | total")
      ->required()
      ->check(CLI::IsMember({"pe", "hint", "smooth", "ce", "total"}));
  c_loss->add_option("--target", lo.target);
  c_loss->add_option("--warped", lo.warped);
  c_loss->add_option("--mask", lo.mask);
  c_loss->add_option("--pred", lo.pred);
  c_loss->add_option("--disp", lo.disp);
  c_loss->add_option("--image", lo.image);
  c_loss->add_option("--labels", lo.labels);
  c_loss->add_option("--probs", lo.probs);
  c_loss->add_option("--gamma", lo.gamma)->capture_default_str();
  c_loss->add_option("--weights", lo.weights, "weights file (key = value)");
  c_loss->add_flag("--phase2", lo.phase2, "fine-tuning phase weights");
  c_loss->add_option("--pe", lo.pe);
  c_loss->add_option("--hint", lo.hint);
  c_loss->add_option("--rfd", lo.rfd);
  c_loss->add_option("--smooth", lo.smooth);
  c_loss->add_option("--ps", lo.ps);
  c_loss->add_option("--rfs", lo.rfs);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "depth metrics as one CSV row");
  c_eval->add_option("--pred", ev.pred)->required();
  c_eval->add_option("--gt", ev.gt)->required();
  c_eval->add_option("--mask", ev.mask, "ground-truth validity mask");
  c_eval->add_option("--cap", ev.cap, "max depth (m)")->capture_default_str();
  c_eval->add_flag("--header", ev.header, "print the column names first");

  PpArgs pp;
  auto* c_pp = app.add_subcommand("pp", "flip post-processing");
  c_pp->add_option("--pred", pp.pred)->required();
  c_pp->add_option("--pred-flipped", pp.pred_flipped, "prediction on the mirrored input")->required();
  c_pp->add_option("--out", pp.out)->required();

  ArchArgs ar;
  auto* c_arch = app.add_subcommand("arch", "decoder shapes and parameter counts");
  c_arch->add_option("--level", ar.level)->check(CLI::IsMember({"l0", "l1", "l2", "l3", "l4"}))->capture_default_str();
  c_arch->add_option("--encoder", ar.encoder)->capture_default_str();
  c_arch->add_option("--height", ar.height)->capture_default_str();
  c_arch->add_option("--width", ar.width)->capture_default_str();
  c_arch->add_option("--classes", ar.classes, "segmentation head width");
  c_arch->add_option("--convention", ar.convention, "literal | entry-shared")->capture_default_str();
  c_arch->add_option("--tables", ar.tables, "alternative table manifest");

  std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 wants reversed order
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const unsigned nt = thread_count(threads);
    if (*c_synth) return cmd_synth(sy, out);
    if (*c_warp) return cmd_warp(wa, out);
    if (*c_rseg) return cmd_refine_seg(rs, nt, out);
    if (*c_rdep) return cmd_refine_depth(rd, nt, out);
    if (*c_loss) return cmd_loss(lo, out);
    if (*c_eval) return cmd_eval(ev, out);
    if (*c_pp) return cmd_pp(pp, out);
    if (*c_arch) return cmd_arch(ar, out);
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace semhint::cli
