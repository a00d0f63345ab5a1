#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "semhint/arch_manifest.hpp"
#include "semhint/tensor.hpp"

namespace semhint::arch {

enum class Activation { ELU, ReLU, Sigmoid, Softmax, none };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::ELU: return "ELU";
    case Activation::ReLU: return "ReLU";
    case Activation::Sigmoid: return "Sigmoid";
    case Activation::Softmax: return "Softmax";
    case Activation::none: return "-";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "ELU") return Activation::ELU;
  if (s == "ReLU") return Activation::ReLU;
  if (s == "Sigmoid") return Activation::Sigmoid;
  if (s == "Softmax") return Activation::Softmax;
  if (s == "-" || s == "none") return Activation::none;
  throw Error("unknown activation '" + s + "'");
}

struct LayerInput {
  std::string source;
  int upsample = 1;
  bool operator==(const LayerInput&) const = default;
};

struct LayerSpec {
  std::string name;
  std::vector<LayerInput> inputs;
  int kernel = 3;
  int stride = 1;
  int out_channels = 1;
  bool batch_norm = false;
  Activation activation = Activation::none;

  LayerSpec() = default;
  LayerSpec(std::string n, std::vector<LayerInput> in, int k, int s, int out, bool bn, Activation act)
      : name(std::move(n)), inputs(std::move(in)), kernel(k), stride(s), out_channels(out), batch_norm(bn),
        activation(act) {
    validate();
  }

  void validate() const {
    if (name.empty()) throw Error("layer without a name");
    if (kernel != 1 && kernel != 3) throw Error("layer " + name + ": kernel must be 1 or 3");
    if (stride != 1) throw Error("layer " + name + ": stride must be 1");
    if (out_channels < 1) throw Error("layer " + name + ": out_channels must be >= 1");
    if (inputs.empty()) throw Error("layer " + name + ": no inputs");
    for (const auto& in : inputs)
      if (in.upsample < 1 || (in.upsample & (in.upsample - 1)) != 0)
        throw Error("layer " + name + ": upsample factor must be a power of two");
  }

  /// Same convolution applied to the same inputs.
  bool same_signature(const LayerSpec& o) const {
    return inputs == o.inputs && kernel == o.kernel && stride == o.stride && out_channels == o.out_channels &&
           batch_norm == o.batch_norm && activation == o.activation;
  }
};

/// k^2 * in * out weights, out biases, plus scale and shift per channel with BN.
inline std::int64_t param_count(const LayerSpec& spec, std::int64_t in_channels) {
  spec.validate();
  if (in_channels < 1) throw Error("in_channels must be >= 1");
  const std::int64_t k = spec.kernel, out = spec.out_channels;
  return k * k * in_channels * out + out + (spec.batch_norm ? 2 * out : 0);
}

struct EncoderSpec {
  std::string name;
  std::array<int, 5> channels{};  // econv1..econv5
  std::int64_t params = 0;
};

inline constexpr std::array<const char*, 5> kLevels = {"l0", "l1", "l2", "l3", "l4"};

struct DecoderTables {
  std::map<std::string, EncoderSpec> encoders;
  std::vector<LayerSpec> depth;
  std::map<std::string, std::vector<LayerSpec>> levels;

  const EncoderSpec& encoder(const std::string& n) const {
    auto it = encoders.find(n);
    if (it == encoders.end()) throw Error("unknown encoder '" + n + "'");
    return it->second;
  }
  const std::vector<LayerSpec>& level(const std::string& n) const {
    auto it = levels.find(n);
    if (it == levels.end()) throw Error("unknown sharing level '" + n + "'");
    return it->second;
  }
};

namespace detail {

inline bool is_encoder_feature(const std::string& s) {
  return s.size() == 6 && s.starts_with("econv") && s[5] >= '1' && s[5] <= '5';
}
inline int encoder_level(const std::string& s) { return s[5] - '0'; }

inline const LayerSpec* find_layer(const std::vector<LayerSpec>& v, const std::string& n) {
  for (const auto& l : v)
    if (l.name == n) return &l;
  return nullptr;
}

inline LayerInput parse_input(const std::string& tok, const std::string& layer) {
  LayerInput in;
  if (tok.empty()) throw Error("layer " + layer + ": empty input");
  if (tok[0] != '^') {
    in.source = tok;
    return in;
  }
  const auto colon = tok.find(':');
  if (colon == std::string::npos) {
    in.source = tok.substr(1);
    in.upsample = 2;
  } else {
    try {
      std::size_t used = 0;
      in.upsample = std::stoi(tok.substr(1, colon - 1), &used);
      if (used != colon - 1) throw Error("");
    } catch (...) {
      throw Error("layer " + layer + ": bad upsample factor in '" + tok + "'");
    }
    in.source = tok.substr(colon + 1);
  }
  if (in.source.empty()) throw Error("layer " + layer + ": empty input");
  return in;
}

// Inputs must name econv features or layers defined earlier; this also rules
// out cycles.
inline void check_references(const DecoderTables& t) {
  std::set<std::string> seen;
  for (const auto& l : t.depth) {
    for (const auto& in : l.inputs)
      if (!is_encoder_feature(in.source) && !seen.count(in.source))
        throw Error("layer " + l.name + " references undefined input " + in.source);
    if (!seen.insert(l.name).second) throw Error("duplicate layer " + l.name);
  }
  for (const auto& [lvl, layers] : t.levels) {
    std::set<std::string> local;
    for (const auto& l : layers) {
      for (const auto& in : l.inputs)
        if (!is_encoder_feature(in.source) && !local.count(in.source) && !seen.count(in.source))
          throw Error("layer " + l.name + " (" + lvl + ") references undefined input " + in.source);
      if (seen.count(l.name) || !local.insert(l.name).second) throw Error("duplicate layer " + l.name);
    }
  }
}

}  // namespace detail

inline DecoderTables parse_tables(std::istream& is) {
  DecoderTables t;
  std::vector<LayerSpec>* current = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    auto fail = [&](const std::string& m) { return Error("tables line " + std::to_string(lineno) + ": " + m); };
    if (kw == "encoder") {
      EncoderSpec e;
      if (!(ls >> e.name)) throw fail("encoder needs a name");
      for (auto& c : e.channels)
        if (!(ls >> c) || c < 1) throw fail("encoder needs five positive widths");
      if (!(ls >> e.params) || e.params < 1) throw fail("encoder needs a parameter count");
      t.encoders[e.name] = e;
    } else if (kw == "table") {
      std::string n;
      if (!(ls >> n)) throw fail("table needs a name");
      if (n == "depth") {
        current = &t.depth;
      } else {
        if (std::find(kLevels.begin(), kLevels.end(), n) == kLevels.end()) throw fail("unknown table " + n);
        current = &t.levels[n];
      }
      if (!current->empty()) throw fail("table " + n + " declared twice");
    } else if (kw == "layer") {
      if (!current) throw fail("layer outside a table");
      std::string name, inputs, bn, act;
      int k = 0, s = 0, out = 0;
      if (!(ls >> name >> inputs >> k >> s >> out >> bn >> act)) throw fail("layer needs 7 fields");
      if (bn != "bn" && bn != "-") throw fail("batch-norm field must be 'bn' or '-'");
      std::vector<LayerInput> in;
      std::istringstream is2(inputs);
      for (std::string tok; std::getline(is2, tok, ',');) in.push_back(detail::parse_input(tok, name));
      try {
        current->emplace_back(name, std::move(in), k, s, out, bn == "bn", parse_activation(act));
      } catch (const Error& e) {
        throw fail(e.what());
      }
    } else {
      throw fail("unknown keyword " + kw);
    }
    std::string extra;
    if (ls >> extra) throw fail("trailing field " + extra);
  }
  if (t.depth.empty()) throw Error("tables: missing depth table");
  for (const char* l : kLevels)
    if (!t.levels.count(l) || t.levels[l].empty()) throw Error(std::string("tables: missing table ") + l);
  detail::check_references(t);
  return t;
}

inline DecoderTables parse_tables(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_tables(is);
}

inline DecoderTables read_tables(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  return parse_tables(f);
}

inline const DecoderTables& default_tables() {
  static const DecoderTables t = parse_tables(kDefaultDecoderTables);
  return t;
}

/// How seg-table layers that duplicate a depth layer are counted.
///  literal: every seg-table row is its own layer.
///  entry_shared: at partial sharing levels, a seg row with the same
///    signature as a depth row fed by decoder features is that depth layer.
enum class SharingConvention { literal, entry_shared };

inline SharingConvention parse_convention(const std::string& s) {
  if (s == "literal") return SharingConvention::literal;
  if (s == "entry-shared" || s == "entry_shared") return SharingConvention::entry_shared;
  throw Error("unknown convention '" + s + "'");
}
inline const char* convention_name(SharingConvention c) {
  return c == SharingConvention::literal ? "literal" : "entry-shared";
}

struct SharingLevel {
  std::string level;
  std::vector<std::string> shared_layers;  // depth-decoder layers the seg branch consumes
  std::vector<LayerSpec> branch_layers;    // seg-specific
  std::vector<std::string> aliased;        // seg rows folded into depth layers
};

inline SharingLevel sharing_level(const DecoderTables& t, const std::string& level,
                                  SharingConvention conv = SharingConvention::entry_shared) {
  const auto& rows = t.level(level);
  SharingLevel out;
  out.level = level;
  std::map<std::string, std::string> rename;  // seg name -> depth name
  for (const auto& row : rows) {
    LayerSpec l = row;
    for (auto& in : l.inputs)
      if (auto it = rename.find(in.source); it != rename.end()) in.source = it->second;
    if (conv == SharingConvention::entry_shared) {
      const bool decoder_fed = std::all_of(l.inputs.begin(), l.inputs.end(), [&](const LayerInput& in) {
        return detail::find_layer(t.depth, in.source) != nullptr;
      });
      const LayerSpec* twin = nullptr;
      if (decoder_fed)
        for (const auto& d : t.depth)
          if (d.same_signature(l)) twin = &d;
      if (twin) {
        rename[l.name] = twin->name;
        out.aliased.push_back(l.name);
        continue;
      }
    }
    out.branch_layers.push_back(std::move(l));
  }

  // Shared layers are the depth layers reachable from the seg branch.
  std::set<std::string> reach;
  std::vector<std::string> stack;
  for (const auto& l : out.branch_layers)
    for (const auto& in : l.inputs)
      if (detail::find_layer(t.depth, in.source)) stack.push_back(in.source);
  while (!stack.empty()) {
    const std::string n = stack.back();
    stack.pop_back();
    if (!reach.insert(n).second) continue;
    for (const auto& in : detail::find_layer(t.depth, n)->inputs)
      if (detail::find_layer(t.depth, in.source)) stack.push_back(in.source);
  }
  for (const auto& d : t.depth)
    if (reach.count(d.name)) out.shared_layers.push_back(d.name);
  return out;
}

namespace detail {

struct Resolver {
  const DecoderTables& t;
  const EncoderSpec& enc;
  std::map<std::string, int> channels;

  int of(const std::string& n) const {
    if (is_encoder_feature(n)) return enc.channels[static_cast<std::size_t>(encoder_level(n) - 1)];
    auto it = channels.find(n);
    if (it == channels.end()) throw Error("unresolved layer " + n);
    return it->second;
  }
  int in_channels(const LayerSpec& l) const {
    int c = 0;
    for (const auto& in : l.inputs) c += of(in.source);
    return c;
  }
};

// Softmax head takes the class count when one is given.
inline LayerSpec with_classes(LayerSpec l, std::optional<int> classes) {
  if (classes && l.activation == Activation::Softmax) {
    if (*classes < 1) throw Error("class count must be >= 1");
    l.out_channels = *classes;
  }
  return l;
}

}  // namespace detail

struct BranchTotals {
  std::int64_t shared_decoder_params = 0;
  std::int64_t seg_specific_params = 0;
};

inline BranchTotals branch_param_totals(const DecoderTables& t, const std::string& level, const std::string& encoder,
                                        SharingConvention conv = SharingConvention::entry_shared,
                                        std::optional<int> num_classes = std::nullopt) {
  const SharingLevel sl = sharing_level(t, level, conv);
  detail::Resolver r{t, t.encoder(encoder), {}};
  BranchTotals out;
  std::set<std::string> shared(sl.shared_layers.begin(), sl.shared_layers.end());
  for (const auto& d : t.depth) {
    const auto p = param_count(d, r.in_channels(d));
    r.channels[d.name] = d.out_channels;
    if (shared.count(d.name)) out.shared_decoder_params += p;
  }
  for (const auto& row : sl.branch_layers) {
    const LayerSpec l = detail::with_classes(row, num_classes);
    out.seg_specific_params += param_count(l, r.in_channels(l));
    r.channels[l.name] = l.out_channels;
  }
  return out;
}

/// Parameters of the depth decoder, all rows including the disparity heads.
inline std::int64_t depth_decoder_params(const DecoderTables& t, const std::string& encoder) {
  detail::Resolver r{t, t.encoder(encoder), {}};
  std::int64_t sum = 0;
  for (const auto& d : t.depth) {
    sum += param_count(d, r.in_channels(d));
    r.channels[d.name] = d.out_channels;
  }
  return sum;
}

/// Encoder + depth decoder + seg-specific layers.
inline std::int64_t model_params(const DecoderTables& t, const std::string& level, const std::string& encoder,
                                 SharingConvention conv = SharingConvention::entry_shared,
                                 std::optional<int> num_classes = std::nullopt) {
  return t.encoder(encoder).params + depth_decoder_params(t, encoder) +
         branch_param_totals(t, level, encoder, conv, num_classes).seg_specific_params;
}

struct LayerShape {
  std::string name;
  std::string branch;  // "encoder", "depth", "seg"
  std::size_t height, width, channels;
  std::int64_t params;
};

/// Per-layer output shapes for the given sharing level. The segmentation
/// head runs at half resolution; a final parameter-free 2x upsample,
/// reported as "seg_out", brings it to H x W.
inline std::vector<LayerShape> output_shapes(const DecoderTables& t, const std::string& level,
                                             const std::string& encoder, std::size_t height, std::size_t width,
                                             SharingConvention conv = SharingConvention::entry_shared,
                                             std::optional<int> num_classes = std::nullopt) {
  if (height == 0 || width == 0 || height % 32 || width % 32)
    throw Error("input size must be a positive multiple of 32");
  const SharingLevel sl = sharing_level(t, level, conv);
  const EncoderSpec& enc = t.encoder(encoder);
  detail::Resolver r{t, enc, {}};
  std::map<std::string, std::size_t> scale;  // downsampling factor per layer
  std::vector<LayerShape> out;
  for (int i = 1; i <= 5; ++i) {
    const std::string n = "econv" + std::to_string(i);
    scale[n] = std::size_t{1} << i;
    out.push_back({n, "encoder", height >> i, width >> i, static_cast<std::size_t>(enc.channels[i - 1]), 0});
  }
  auto place = [&](const LayerSpec& l, const char* branch) {
    std::optional<std::size_t> s;
    for (const auto& in : l.inputs) {
      const std::size_t src = scale.at(in.source);
      if (src % static_cast<std::size_t>(in.upsample))
        throw Error("layer " + l.name + ": input " + in.source + " upsampled past full resolution");
      const std::size_t here = src / static_cast<std::size_t>(in.upsample);
      if (s && *s != here) throw Error("layer " + l.name + ": inputs disagree on resolution");
      s = here;
    }
    scale[l.name] = *s;
    const auto p = param_count(l, r.in_channels(l));
    r.channels[l.name] = l.out_channels;
    out.push_back({l.name, branch, height / *s, width / *s, static_cast<std::size_t>(l.out_channels), p});
  };
  for (const auto& d : t.depth) place(d, "depth");
  for (const auto& row : sl.branch_layers) place(detail::with_classes(row, num_classes), "seg");

  const LayerShape head = out.back();
  if (head.height != height) {
    if (height % head.height) throw Error("segmentation head resolution does not divide the input");
    out.push_back({"seg_out", "seg", height, width, head.channels, 0});
  }
  return out;
}

/// Human-readable shape and parameter report.
inline std::string report(const DecoderTables& t, const std::string& level, const std::string& encoder,
                          std::size_t height, std::size_t width,
                          SharingConvention conv = SharingConvention::entry_shared,
                          std::optional<int> num_classes = std::nullopt) {
  const auto shapes = output_shapes(t, level, encoder, height, width, conv, num_classes);
  const auto sl = sharing_level(t, level, conv);
  const auto totals = branch_param_totals(t, level, encoder, conv, num_classes);
  std::set<std::string> shared(sl.shared_layers.begin(), sl.shared_layers.end());
  std::ostringstream os;
  os << "level " << level << "  encoder " << encoder << "  input " << height << "x" << width << "  convention "
     << convention_name(conv) << "\n";
  os << "layer      branch   HxWxC              params\n";
  for (const auto& s : shapes) {
    std::string tag = s.branch;
    if (s.branch == "depth" && shared.count(s.name)) tag = "shared";
    std::ostringstream dims;
    dims << s.height << "x" << s.width << "x" << s.channels;
    os << std::left;
    os.width(11);
    os << s.name;
    os.width(9);
    os << tag;
    os.width(19);
    os << dims.str() << s.params << "\n";
  }
  if (!sl.aliased.empty()) {
    os << "aliased:";
    for (const auto& a : sl.aliased) os << ' ' << a;
    os << "\n";
  }
  os << "encoder_params " << t.encoder(encoder).params << "\n";
  os << "depth_decoder_params " << depth_decoder_params(t, encoder) << "\n";
  os << "shared_decoder_params " << totals.shared_decoder_params << "\n";
  os << "seg_specific_params " << totals.seg_specific_params << "\n";
  os << "total_params " << model_params(t, level, encoder, conv, num_classes) << "\n";
  return os.str();
}

}  // namespace semhint::arch
