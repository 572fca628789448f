#include "vcgan/nets/model.hpp"

#include <algorithm>
#include <cmath>

#include "vcgan/error.hpp"
#include "vcgan/nn/ops.hpp"

namespace vcgan::nets {

namespace {

using nn::ConvGeometry;
using nn::Shape;
using nn::Var;

enum class Init { kFanIn, kZero, kOne };

struct ParamDecl {
  std::string name;
  Shape shape;
  Init init = Init::kFanIn;
  double fan_in = 1.0;
};

// Factor-2 upsampling uses a 4-tap transposed kernel, factor 1 a 3-tap one;
// both with padding 1 reproduce exactly `factor * input`.
int transposed_kernel(int factor) { return factor == 2 ? 4 : 3; }

std::string unit_name(const std::string& prefix, int u) { return prefix + ".f" + std::to_string(u + 1); }

struct DownUnit {
  int in = 0;
  int mid = 0;  // conv1 output channels (before gating)
  int out = 0;
  bool gated = false;
  bool final = false;
};

std::array<DownUnit, 4> down_units(const ArchConfig& a) {
  std::array<DownUnit, 4> units;
  int in = 1;
  for (int u = 0; u < 4; ++u) {
    DownUnit& d = units[u];
    d.in = in;
    d.final = u == 3;
    d.out = a.fe_channels[u];
    d.mid = d.final ? in : d.out;
    d.gated = a.gated[u];
    in = d.out;
  }
  return units;
}

struct UpUnit {
  std::string name;
  int in = 0;
  int out = 0;
  Stride factor;
  bool subpixel = false;
  bool gated = false;
};

std::array<UpUnit, 5> up_units(const ArchConfig& a) {
  const auto& c = a.fe_channels;
  const auto& s = a.strides;
  std::array<UpUnit, 5> u;
  // U1 runs at the bottleneck on [latent ; embedding].
  u[0] = {"u1", c[3] + 1, c[2], {1, 1}, true, false};
  u[1] = {"u2", c[2] + c[3], c[2], s[3], true, a.gated[3]};
  u[2] = {"u3", c[2] + c[2], c[1], s[2], false, a.gated[2]};
  u[3] = {"u4", c[1], c[0], s[1], false, a.gated[1]};
  u[4] = {"u5", c[0], c[0], s[0], false, a.gated[0]};
  return u;
}

void declare_conv(std::vector<ParamDecl>& out, const std::string& name, int cin, int cout, int kh, int kw, bool bias) {
  out.push_back({name + ".w", {cout, cin, kh, kw}, Init::kFanIn, static_cast<double>(cin) * kh * kw});
  if (bias) out.push_back({name + ".b", {1, cout, 1, 1}, Init::kZero});
}

void declare_norm(std::vector<ParamDecl>& out, const std::string& name, int c) {
  out.push_back({name + ".g", {1, c, 1, 1}, Init::kOne});
  out.push_back({name + ".b", {1, c, 1, 1}, Init::kZero});
}

void declare_down(std::vector<ParamDecl>& out, const ArchConfig& a, const std::string& prefix) {
  const int k = a.kernel;
  const auto units = down_units(a);
  for (int u = 0; u < 4; ++u) {
    const DownUnit& d = units[u];
    const std::string base = unit_name(prefix, u);
    const int g = d.gated ? 2 : 1;
    declare_conv(out, base + ".conv1", d.in, d.mid * g, k, k, false);
    declare_norm(out, base + ".norm1", d.mid * g);
    if (d.final) {
      declare_conv(out, base + ".conv2", d.mid, d.out, k, k, true);
    } else {
      declare_conv(out, base + ".conv2", d.mid, d.out * g, k, k, false);
      declare_norm(out, base + ".norm2", d.out * g);
    }
  }
}

std::vector<ParamDecl> fe_layout(const ArchConfig& a) {
  std::vector<ParamDecl> out;
  declare_down(out, a, "fe");
  return out;
}

std::vector<ParamDecl> gen_layout(const ArchConfig& a) {
  std::vector<ParamDecl> out;
  declare_down(out, a, "gen.down");
  const int k = a.kernel;
  for (const UpUnit& u : up_units(a)) {
    const std::string base = "gen.up." + u.name;
    const int g = u.gated ? 2 : 1;
    const int ch = u.out * g;
    if (u.subpixel) {
      declare_conv(out, base + ".conv", u.in, ch * u.factor.freq * u.factor.time, k, k, false);
    } else {
      const int kh = transposed_kernel(u.factor.freq), kw = transposed_kernel(u.factor.time);
      // Transposed weights are [Cin, Cout, kh, kw]; each output pixel sees
      // Cin * (kh / stride_h) * (kw / stride_w) taps.
      out.push_back({base + ".tconv.w",
                     {u.in, ch, kh, kw},
                     Init::kFanIn,
                     static_cast<double>(u.in) * kh * kw / (u.factor.freq * u.factor.time)});
    }
    declare_norm(out, base + ".norm", ch);
  }
  declare_conv(out, "gen.up.u5.out", up_units(a)[4].out, 1, k, k, true);
  return out;
}

int disc_feature_size(const ArchConfig& a, int width) {
  const int down = 1 << a.disc_channels.size();
  return a.disc_channels.back() * (a.n_mels / down) * (width / down);
}

std::string disc_name(int width) { return "disc.w" + std::to_string(width); }

std::vector<ParamDecl> disc_layout(const ArchConfig& a, int n_speakers) {
  std::vector<ParamDecl> out;
  for (int width : a.patch_widths) {
    const std::string base = disc_name(width);
    int in = 1;
    for (std::size_t i = 0; i < a.disc_channels.size(); ++i) {
      declare_conv(out, base + ".conv" + std::to_string(i), in, a.disc_channels[i], a.kernel, a.kernel, true);
      in = a.disc_channels[i];
    }
    const int d = disc_feature_size(a, width);
    out.push_back({base + ".head.w", {2 * n_speakers, d, 1, 1}, Init::kFanIn, static_cast<double>(d)});
    out.push_back({base + ".head.b", {1, 2 * n_speakers, 1, 1}, Init::kZero});
  }
  return out;
}

void fill(nn::ParamStore<float>& store, const std::vector<ParamDecl>& decls, std::mt19937_64& rng) {
  for (const ParamDecl& d : decls) {
    auto& t = store.add(d.name, d.shape);
    switch (d.init) {
      case Init::kZero:
        break;
      case Init::kOne:
        std::fill(t.data.begin(), t.data.end(), 1.0f);
        break;
      case Init::kFanIn: {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(d.fan_in));
        for (float& v : t.data) v = static_cast<float>(dist(rng));
        break;
      }
    }
  }
}

template <typename T>
Var<T> activate(const Var<T>& x, bool gated, T slope) {
  return gated ? nn::glu(x) : nn::leaky_relu(x, slope);
}

template <typename T>
Var<T> norm(nn::ParamBinder<T>& p, const std::string& name, const Var<T>& x) {
  return nn::instance_norm(x, p(name + ".g"), p(name + ".b"));
}

// Runs F1..F4; fills f3 with the F3 output.
template <typename T>
Var<T> run_down(const ArchConfig& a, nn::ParamBinder<T>& p, const std::string& prefix, Var<T> x, Var<T>* f3) {
  const int pad = a.kernel / 2;
  const T slope = static_cast<T>(a.leaky_slope);
  const auto units = down_units(a);
  for (int u = 0; u < 4; ++u) {
    const DownUnit& d = units[u];
    const std::string base = unit_name(prefix, u);
    x = nn::conv2d(x, p(base + ".conv1.w"), Var<T>(), ConvGeometry{1, 1, pad, pad});
    x = activate(norm(p, base + ".norm1", x), d.gated, slope);
    const ConvGeometry strided{a.strides[u].freq, a.strides[u].time, pad, pad};
    if (d.final) {
      x = nn::conv2d(x, p(base + ".conv2.w"), p(base + ".conv2.b"), strided);
    } else {
      x = nn::conv2d(x, p(base + ".conv2.w"), Var<T>(), strided);
      x = activate(norm(p, base + ".norm2", x), d.gated, slope);
    }
    if (u == 2 && f3) *f3 = x;
  }
  return x;
}

void check_window(const ArchConfig& a, const dsp::MelMatrix& m, const char* what) {
  if (m.n_mels != a.n_mels || m.frames != a.window ||
      m.values.size() != static_cast<std::size_t>(m.n_mels) * m.frames) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": expected " + std::to_string(a.n_mels) + "x" +
                                               std::to_string(a.window) + ", got " + std::to_string(m.n_mels) + "x" +
                                               std::to_string(m.frames));
  }
}

void check_shape(const nn::Tensor<float>& t, Shape expected, const char* what) {
  if (t.shape != expected || t.data.size() != expected.numel()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": expected " + expected.str() + ", got " + t.shape.str());
  }
}

}  // namespace

ModelParams<float> init_params(const ArchConfig& arch, int n_speakers, std::uint64_t seed) {
  arch.validate();
  if (n_speakers < 1) throw Error(ErrorCode::kInvalidArgument, "n_speakers must be positive");
  ModelParams<float> p;
  p.arch = arch;
  p.n_speakers = n_speakers;
  std::mt19937_64 rng(seed);
  fill(p.fe, fe_layout(arch), rng);
  fill(p.gen, gen_layout(arch), rng);
  fill(p.disc, disc_layout(arch, n_speakers), rng);
  return p;
}

std::uint64_t params_checksum(const ModelParams<float>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint64_t part : {nn::checksum(params.fe), nn::checksum(params.gen), nn::checksum(params.disc)}) {
    for (int i = 0; i < 8; ++i) {
      h ^= (part >> (8 * i)) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T>
EmbeddingVars<T> fe_forward(const ArchConfig& arch, nn::ParamBinder<T>& fe, const nn::Var<T>& windows) {
  EmbeddingVars<T> out;
  Var<T> f3;
  out.code = run_down<T>(arch, fe, "fe", windows, &f3);
  out.f3 = nn::mean_time(f3);
  out.f4 = nn::mean_time(out.code);
  return out;
}

template <typename T>
nn::Var<T> gen_forward(const ArchConfig& arch, nn::ParamBinder<T>& p, const nn::Var<T>& sources,
                       const EmbeddingVars<T>& target) {
  const int pad = arch.kernel / 2;
  const T slope = static_cast<T>(arch.leaky_slope);
  Var<T> latent = run_down<T>(arch, p, "gen.down", sources, nullptr);
  // The embedding already spans the bottleneck's time axis.
  Var<T> x = nn::concat_channels(latent, target.code);

  const auto units = up_units(arch);
  for (int i = 0; i < 5; ++i) {
    const UpUnit& u = units[i];
    const std::string base = "gen.up." + u.name;
    if (u.subpixel) {
      x = nn::conv2d(x, p(base + ".conv.w"), Var<T>(), ConvGeometry{1, 1, pad, pad});
      x = nn::pixel_shuffle(x, u.factor.freq, u.factor.time);
    } else {
      x = nn::conv_transpose2d(x, p(base + ".tconv.w"), Var<T>(), ConvGeometry{u.factor.freq, u.factor.time, 1, 1});
    }
    x = activate(norm(p, base + ".norm", x), u.gated, slope);
    if (i == 0) x = nn::concat_channels(x, nn::tile_time(target.f4, x.shape().w));
    if (i == 1) x = nn::concat_channels(x, nn::tile_time(target.f3, x.shape().w));
  }
  x = nn::conv2d(x, p("gen.up.u5.out.w"), p("gen.up.u5.out.b"), ConvGeometry{1, 1, pad, pad});
  return nn::tanh(x);
}

template <typename T>
nn::Var<T> disc_forward(const ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& p, const nn::Var<T>& patches,
                        int width) {
  if (std::find(arch.patch_widths.begin(), arch.patch_widths.end(), width) == arch.patch_widths.end()) {
    throw Error(ErrorCode::kUnknownWidth, "no discriminator for patch width " + std::to_string(width));
  }
  if (patches.shape().c != 1 || patches.shape().h != arch.n_mels || patches.shape().w != width) {
    throw Error(ErrorCode::kShapeMismatch, "discriminator input " + patches.shape().str() + " for width " +
                                               std::to_string(width));
  }
  const int pad = arch.kernel / 2;
  const T slope = static_cast<T>(arch.leaky_slope);
  const std::string base = disc_name(width);
  Var<T> x = patches;
  for (std::size_t i = 0; i < arch.disc_channels.size(); ++i) {
    const std::string conv = base + ".conv" + std::to_string(i);
    x = nn::leaky_relu(nn::conv2d(x, p(conv + ".w"), p(conv + ".b"), ConvGeometry{2, 2, pad, pad}), slope);
  }
  Var<T> logits = nn::linear(x, p(base + ".head.w"), p(base + ".head.b"));
  if (logits.shape().c != 2 * n_speakers) {
    throw Error(ErrorCode::kShapeMismatch, "discriminator head width " + std::to_string(logits.shape().c));
  }
  return logits;
}

#define VCGAN_NETS_INSTANTIATE(T)                                                                                 \
  template EmbeddingVars<T> fe_forward(const ArchConfig&, nn::ParamBinder<T>&, const nn::Var<T>&);               \
  template nn::Var<T> gen_forward(const ArchConfig&, nn::ParamBinder<T>&, const nn::Var<T>&,                     \
                                  const EmbeddingVars<T>&);                                                       \
  template nn::Var<T> disc_forward(const ArchConfig&, int, nn::ParamBinder<T>&, const nn::Var<T>&, int);

VCGAN_NETS_INSTANTIATE(float)
VCGAN_NETS_INSTANTIATE(double)
#undef VCGAN_NETS_INSTANTIATE

nn::Tensor<float> to_tensor(const dsp::MelMatrix& mel) {
  return nn::Tensor<float>(Shape{1, 1, mel.n_mels, mel.frames}, mel.values);
}

SpeakerEmbedding fe_forward(const ModelParams<float>& params, const dsp::MelMatrix& window) {
  check_window(params.arch, window, "fe_forward");
  nn::ParamBinder<float> binder(params.fe, false);
  auto e = fe_forward(params.arch, binder, Var<float>(to_tensor(window)));
  return {e.code.value(), e.f3.value(), e.f4.value()};
}

dsp::ScaledMel gen_forward(const ModelParams<float>& params, const dsp::MelMatrix& source,
                           const SpeakerEmbedding& target) {
  const ArchConfig& a = params.arch;
  check_window(a, source, "gen_forward");
  int h3 = a.n_mels;
  for (int u = 0; u < 3; ++u) h3 /= a.strides[u].freq;
  check_shape(target.values, Shape{1, a.fe_channels[3], a.embed_h, a.embed_w}, "embedding");
  check_shape(target.f3_summary, Shape{1, a.fe_channels[2], h3, 1}, "f3 summary");
  check_shape(target.f4_summary, Shape{1, a.fe_channels[3], a.embed_h, 1}, "f4 summary");

  nn::ParamBinder<float> binder(params.gen, false);
  EmbeddingVars<float> e{Var<float>(target.values), Var<float>(target.f3_summary), Var<float>(target.f4_summary)};
  auto y = gen_forward(a, binder, Var<float>(to_tensor(source)), e);
  dsp::ScaledMel out;
  out.n_mels = a.n_mels;
  out.frames = a.window;
  out.values = y.value().data;
  return out;
}

ClassProbabilities disc_forward(const ModelParams<float>& params, const dsp::MelMatrix& patch, int width) {
  const ArchConfig& a = params.arch;
  if (std::find(a.patch_widths.begin(), a.patch_widths.end(), width) == a.patch_widths.end()) {
    throw Error(ErrorCode::kUnknownWidth, "no discriminator for patch width " + std::to_string(width));
  }
  if (patch.n_mels != a.n_mels || patch.frames != width) {
    throw Error(ErrorCode::kShapeMismatch, "patch is " + std::to_string(patch.n_mels) + "x" +
                                               std::to_string(patch.frames) + ", width " + std::to_string(width));
  }
  nn::ParamBinder<float> binder(params.disc, false);
  auto logits = disc_forward(a, params.n_speakers, binder, Var<float>(to_tensor(patch)), width);
  const auto probs = nn::softmax(logits.value());
  return {std::vector<double>(probs.data.begin(), probs.data.end())};
}

int reflect_index(int position, int frames) {
  if (frames < 1) throw Error(ErrorCode::kInvalidArgument, "reflect_index: empty axis");
  if (frames == 1) return 0;
  const int period = 2 * (frames - 1);
  int q = position % period;
  if (q < 0) q += period;
  return q >= frames ? period - q : q;
}

std::vector<PatchSpec> plan_patches(int frames, const std::vector<int>& widths, std::mt19937_64& rng) {
  if (frames < 1) throw Error(ErrorCode::kInvalidArgument, "plan_patches: empty window");
  int padded = frames;
  for (int w : widths) padded = std::max(padded, w);
  const int left = (padded - frames) / 2;
  std::vector<int> source(padded);
  for (int p = 0; p < padded; ++p) source[p] = reflect_index(p - left, frames);
  std::vector<PatchSpec> out;
  out.reserve(widths.size());
  for (int w : widths) {
    std::uniform_int_distribution<int> start(0, padded - w);
    const int s = start(rng);
    out.push_back({w, std::vector<int>(source.begin() + s, source.begin() + s + w)});
  }
  return out;
}

namespace {
template <typename V>
bool has_power(std::span<const V> values, double threshold) {
  if (values.empty()) return false;
  double acc = 0.0;
  for (V v : values) acc += (static_cast<double>(v) + 1.0) * 0.5;
  return acc / static_cast<double>(values.size()) >= threshold;
}
}  // namespace

bool patch_has_power(std::span<const float> values, double threshold) { return has_power(values, threshold); }
bool patch_has_power(std::span<const double> values, double threshold) { return has_power(values, threshold); }

std::vector<Patch> extract_patches(const dsp::MelMatrix& window, const std::vector<int>& widths,
                                   double power_threshold, std::mt19937_64& rng) {
  std::vector<Patch> out;
  for (const PatchSpec& spec : plan_patches(window.frames, widths, rng)) {
    dsp::MelMatrix m(window.n_mels, spec.width);
    for (int b = 0; b < window.n_mels; ++b)
      for (int t = 0; t < spec.width; ++t) m.at(b, t) = window.at(b, spec.time_index[t]);
    if (patch_has_power(m.values, power_threshold)) out.push_back({std::move(m), spec.width});
  }
  return out;
}

}  // namespace vcgan::nets
