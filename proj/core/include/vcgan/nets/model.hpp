#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vcgan/dsp/mel.hpp"
#include "vcgan/nets/arch.hpp"
#include "vcgan/nn/params.hpp"

namespace vcgan::nets {

template <typename T>
struct ModelParams {
  ArchConfig arch;
  int n_speakers = 0;
  nn::ParamStore<T> fe;
  nn::ParamStore<T> gen;
  nn::ParamStore<T> disc;

  // Width of every discriminator head: real/fake for each speaker.
  int n_classes() const { return 2 * n_speakers; }
  bool all_finite() const { return fe.all_finite() && gen.all_finite() && disc.all_finite(); }
};

// Deterministic for a fixed seed: zero-mean normal weights with variance
// 1 / fan_in, zero biases, unit instance-norm gains. Throws InconsistentArch.
ModelParams<float> init_params(const ArchConfig& arch, int n_speakers, std::uint64_t seed);

template <typename To, typename From>
ModelParams<To> params_cast(const ModelParams<From>& src) {
  return {src.arch, src.n_speakers, nn::store_cast<To>(src.fe), nn::store_cast<To>(src.gen),
          nn::store_cast<To>(src.disc)};
}

// Checksum over all three parameter groups.
std::uint64_t params_checksum(const ModelParams<float>& params);

// ---------------------------------------------------------------------------
// Differentiable forwards over batches ([N, 1, n_mels, frames] tensors).

template <typename T>
struct EmbeddingVars {
  nn::Var<T> code;  // [N, 1, embed_h, embed_w]
  nn::Var<T> f3;    // [N, C3, H3, 1]
  nn::Var<T> f4;    // [N, 1, embed_h, 1]
};

template <typename T>
EmbeddingVars<T> fe_forward(const ArchConfig& arch, nn::ParamBinder<T>& fe, const nn::Var<T>& windows);

template <typename T>
nn::Var<T> gen_forward(const ArchConfig& arch, nn::ParamBinder<T>& gen, const nn::Var<T>& sources,
                       const EmbeddingVars<T>& target);

// Logits [P, 2N, 1, 1] of the discriminator for `width`. Throws UnknownWidth.
template <typename T>
nn::Var<T> disc_forward(const ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& disc, const nn::Var<T>& patches,
                        int width);

// ---------------------------------------------------------------------------
// Single-window inference.

struct SpeakerEmbedding {
  nn::Tensor<float> values;      // [1, 1, 8, 8]
  nn::Tensor<float> f3_summary;  // [1, C3, H3, 1]
  nn::Tensor<float> f4_summary;  // [1, 1, H4, 1]
};

// Index 2i is real-s_i, 2i+1 is fake-s_i.
struct ClassProbabilities {
  std::vector<double> probs;

  int n_speakers() const { return static_cast<int>(probs.size() / 2); }
  double real(int i) const { return probs.at(2 * i); }
  double fake(int i) const { return probs.at(2 * i + 1); }
};

// Throws ShapeMismatch unless `window` is n_mels x window frames.
SpeakerEmbedding fe_forward(const ModelParams<float>& params, const dsp::MelMatrix& window);

dsp::ScaledMel gen_forward(const ModelParams<float>& params, const dsp::MelMatrix& source,
                           const SpeakerEmbedding& target);

// Throws UnknownWidth or ShapeMismatch.
ClassProbabilities disc_forward(const ModelParams<float>& params, const dsp::MelMatrix& patch, int width);

// ---------------------------------------------------------------------------
// Discriminator patches.

inline constexpr double kDefaultPatchPower = 0.15;

// Maps any integer position onto [0, frames) by mirror reflection without
// repeating the edge frame (..., 2, 1, 0, 1, 2, ...).
int reflect_index(int position, int frames);

struct PatchSpec {
  int width = 0;
  // Source frame for every patch column (reflection padding folded in).
  std::vector<int> time_index;
};

// One random crop per width from the window reflection-padded up to the widest
// patch.
std::vector<PatchSpec> plan_patches(int frames, const std::vector<int>& widths, std::mt19937_64& rng);

// mean((v + 1) / 2) >= threshold
bool patch_has_power(std::span<const float> values, double threshold);
bool patch_has_power(std::span<const double> values, double threshold);

struct Patch {
  dsp::MelMatrix values;
  int width = 0;
};

// Patches of every width whose power reaches the threshold; may be empty.
std::vector<Patch> extract_patches(const dsp::MelMatrix& window, const std::vector<int>& widths,
                                   double power_threshold, std::mt19937_64& rng);

nn::Tensor<float> to_tensor(const dsp::MelMatrix& mel);

}  // namespace vcgan::nets
