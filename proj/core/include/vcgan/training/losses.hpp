#pragma once

#include <span>
#include <vector>

#include "vcgan/nets/model.hpp"

namespace vcgan::training {

// Probabilities are floored here before the log.
inline constexpr double kProbFloor = 1e-12;

// Class 2i is real-s_i, 2i+1 is fake-s_i.
inline int real_label(int speaker) { return 2 * speaker; }
inline int fake_label(int speaker) { return 2 * speaker + 1; }

// -log(max(probs[class_index], floor)). Throws InvalidArgument for a label
// outside [0, 2N).
double loss_discriminator(const nets::ClassProbabilities& probs, int class_index);
// Batch mean of the above.
double loss_discriminator(std::span<const nets::ClassProbabilities> probs, std::span<const int> class_index);

// -log(max(probs[2k], floor)): the generator wants its output taken as real-s_k.
double loss_generator_adv(const nets::ClassProbabilities& probs, int target_index);

// Mean absolute difference. Throws ShapeMismatch.
double loss_cycle(const dsp::MelMatrix& original, const dsp::MelMatrix& reconstructed);

// ---------------------------------------------------------------------------
// Differentiable batch losses used by the training step and the gradient
// checks.

// Crops for one batch element: one PatchSpec per discriminator width for each
// of the three sources the step looks at.
struct SamplePatchPlan {
  std::vector<nets::PatchSpec> real_source;
  std::vector<nets::PatchSpec> real_target;
  std::vector<nets::PatchSpec> fake;
};

SamplePatchPlan plan_sample_patches(const nets::ArchConfig& arch, std::mt19937_64& rng);

template <typename T>
struct DiscriminatorInputs {
  nn::Var<T> real_source;  // U_j  [B, 1, n_mels, window]
  nn::Var<T> real_target;  // U_k
  nn::Var<T> fake_target;  // G(U_j, e_k), detached
  std::vector<int> source_index;
  std::vector<int> target_index;
};

// Mean over widths of the mean cross entropy of every kept patch. `used` is
// false when every patch fell below the power threshold; the result is then a
// constant zero.
template <typename T>
nn::Var<T> discriminator_loss(const nets::ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& disc,
                              const DiscriminatorInputs<T>& in, const std::vector<SamplePatchPlan>& plan,
                              double power_threshold, bool* used = nullptr);

template <typename T>
struct GeneratorLosses {
  nn::Var<T> adv;    // zero constant when no fake patch passed the threshold
  nn::Var<T> cycle;
  nn::Var<T> total;  // adv + lambda * cycle
  nn::Var<T> converted;
  bool adv_used = false;
};

template <typename T>
GeneratorLosses<T> generator_losses(const nets::ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& fe,
                                    nn::ParamBinder<T>& gen, nn::ParamBinder<T>& disc, const nn::Var<T>& source,
                                    const nn::Var<T>& target, std::span<const int> target_index,
                                    const std::vector<SamplePatchPlan>& plan, double power_threshold,
                                    double lambda_cycle);

}  // namespace vcgan::training
