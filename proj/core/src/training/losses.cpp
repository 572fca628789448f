#include "vcgan/training/losses.hpp"

#include <algorithm>
#include <cmath>

#include "vcgan/error.hpp"
#include "vcgan/nn/ops.hpp"

namespace vcgan::training {

double loss_discriminator(const nets::ClassProbabilities& probs, int class_index) {
  if (class_index < 0 || class_index >= static_cast<int>(probs.probs.size())) {
    throw Error(ErrorCode::kInvalidArgument, "class index " + std::to_string(class_index) + " outside [0, " +
                                                 std::to_string(probs.probs.size()) + ")");
  }
  return -std::log(std::max(probs.probs[class_index], kProbFloor));
}

double loss_discriminator(std::span<const nets::ClassProbabilities> probs, std::span<const int> class_index) {
  if (probs.size() != class_index.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one label per probability vector expected");
  }
  if (probs.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) acc += loss_discriminator(probs[i], class_index[i]);
  return acc / static_cast<double>(probs.size());
}

double loss_generator_adv(const nets::ClassProbabilities& probs, int target_index) {
  return loss_discriminator(probs, real_label(target_index));
}

double loss_cycle(const dsp::MelMatrix& a, const dsp::MelMatrix& b) {
  if (a.n_mels != b.n_mels || a.frames != b.frames || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "loss_cycle: " + std::to_string(a.n_mels) + "x" + std::to_string(a.frames) +
                                               " vs " + std::to_string(b.n_mels) + "x" + std::to_string(b.frames));
  }
  if (a.values.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    acc += std::abs(static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]));
  }
  return acc / static_cast<double>(a.values.size());
}

SamplePatchPlan plan_sample_patches(const nets::ArchConfig& arch, std::mt19937_64& rng) {
  SamplePatchPlan p;
  p.real_source = nets::plan_patches(arch.window, arch.patch_widths, rng);
  p.real_target = nets::plan_patches(arch.window, arch.patch_widths, rng);
  p.fake = nets::plan_patches(arch.window, arch.patch_widths, rng);
  return p;
}

namespace {

template <typename T>
nn::Var<T> zero() {
  return nn::Var<T>(nn::Tensor<T>(nn::Shape{1, 1, 1, 1}));
}

template <typename T>
struct WidthBatch {
  std::vector<nn::Var<T>> patches;
  std::vector<int> labels;

  void add(const nn::Var<T>& batch, int b, const nets::PatchSpec& spec, int label, double threshold) {
    auto patch = nn::gather_time(nn::select_sample(batch, b), std::span<const int>(spec.time_index));
    if (!nets::patch_has_power(std::span<const T>(patch.value().data), threshold)) return;
    patches.push_back(std::move(patch));
    labels.push_back(label);
  }
};

// Cross entropy of every width that received a patch, then the mean over
// those widths.
template <typename T>
nn::Var<T> mean_over_widths(const nets::ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& disc,
                            std::vector<WidthBatch<T>>& widths, bool* used) {
  std::vector<nn::Var<T>> losses;
  for (std::size_t w = 0; w < widths.size(); ++w) {
    if (widths[w].patches.empty()) continue;
    auto logits =
        nets::disc_forward(arch, n_speakers, disc, nn::concat_batch(widths[w].patches), arch.patch_widths[w]);
    losses.push_back(nn::nll_from_logits(logits, std::span<const int>(widths[w].labels), static_cast<T>(kProbFloor)));
  }
  if (used) *used = !losses.empty();
  return losses.empty() ? zero<T>() : nn::mean_of(losses);
}

}  // namespace

template <typename T>
nn::Var<T> discriminator_loss(const nets::ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& disc,
                              const DiscriminatorInputs<T>& in, const std::vector<SamplePatchPlan>& plan,
                              double threshold, bool* used) {
  const int batch = in.real_source.shape().n;
  if (static_cast<int>(plan.size()) != batch || static_cast<int>(in.source_index.size()) != batch ||
      static_cast<int>(in.target_index.size()) != batch) {
    throw Error(ErrorCode::kShapeMismatch, "discriminator_loss: batch bookkeeping does not match the inputs");
  }
  std::vector<WidthBatch<T>> widths(arch.patch_widths.size());
  for (int b = 0; b < batch; ++b) {
    for (std::size_t w = 0; w < widths.size(); ++w) {
      widths[w].add(in.real_source, b, plan[b].real_source[w], real_label(in.source_index[b]), threshold);
      widths[w].add(in.real_target, b, plan[b].real_target[w], real_label(in.target_index[b]), threshold);
      widths[w].add(in.fake_target, b, plan[b].fake[w], fake_label(in.target_index[b]), threshold);
    }
  }
  return mean_over_widths(arch, n_speakers, disc, widths, used);
}

template <typename T>
GeneratorLosses<T> generator_losses(const nets::ArchConfig& arch, int n_speakers, nn::ParamBinder<T>& fe,
                                    nn::ParamBinder<T>& gen, nn::ParamBinder<T>& disc, const nn::Var<T>& source,
                                    const nn::Var<T>& target, std::span<const int> target_index,
                                    const std::vector<SamplePatchPlan>& plan, double threshold,
                                    double lambda_cycle) {
  const int batch = source.shape().n;
  if (static_cast<int>(plan.size()) != batch || static_cast<int>(target_index.size()) != batch) {
    throw Error(ErrorCode::kShapeMismatch, "generator_losses: batch bookkeeping does not match the inputs");
  }
  GeneratorLosses<T> out;
  const auto e_target = nets::fe_forward(arch, fe, target);
  out.converted = nets::gen_forward(arch, gen, source, e_target);
  const auto e_source = nets::fe_forward(arch, fe, source);
  const auto cycled = nets::gen_forward(arch, gen, out.converted, e_source);
  out.cycle = nn::l1_mean(cycled, source);

  std::vector<WidthBatch<T>> widths(arch.patch_widths.size());
  for (int b = 0; b < batch; ++b) {
    for (std::size_t w = 0; w < widths.size(); ++w) {
      widths[w].add(out.converted, b, plan[b].fake[w], real_label(target_index[b]), threshold);
    }
  }
  out.adv = mean_over_widths(arch, n_speakers, disc, widths, &out.adv_used);
  out.total = nn::add(out.adv, nn::scale(out.cycle, static_cast<T>(lambda_cycle)));
  return out;
}

#define VCGAN_LOSSES_INSTANTIATE(T)                                                                               \
  template nn::Var<T> discriminator_loss(const nets::ArchConfig&, int, nn::ParamBinder<T>&,                      \
                                         const DiscriminatorInputs<T>&, const std::vector<SamplePatchPlan>&,      \
                                         double, bool*);                                                           \
  template GeneratorLosses<T> generator_losses(const nets::ArchConfig&, int, nn::ParamBinder<T>&,                \
                                               nn::ParamBinder<T>&, nn::ParamBinder<T>&, const nn::Var<T>&,      \
                                               const nn::Var<T>&, std::span<const int>,                           \
                                               const std::vector<SamplePatchPlan>&, double, double);

VCGAN_LOSSES_INSTANTIATE(float)
VCGAN_LOSSES_INSTANTIATE(double)
#undef VCGAN_LOSSES_INSTANTIATE

}  // namespace vcgan::training
