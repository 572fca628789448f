#pragma once

#include <array>
#include <string>
#include <vector>

namespace vcgan::nets {

struct Stride {
  int freq = 1;
  int time = 1;
  bool operator==(const Stride&) const = default;
};

// Shapes of the feature extractor (F1..F4), the generator (a clone of F1..F4
// followed by five upsampling units U1..U5) and the three patch
// discriminators.
struct ArchConfig {
  int n_mels = 128;
  int window = 64;
  int embed_h = 8;
  int embed_w = 8;
  int kernel = 3;
  // Output channels of F1..F4; F4 emits the single-channel embedding.
  std::array<int, 4> fe_channels{32, 64, 128, 1};
  std::array<Stride, 4> strides{{{2, 2}, {2, 2}, {2, 2}, {2, 1}}};
  // Which of F1..F4 use gated convolutional units. U5 and U4 mirror F1 and F2.
  std::array<bool, 4> gated{true, true, false, false};
  // One stride-2 conv layer per entry in every discriminator.
  std::vector<int> disc_channels{16, 32, 64, 64};
  std::vector<int> patch_widths{32, 64, 128};
  float leaky_slope = 0.2f;

  // Throws InconsistentArch when the strides do not map n_mels x window onto
  // embed_h x embed_w, or a discriminator cannot downsample its patch.
  void validate() const;

  // Miniature network used for gradient verification (8 x 8 input).
  static ArchConfig miniature();

  bool operator==(const ArchConfig&) const = default;
};

std::string arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const std::string& text);

}  // namespace vcgan::nets
