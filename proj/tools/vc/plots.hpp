#pragma once

#include <filesystem>
#include <vector>

#include "vcgan/dsp/mel.hpp"
#include "vcgan/training/trainer.hpp"

namespace vc {

// Static SVG line chart of the four loss series against step.
void write_loss_curve_svg(const std::filesystem::path& path, const std::vector<vcgan::training::LossReport>& history);

// Binary PPM with the panels side by side, low frequencies at the bottom.
// Each panel is normalized to its own range.
void write_spectrogram_ppm(const std::filesystem::path& path, const std::vector<const vcgan::dsp::MelMatrix*>& panels);

}  // namespace vc
