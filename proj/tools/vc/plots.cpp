#include "plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vcgan/error.hpp"

namespace vc {

using vcgan::Error;
using vcgan::ErrorCode;

void write_loss_curve_svg(const std::filesystem::path& path, const std::vector<vcgan::training::LossReport>& h) {
  constexpr double kW = 800, kH = 420, kLeft = 60, kRight = 150, kTop = 20, kBottom = 40;
  struct Series {
    const char* name;
    const char* color;
    double vcgan::training::LossReport::*field;
  };
  const std::array<Series, 4> series{{{"loss_d", "#1f77b4", &vcgan::training::LossReport::loss_d},
                                      {"loss_g_adv", "#ff7f0e", &vcgan::training::LossReport::loss_g_adv},
                                      {"loss_cycle", "#2ca02c", &vcgan::training::LossReport::loss_cycle},
                                      {"loss_g_total", "#d62728", &vcgan::training::LossReport::loss_g_total}}};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!h.empty()) {
    x0 = static_cast<double>(h.front().step);
    x1 = std::max(x0 + 1, static_cast<double>(h.back().step));
    y1 = 0;
    for (const auto& r : h)
      for (const auto& s : series) y1 = std::max(y1, r.*(s.field));
    if (y1 <= 0) y1 = 1;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  char buf[64];
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "%.3g", y);
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << buf
       << "</text>\n";
    const double x = x0 + (x1 - x0) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "%.0f", x);
    os << "<text x=\"" << px(x) << "\" y=\"" << kH - kBottom + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << buf << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 6 << "\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    os << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << series[s].color << "\" points=\"";
    for (const auto& r : h) os << px(static_cast<double>(r.step)) << ',' << py(r.*(series[s].field)) << ' ';
    os << "\"/>\n";
    const double ly = kTop + 14 + 18.0 * s;
    os << "<line x1=\"" << kW - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << series[s].color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kRight + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << series[s].name
       << "</text>\n";
  }
  os << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << os.str();
}

namespace {

// Five-stop dark-blue to yellow ramp.
std::array<unsigned char, 3> ramp(double v) {
  static const double stops[5][3] = {
      {0.05, 0.03, 0.25}, {0.23, 0.32, 0.55}, {0.13, 0.57, 0.55}, {0.37, 0.79, 0.38}, {0.99, 0.91, 0.14}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(v));
  const double f = v - i;
  std::array<unsigned char, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    rgb[c] = static_cast<unsigned char>(std::lround(255.0 * (stops[i][c] * (1 - f) + stops[i + 1][c] * f)));
  }
  return rgb;
}

}  // namespace

void write_spectrogram_ppm(const std::filesystem::path& path, const std::vector<const vcgan::dsp::MelMatrix*>& panels) {
  if (panels.empty()) throw Error(ErrorCode::kInvalidArgument, "no spectrogram to draw");
  constexpr int kGap = 4;
  int width = 0, height = 0;
  for (const auto* p : panels) {
    width += p->frames;
    height = std::max(height, p->n_mels);
  }
  width += kGap * static_cast<int>(panels.size() - 1);
  std::vector<unsigned char> img(static_cast<std::size_t>(width) * height * 3, 255);
  int x_off = 0;
  for (const auto* p : panels) {
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (float v : p->values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (int b = 0; b < p->n_mels; ++b) {
      const int row = height - 1 - b;
      for (int t = 0; t < p->frames; ++t) {
        const auto rgb = ramp((p->at(b, t) - lo) / span);
        std::copy(rgb.begin(), rgb.end(), img.begin() + (static_cast<std::size_t>(row) * width + x_off + t) * 3);
      }
    }
    x_off += p->frames + kGap;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace vc
