#include "vcgan/eval/sid.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "vcgan/error.hpp"
#include "vcgan/nets/model.hpp"
#include "vcgan/nn/adam.hpp"
#include "vcgan/nn/ops.hpp"

namespace vcgan::eval {

namespace {

using nn::Var;

constexpr float kSlope = 0.2f;

void crop_into(const dsp::MelMatrix& m, int begin, int width, double mean, double stddev, std::span<float> out) {
  for (int b = 0; b < m.n_mels; ++b) {
    for (int t = 0; t < width; ++t) {
      const float v = m.at(b, nets::reflect_index(begin + t, m.frames));
      out[static_cast<std::size_t>(b) * width + t] = static_cast<float>((v - mean) / stddev);
    }
  }
}

std::vector<int> window_starts(int frames, int window, int stride) {
  std::vector<int> starts;
  if (frames <= window) return {0};
  for (int s = 0; s + window <= frames; s += stride) starts.push_back(s);
  return starts;
}

Var<float> forward(const SidModel& m, nn::ParamBinder<float>& p, const Var<float>& x) {
  Var<float> h = x;
  for (std::size_t i = 0; i < m.config.channels.size(); ++i) {
    const std::string name = "conv" + std::to_string(i);
    h = nn::leaky_relu(nn::conv2d(h, p(name + ".w"), p(name + ".b"), nn::ConvGeometry{2, 2, 1, 1}), kSlope);
  }
  return nn::linear(nn::mean_time(h), p("head.w"), p("head.b"));
}

// Logits for every window of `mel`.
nn::Tensor<float> window_logits(const SidModel& m, const dsp::MelMatrix& mel) {
  if (mel.n_mels != m.n_mels) {
    throw Error(ErrorCode::kDimensionMismatch, "SID expects " + std::to_string(m.n_mels) + " mel bins, got " +
                                                   std::to_string(mel.n_mels));
  }
  if (mel.frames < 1) throw Error(ErrorCode::kNoValidWindows, "empty utterance");
  const int w = m.config.window;
  const auto starts = window_starts(mel.frames, w, m.config.stride);
  nn::Tensor<float> x(nn::Shape{static_cast<int>(starts.size()), 1, m.n_mels, w});
  for (std::size_t i = 0; i < starts.size(); ++i) crop_into(mel, starts[i], w, m.mean, m.stddev, x.sample(i));
  nn::ParamBinder<float> binder(m.params, false);
  return forward(m, binder, Var<float>(std::move(x))).value();
}

void init(SidModel& m, std::mt19937_64& rng) {
  const auto& ch = m.config.channels;
  int in = 1;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string name = "conv" + std::to_string(i);
    auto& w = m.params.add(name + ".w", {ch[i], in, 3, 3});
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (in * 9)));
    for (float& v : w.data) v = static_cast<float>(d(rng));
    m.params.add(name + ".b", {1, ch[i], 1, 1});
    in = ch[i];
  }
  const int features = ch.back() * (m.n_mels >> ch.size());
  auto& w = m.params.add("head.w", {m.n_speakers(), features, 1, 1});
  std::normal_distribution<double> d(0.0, std::sqrt(1.0 / features));
  for (float& v : w.data) v = static_cast<float>(d(rng));
  m.params.add("head.b", {1, m.n_speakers(), 1, 1});
}

}  // namespace

int SidModel::index_of(const std::string& id) const {
  for (int i = 0; i < n_speakers(); ++i)
    if (speakers[i] == id) return i;
  throw Error(ErrorCode::kUnknownTarget, "speaker " + id + " is unknown to the SID model");
}

SidDataset split_alternating(const std::vector<std::string>& speakers,
                             const std::vector<std::vector<dsp::LogMel>>& utterances) {
  if (speakers.size() != utterances.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one utterance list per speaker expected");
  }
  SidDataset d;
  d.speakers = speakers;
  d.train.resize(speakers.size());
  d.eval.resize(speakers.size());
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    for (std::size_t i = 0; i < utterances[s].size(); ++i) {
      (i % 2 == 0 ? d.train : d.eval)[s].push_back(utterances[s][i]);
    }
  }
  return d;
}

SidModel train_sid(const SidDataset& data, const SidConfig& config) {
  const int n = static_cast<int>(data.speakers.size());
  if (n < 2) throw Error(ErrorCode::kInsufficientData, "speaker identification needs at least two speakers");
  if (data.train.size() != data.speakers.size() || data.eval.size() != data.speakers.size()) {
    throw Error(ErrorCode::kInsufficientData, "every speaker needs a train and an eval list");
  }
  if (config.channels.empty() || config.window < 1 || config.stride < 1 || config.batch_size < 1 || config.steps < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid SID config");
  }
  for (int s = 0; s < n; ++s) {
    if (data.train[s].empty() || data.eval[s].empty()) {
      throw Error(ErrorCode::kInsufficientData, "speaker " + data.speakers[s] + " lacks train or eval utterances");
    }
  }

  SidModel m;
  m.speakers = data.speakers;
  m.config = config;
  m.n_mels = data.train[0][0].n_mels;
  const int down = 1 << config.channels.size();
  if (m.n_mels % down != 0 || config.window % down != 0) {
    throw Error(ErrorCode::kInvalidArgument, "SID depth does not divide the window");
  }

  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const auto& utts : data.train) {
    for (const auto& u : utts) {
      if (u.n_mels != m.n_mels) throw Error(ErrorCode::kDimensionMismatch, "mixed mel resolutions");
      if (u.frames < 1) throw Error(ErrorCode::kInsufficientData, "empty training utterance");
      for (float v : u.values) {
        sum += v;
        sq += static_cast<double>(v) * v;
      }
      count += u.values.size();
    }
  }
  m.mean = sum / count;
  m.stddev = std::sqrt(std::max(sq / count - m.mean * m.mean, 1e-12));

  std::mt19937_64 rng(config.seed);
  init(m, rng);
  nn::AdamState<float> adam;
  const nn::AdamConfig adam_cfg{config.lr, 0.9, 0.999, 1e-8};
  const int w = config.window;
  std::uniform_int_distribution<int> pick_speaker(0, n - 1);
  for (int step = 0; step < config.steps; ++step) {
    nn::Tensor<float> x(nn::Shape{config.batch_size, 1, m.n_mels, w});
    std::vector<int> labels;
    for (int b = 0; b < config.batch_size; ++b) {
      const int s = pick_speaker(rng);
      const auto& utts = data.train[s];
      const auto& u = utts[std::uniform_int_distribution<std::size_t>(0, utts.size() - 1)(rng)];
      const int start = u.frames > w ? std::uniform_int_distribution<int>(0, u.frames - w)(rng) : 0;
      crop_into(u, start, w, m.mean, m.stddev, x.sample(b));
      labels.push_back(s);
    }
    nn::ParamBinder<float> binder(m.params, true);
    auto loss = nn::nll_from_logits(forward(m, binder, Var<float>(std::move(x))), std::span<const int>(labels), 1e-12f);
    nn::backward(loss);
    nn::adam_step(m.params, adam, binder.gradients(), adam_cfg);
  }
  m.eval_top1 = sid_window_accuracy(m, data.eval);
  return m;
}

std::vector<double> sid_scores(const SidModel& model, const dsp::MelMatrix& log_mel) {
  const auto logits = window_logits(model, log_mel);
  const int k = logits.shape.c;
  std::vector<double> scores(k, 0.0);
  for (int i = 0; i < logits.shape.n; ++i) {
    double mx = logits.at(i, 0, 0, 0);
    for (int c = 1; c < k; ++c) mx = std::max<double>(mx, logits.at(i, c, 0, 0));
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits.at(i, c, 0, 0) - mx);
    const double lse = mx + std::log(z);
    for (int c = 0; c < k; ++c) scores[c] += logits.at(i, c, 0, 0) - lse;
  }
  for (double& s : scores) s /= logits.shape.n;
  return scores;
}

int rank_from_scores(std::span<const double> scores, int target) {
  if (target < 0 || target >= static_cast<int>(scores.size())) {
    throw Error(ErrorCode::kUnknownTarget, "target index " + std::to_string(target) + " outside the score vector");
  }
  int rank = 1;
  const double t = scores[target];
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > t || (scores[i] == t && i < target)) ++rank;
  }
  return rank;
}

int rank_target(const SidModel& model, const dsp::MelMatrix& log_mel, const std::string& target_id) {
  const int target = model.index_of(target_id);
  return rank_from_scores(sid_scores(model, log_mel), target);
}

double sid_window_accuracy(const SidModel& model, const std::vector<std::vector<dsp::LogMel>>& utterances) {
  int correct = 0, total = 0;
  for (std::size_t s = 0; s < utterances.size(); ++s) {
    for (const auto& u : utterances[s]) {
      const auto logits = window_logits(model, u);
      for (int i = 0; i < logits.shape.n; ++i) {
        int best = 0;
        for (int c = 1; c < logits.shape.c; ++c)
          if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
        correct += best == static_cast<int>(s);
        ++total;
      }
    }
  }
  return total ? 100.0 * correct / total : 0.0;
}

void save_sid(const std::filesystem::path& path, const SidModel& m) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : m.params.tensors) {
    params[name] = {{"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}, {"values", t.data}};
  }
  const nlohmann::json j{{"speakers", m.speakers},
                         {"window", m.config.window},
                         {"stride", m.config.stride},
                         {"channels", m.config.channels},
                         {"steps", m.config.steps},
                         {"batch_size", m.config.batch_size},
                         {"lr", m.config.lr},
                         {"seed", m.config.seed},
                         {"n_mels", m.n_mels},
                         {"mean", m.mean},
                         {"stddev", m.stddev},
                         {"eval_top1", m.eval_top1},
                         {"params", params}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump() << '\n';
}

SidModel load_sid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  SidModel m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.speakers = j.at("speakers").get<std::vector<std::string>>();
    m.config.window = j.at("window").get<int>();
    m.config.stride = j.at("stride").get<int>();
    m.config.channels = j.at("channels").get<std::vector<int>>();
    m.config.steps = j.at("steps").get<int>();
    m.config.batch_size = j.at("batch_size").get<int>();
    m.config.lr = j.at("lr").get<double>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.n_mels = j.at("n_mels").get<int>();
    m.mean = j.at("mean").get<double>();
    m.stddev = j.at("stddev").get<double>();
    m.eval_top1 = j.at("eval_top1").get<double>();
    for (const auto& [name, t] : j.at("params").items()) {
      const auto d = t.at("shape").get<std::array<int, 4>>();
      m.params.tensors.emplace(name, nn::Tensor<float>(nn::Shape{d[0], d[1], d[2], d[3]},
                                                       t.at("values").get<std::vector<float>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace vcgan::eval
