#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vc {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
};

struct PreprocessOptions {
  fs::path data;
  fs::path out;
  std::optional<std::string> layout;
  std::vector<std::string> held_out;
};

struct TrainOptions {
  fs::path run;
  std::optional<std::int64_t> steps;
  std::optional<std::string> resume;
  std::optional<int> batch_size;
  int log_every = 10;
};

struct ConvertOptions {
  fs::path run;
  fs::path source;
  std::optional<std::string> source_id;
  std::optional<std::string> target_id;
  std::vector<fs::path> target_samples;
  fs::path out;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> spectrogram;
  bool overlap_add = false;
};

struct EmbedOptions {
  fs::path run;
  std::vector<fs::path> samples;
  fs::path out;
  std::optional<fs::path> checkpoint;
};

struct EvaluateOptions {
  fs::path run;
  std::string grid;
  bool train_sid = false;
  bool chance_only = false;
  std::optional<int> speakers;
  std::optional<fs::path> checkpoint;
};

struct SynthOptions {
  fs::path out;
  int speakers = 5;
  int utterances = 10;
  double seconds = 2.0;
};

// Conversion grid: in-dataset + out-of-dataset sources, targets per group and
// utterances per (source, target) pair.
struct GridSpec {
  int in_sources = 0;
  int out_sources = 0;
  int in_targets = 0;
  int out_targets = -1;  // -1: every held-out speaker
  int utterances = 1;
};

// "sources=2+2,targets=4,utterances=5"; also in_sources, out_sources,
// in_targets, out_targets. Throws InvalidArgument.
GridSpec parse_grid(const std::string& spec);

// Each returns the process exit code; errors propagate as vcgan::Error.
int cmd_preprocess(const GlobalOptions& g, const PreprocessOptions& o);
int cmd_train(const GlobalOptions& g, const TrainOptions& o);
int cmd_convert(const GlobalOptions& g, const ConvertOptions& o);
int cmd_embed(const GlobalOptions& g, const EmbedOptions& o);
int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o);
int cmd_synth(const GlobalOptions& g, const SynthOptions& o);

}  // namespace vc
