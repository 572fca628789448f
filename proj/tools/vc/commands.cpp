#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "config.hpp"
#include "plots.hpp"
#include "run.hpp"
#include "vcgan/convert/convert.hpp"
#include "vcgan/dataset/manifest.hpp"
#include "vcgan/dataset/synthetic.hpp"
#include "vcgan/dsp/mel_cache.hpp"
#include "vcgan/error.hpp"
#include "vcgan/eval/sid.hpp"
#include "vcgan/eval/topk.hpp"
#include "vcgan/nets/checkpoint.hpp"

namespace vc {

using Json = nlohmann::json;
using vcgan::Error;
using vcgan::ErrorCode;
namespace data = vcgan::data;
namespace dsp = vcgan::dsp;
namespace nets = vcgan::nets;
namespace convert = vcgan::convert;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs `writer` into a sibling temp file and only replaces `path` when the
// bytes differ. Returns whether `path` changed.
bool replace_if_changed(const fs::path& path, const std::function<void(const fs::path&)>& writer) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".new";
  writer(tmp);
  if (fs::exists(path) && slurp(path) == slurp(tmp)) {
    fs::remove(tmp);
    return false;
  }
  fs::rename(tmp, path);
  return true;
}

bool write_text_if_changed(const fs::path& path, const std::string& text) {
  return replace_if_changed(path, [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + p.string());
    out << text;
  });
}

// defaults < stored run config < --config file < flags.
RunConfig resolve(const GlobalOptions& g, const std::optional<RunPaths>& run) {
  RunConfig c;
  if (run && fs::exists(run->config())) c = load_config_file(run->config(), c);
  if (g.config) c = load_config_file(*g.config, c);
  if (g.seed) apply_seed(c, *g.seed);
  return c;
}

void check_mel_unchanged(const RunPaths& run, const RunConfig& c) {
  if (!fs::exists(run.config())) return;
  const RunConfig stored = load_config_file(run.config(), RunConfig{});
  if (!(stored.mel == c.mel)) {
    throw Error(ErrorCode::kInvalidArgument,
                "mel settings differ from the ones used by `vc preprocess` for this run; re-run preprocess");
  }
}

void dump_config(const RunPaths& run, const std::string& command, const RunConfig& c) {
  fs::create_directories(run.root / "logs");
  std::ofstream(run.root / "logs" / (command + "_config.json")) << to_json(c) << '\n';
}

fs::path pick_checkpoint(const RunPaths& run, const std::optional<fs::path>& explicit_path) {
  if (explicit_path) return *explicit_path;
  auto latest = latest_checkpoint(run);
  if (!latest) {
    throw Error(ErrorCode::kFileNotFound, "no checkpoint in " + run.checkpoints().string() + "; run `vc train` first");
  }
  return *latest;
}

// In-dataset or held-out speaker of the run: stored stats plus an embedding
// averaged over its cached spectrograms (cached per checkpoint).
convert::TargetReference run_reference(const RunPaths& run, const RunConfig& c, const fs::path& ckpt,
                                       const nets::ModelParams<float>& params,
                                       const std::vector<data::UtteranceRecord>& records, const std::string& id) {
  convert::TargetReference ref;
  ref.stats = load_speaker_stats(run, id);
  const auto cached = run.embedding(ckpt, id);
  if (fs::exists(cached)) {
    ref.embedding = convert::load_embedding(cached);
  } else {
    const auto mels = load_speaker_mels(run, records, id, c.mel);
    ref.embedding = convert::extract_embedding(params, mels, ref.stats);
    fs::create_directories(cached.parent_path());
    convert::save_embedding(cached, ref.embedding);
  }
  return ref;
}

std::optional<std::string> speaker_of(const std::vector<data::UtteranceRecord>& records, const fs::path& audio) {
  std::error_code ec;
  const auto canon = fs::weakly_canonical(audio, ec);
  for (const auto& r : records) {
    if (fs::weakly_canonical(r.audio_path, ec) == canon) return r.speaker_id;
  }
  return std::nullopt;
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

}  // namespace

GridSpec parse_grid(const std::string& spec) {
  if (spec.find_first_not_of(" \t") == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "empty grid spec");
  }
  GridSpec g;
  std::stringstream ss(spec);
  std::string item;
  auto number = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(v, &used);
      if (used != v.size() || n < 0) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "grid: bad value '" + v + "' for " + key);
    }
  };
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "grid: expected key=value, got '" + item + "'");
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    // "A+B" is A in-dataset and B held-out; a bare number is in-dataset only.
    auto pair = [&](int& in, int& out) {
      const auto plus = value.find('+');
      in = number(key, value.substr(0, plus));
      if (plus != std::string::npos) out = number(key, value.substr(plus + 1));
    };
    if (key == "sources") {
      pair(g.in_sources, g.out_sources);
    } else if (key == "in_sources") {
      g.in_sources = number(key, value);
    } else if (key == "out_sources") {
      g.out_sources = number(key, value);
    } else if (key == "targets") {
      pair(g.in_targets, g.out_targets);
    } else if (key == "in_targets") {
      g.in_targets = number(key, value);
    } else if (key == "out_targets") {
      g.out_targets = number(key, value);
    } else if (key == "utterances") {
      g.utterances = number(key, value);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "grid: unknown key '" + key + "'");
    }
  }
  if (g.in_sources + g.out_sources == 0) throw Error(ErrorCode::kInvalidArgument, "grid has no source speaker");
  if (g.in_targets == 0 && g.out_targets == 0) throw Error(ErrorCode::kInvalidArgument, "grid has no target speaker");
  if (g.utterances < 1) throw Error(ErrorCode::kInvalidArgument, "grid needs at least one utterance per pair");
  return g;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const GlobalOptions& g, const PreprocessOptions& o) {
  if (!fs::is_directory(o.data)) throw Error(ErrorCode::kFileNotFound, "dataset root " + o.data.string());
  const RunPaths run{o.out};
  RunLock lock(run.root);
  RunConfig c = resolve(g, run);
  if (o.layout) c = overlay_json(Json{{"data", {{"layout", *o.layout}}}}.dump(), c);
  if (!o.held_out.empty()) c.held_out = o.held_out;
  c.mel.validate();
  // Caches made under other mel settings are stale whatever their age.
  const bool mel_changed = fs::exists(run.config()) && !(load_config_file(run.config(), RunConfig{}).mel == c.mel);

  auto manifest = data::build_manifest(o.data, c.layout);
  const auto split = data::split_held_out(manifest.registry, c.held_out);

  int written = 0, reused = 0;
  std::vector<data::RejectedFile> rejected = manifest.rejected;
  std::vector<data::UtteranceRecord> kept;
  for (auto& r : manifest.records) {
    const auto cache = run.cache(r.speaker_id, r.audio_path);
    const bool fresh = !mel_changed && fs::exists(cache) && fs::last_write_time(cache) >= fs::last_write_time(r.audio_path);
    try {
      if (!fresh) {
        const auto mel = convert::prepare_utterance(r.audio_path, c.mel, c.silence);
        fs::create_directories(cache.parent_path());
        dsp::write_mel_cache(cache, mel);
        ++written;
      } else {
        ++reused;
      }
      r.cache_path = cache.string();
      kept.push_back(r);
    } catch (const Error& e) {
      rejected.push_back({r.audio_path, e.what()});
    }
  }

  int stats_written = 0;
  for (const auto& entry : split.train.speakers()) {
    std::vector<std::string> files;
    for (const auto& r : kept)
      if (r.speaker_id == entry.id) files.push_back(r.audio_path);
    if (files.empty()) {
      rejected.push_back({entry.id, "speaker has no usable utterance"});
      continue;
    }
    const auto subset = dsp::choose_stats_subset(files, c.stats_max_files, c.seed);
    std::vector<dsp::LogMel> mels;
    for (const auto& f : subset) {
      dsp::LogMel m;
      static_cast<dsp::MelMatrix&>(m) = dsp::read_mel_cache(run.cache(entry.id, f));
      m.config = c.mel;
      mels.push_back(std::move(m));
    }
    auto stats = dsp::compute_scaling_stats(mels, dsp::kDefaultPercentile, entry.id);
    stats.source_files = subset;
    stats.seed = c.seed;
    stats_written += replace_if_changed(run.stats(entry.id), [&](const fs::path& p) { dsp::save_stats(p, stats); });
  }

  int meta_written = 0;
  meta_written += replace_if_changed(run.manifest(), [&](const fs::path& p) { data::save_manifest(p, kept); });
  meta_written += replace_if_changed(run.registry(), [&](const fs::path& p) { data::save_registry(p, split.train); });
  if (fs::exists(o.data / "speaker_info.json")) {
    meta_written += write_text_if_changed(run.speaker_info(), slurp(o.data / "speaker_info.json"));
  }
  meta_written += write_text_if_changed(run.config(), to_json(c) + "\n");

  const int n_held = static_cast<int>(split.held_out.speakers().size());
  std::cout << "preprocess: " << split.train.speakers().size() << " speakers (" << n_held << " held out), "
            << kept.size() << " utterances, " << (written + stats_written + meta_written) << " files written, "
            << reused << " caches up to date\n";
  if (!rejected.empty()) {
    std::cerr << "preprocess: " << rejected.size() << " file(s) rejected:\n";
    for (const auto& r : rejected) std::cerr << "  " << r.path << ": " << r.reason << '\n';
    return 1;
  }
  return 0;
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  const RunPaths run{o.run};
  RunLock lock(run.root);
  RunConfig c = resolve(g, run);
  check_mel_unchanged(run, c);
  if (o.steps) c.train.total_steps = *o.steps;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  c.train.validate();
  c.arch.validate();
  if (c.arch.n_mels != c.mel.n_mels) {
    throw Error(ErrorCode::kInconsistentArch, "arch.n_mels differs from mel.n_mels");
  }

  std::optional<fs::path> resume;
  if (o.resume) {
    fs::path r = *o.resume;
    if (!fs::exists(r)) {
      for (const auto& candidate : {run.checkpoints() / r, run.checkpoints() / (r.string() + ".bin")}) {
        if (fs::exists(candidate)) {
          r = candidate;
          break;
        }
      }
    }
    if (!fs::exists(r)) throw Error(ErrorCode::kFileNotFound, "checkpoint " + *o.resume);
    resume = r;
  }

  const auto corpus = load_corpus(run, c);
  write_text_if_changed(run.config(), to_json(c) + "\n");
  dump_config(run, "train", c);
  log("train: " + std::to_string(corpus.n_speakers()) + " speakers, " + std::to_string(c.train.total_steps) +
      " steps, batch " + std::to_string(c.train.batch_size));

  const auto result = vcgan::training::train(
      corpus, c.arch, c.train, run.root, resume, [&](const vcgan::training::LossReport& r) {
        if (r.step % o.log_every == 0 || r.step == 1 || r.step == c.train.total_steps) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "step %6lld  d %.4f  adv %.4f  cycle %.4f  total %.4f  (%.0f ms)",
                        static_cast<long long>(r.step), r.loss_d, r.loss_g_adv, r.loss_cycle, r.loss_g_total,
                        r.wall_ms);
          log(buf);
        }
      });
  const auto history = vcgan::training::read_loss_history(result.history);
  write_loss_curve_svg(run.loss_curve(), history);
  std::cout << "train: " << result.steps_run << " steps run, checkpoint " << result.final_checkpoint.string() << '\n';
  if (result.retries > 0) log("train: " + std::to_string(result.retries) + " non-finite step(s) retried");
  return 0;
}

int cmd_convert(const GlobalOptions& g, const ConvertOptions& o) {
  if (o.target_id.has_value() == !o.target_samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "give exactly one of --target-id and --target-samples");
  }
  const RunPaths run{o.run};
  RunConfig c = resolve(g, run);
  check_mel_unchanged(run, c);
  const auto ckpt_path = pick_checkpoint(run, o.checkpoint);
  const auto ckpt = nets::load_checkpoint(ckpt_path);
  const auto& params = ckpt.params;
  if (params.arch.n_mels != c.mel.n_mels) {
    throw Error(ErrorCode::kCheckpointMismatch, "checkpoint expects " + std::to_string(params.arch.n_mels) +
                                                    " mel bins, the run uses " + std::to_string(c.mel.n_mels));
  }
  const auto records = fs::exists(run.manifest()) ? data::load_manifest(run.manifest()) : std::vector<data::UtteranceRecord>{};

  convert::TargetReference target;
  if (o.target_id) {
    if (fs::exists(run.registry()) && !data::load_registry(run.registry()).contains(*o.target_id)) {
      throw Error(ErrorCode::kUnknownSpeaker, "speaker '" + *o.target_id + "' is not part of this run");
    }
    target = run_reference(run, c, ckpt_path, params, records, *o.target_id);
  } else {
    target = convert::reference_from_samples(params, o.target_samples, c.mel, c.silence);
    log("convert: unseen target, stats and embedding from " + std::to_string(o.target_samples.size()) + " sample(s)");
  }

  dsp::SpeakerScalingStats source_stats;
  std::optional<std::string> source_id = o.source_id ? o.source_id : speaker_of(records, o.source);
  if (source_id) {
    source_stats = load_speaker_stats(run, *source_id);
  } else {
    // Unknown source: its own percentile bounds are the best available.
    std::vector<dsp::LogMel> own{convert::prepare_utterance(o.source, c.mel, c.silence)};
    source_stats = dsp::compute_scaling_stats(own, dsp::kDefaultPercentile, "source");
    log("convert: source speaker unknown, scaling with stats of the source utterance itself");
  }

  vcgan::convert::ConvertOptions opts;
  opts.overlap_add = o.overlap_add;
  opts.silence = c.silence;
  const auto result = convert::convert_utterance(params, o.source, source_stats, target, c.mel, opts);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  dsp::write_wav(o.out, result.audio, c.mel.sample_rate);
  if (o.spectrogram) {
    write_spectrogram_ppm(*o.spectrogram, {&result.source_mel, &result.converted.log_mel});
  }
  std::cout << "convert: wrote " << o.out.string() << " (" << result.audio.size() << " samples, "
            << result.converted.log_mel.frames << " frames)\n";
  return 0;
}

int cmd_embed(const GlobalOptions& g, const EmbedOptions& o) {
  if (o.samples.empty()) throw Error(ErrorCode::kInvalidArgument, "--samples needs at least one file");
  const RunPaths run{o.run};
  RunConfig c = resolve(g, run);
  const auto ckpt = nets::load_checkpoint(pick_checkpoint(run, o.checkpoint));
  const auto ref = convert::reference_from_samples(ckpt.params, o.samples, c.mel, c.silence);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  convert::save_embedding(o.out, ref.embedding);
  std::cout << "embed: wrote " << o.out.string() << '\n';
  return 0;
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o) {
  const RunPaths run{o.run};
  if (o.chance_only) {
    int m = o.speakers.value_or(0);
    if (m == 0 && fs::exists(run.registry())) m = static_cast<int>(data::load_registry(run.registry()).speakers().size());
    if (m < 1) throw Error(ErrorCode::kInvalidArgument, "--chance-only needs --speakers M or a preprocessed run");
    std::cout << "chance (M=" << m << ")";
    for (int k : vcgan::eval::kDefaultKs) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "  top-%d %.1f", k, vcgan::eval::chance_baseline(m, k));
      std::cout << buf;
    }
    std::cout << '\n';
    return 0;
  }
  const GridSpec grid = parse_grid(o.grid);
  RunLock lock(run.root);
  RunConfig c = resolve(g, run);
  check_mel_unchanged(run, c);
  dump_config(run, "evaluate", c);
  const auto registry = data::load_registry(run.registry());
  const auto records = data::load_manifest(run.manifest());
  const auto genders = load_speaker_genders(run);

  std::vector<std::string> in_ids = registry.training_ids(), out_ids;
  for (const auto& e : registry.speakers())
    if (!e.in_dataset) out_ids.push_back(e.id);

  vcgan::eval::SidModel sid;
  if (o.train_sid) {
    std::vector<std::string> ids;
    std::vector<std::vector<dsp::LogMel>> mels;
    for (const auto& e : registry.speakers()) {
      ids.push_back(e.id);
      mels.push_back(load_speaker_mels(run, records, e.id, c.mel));
    }
    log("evaluate: training the SID on " + std::to_string(ids.size()) + " speakers");
    sid = vcgan::eval::train_sid(vcgan::eval::split_alternating(ids, mels), c.sid);
    vcgan::eval::save_sid(run.sid(), sid);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "evaluate: SID held-back window top-1 %.1f%%", sid.eval_top1);
    log(buf);
  } else {
    if (!fs::exists(run.sid())) throw Error(ErrorCode::kFileNotFound, "no SID model in the run; pass --train-sid");
    sid = vcgan::eval::load_sid(run.sid());
  }

  const auto ckpt_path = pick_checkpoint(run, o.checkpoint);
  const auto ckpt = nets::load_checkpoint(ckpt_path);

  std::mt19937_64 rng(c.seed);
  auto choose = [&rng](std::vector<std::string> ids, int n) {
    std::shuffle(ids.begin(), ids.end(), rng);
    if (n >= 0 && n < static_cast<int>(ids.size())) ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto in_sources = choose(in_ids, grid.in_sources);
  const auto out_sources = choose(out_ids, grid.out_sources);
  const auto in_targets = choose(in_ids, grid.in_targets);
  const auto out_targets = choose(out_ids, grid.out_targets);

  std::vector<vcgan::eval::Trial> trials;
  std::set<std::tuple<std::string, std::string, char>> cells;
  auto run_group = [&](const std::vector<std::string>& sources, const char* sgroup,
                       const std::vector<std::string>& targets, const char* tgroup) {
    for (const auto& s : sources) {
      const auto source_stats = load_speaker_stats(run, s);
      std::vector<const data::UtteranceRecord*> utts;
      for (const auto& r : records)
        if (r.speaker_id == s) utts.push_back(&r);
      // Odd positions only: the SID trained on the even ones.
      std::vector<const data::UtteranceRecord*> held_back;
      for (std::size_t i = 1; i < utts.size(); i += 2) held_back.push_back(utts[i]);
      const int n = std::min<int>(grid.utterances, static_cast<int>(held_back.size()));
      for (const auto& t : targets) {
        if (t == s) continue;
        const auto ref = run_reference(run, c, ckpt_path, ckpt.params, records, t);
        const char gender = genders.count(t) ? genders.at(t) : '?';
        cells.insert({sgroup, tgroup, gender});
        for (int u = 0; u < n; ++u) {
          const auto& rec = *held_back[u];
          const auto conv = convert::convert_utterance(ckpt.params, rec.audio_path, source_stats, ref, c.mel);
          const auto heard = dsp::mel_spectrogram(conv.audio, c.mel);
          const int rank = vcgan::eval::rank_target(sid, heard, t);
          trials.push_back({{sgroup, tgroup, gender}, rank});
          log(std::string("evaluate: ") + s + " -> " + t + " rank " + std::to_string(rank));
        }
      }
    }
  };
  run_group(in_sources, "in", in_targets, "in");
  run_group(in_sources, "in", out_targets, "out");
  run_group(out_sources, "out", in_targets, "in");
  run_group(out_sources, "out", out_targets, "out");

  std::vector<vcgan::eval::GroupKey> keys;
  for (const auto& [sg, tg, gender] : cells) keys.push_back({sg, tg, gender});
  const auto report = vcgan::eval::topk_report(trials, keys, sid.n_speakers());
  fs::create_directories(run.reports());
  std::ofstream(run.reports() / "topk.json") << vcgan::eval::report_to_json(report) << '\n';
  const auto text = vcgan::eval::report_to_text(report);
  std::ofstream(run.reports() / "topk.txt") << text;
  std::cout << text;
  return 0;
}

int cmd_synth(const GlobalOptions& g, const SynthOptions& o) {
  if (o.speakers < 1 || o.utterances < 1 || !(o.seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synth needs positive speaker, utterance and duration counts");
  }
  const auto speakers = data::synthetic_speakers(o.speakers);
  const auto files =
      data::write_synthetic_corpus(o.out, speakers, o.utterances, o.seconds, 16000, g.seed.value_or(0));
  Json info = Json::object();
  for (const auto& s : speakers) info[s.id] = {{"gender", std::string(1, s.gender)}, {"f0", s.f0}};
  std::ofstream(o.out / "speaker_info.json") << info.dump(2) << '\n';
  std::cout << "synth: wrote " << files.size() << " files under " << o.out.string() << '\n';
  return 0;
}

}  // namespace vc
