#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "vcgan/dataset/manifest.hpp"
#include "vcgan/dataset/registry.hpp"
#include "vcgan/dataset/sampler.hpp"
#include "vcgan/dataset/synthetic.hpp"
#include "vcgan/dsp/audio.hpp"
#include "vcgan/error.hpp"

using namespace vcgan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "vcgan_unit_dataset" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_tone(const fs::path& path, double seconds = 0.5) {
  fs::create_directories(path.parent_path());
  const int n = static_cast<int>(seconds * 16000);
  dsp::Waveform w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.3f * static_cast<float>(std::sin(0.1 * i));
  dsp::write_wav(path, w, 16000);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIoError;
}

data::SpeakerData flat_speaker(const std::string& id, int utterances, int frames, float level) {
  data::SpeakerData s;
  s.stats.speaker_id = id;
  s.stats.per_bin_max.assign(8, level + 2.0f);
  s.stats.per_bin_min.assign(8, level - 2.0f);
  for (int u = 0; u < utterances; ++u) {
    dsp::MelMatrix m(8, frames);
    for (int t = 0; t < frames; ++t)
      for (int b = 0; b < 8; ++b) m.at(b, t) = level + 0.01f * static_cast<float>(t % 7) + 0.1f * u;
    s.utterances.push_back(m);
  }
  return s;
}

}  // namespace

TEST_CASE("speaker directories with nested chapters") {
  const auto root = fresh_dir("dirs");
  write_tone(root / "b" / "ch1" / "x.wav");
  write_tone(root / "b" / "ch2" / "x.wav");
  write_tone(root / "a" / "u1.wav");
  write_tone(root / "c" / "u1.wav");
  const auto m = data::build_manifest(root, data::DatasetLayout::kSpeakerDirectories);
  CHECK(m.registry.n_in_dataset() == 3);
  CHECK(m.records.size() == 4);
  CHECK(m.rejected.empty());
  CHECK(m.registry.index_of("a") == 0);
  CHECK(m.registry.index_of("c") == 2);
  for (const auto& r : m.records) CHECK(r.duration == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(std::is_sorted(m.records.begin(), m.records.end(), [](const auto& x, const auto& y) {
    return std::tie(x.speaker_id, x.audio_path) < std::tie(y.speaker_id, y.audio_path);
  }));
}

TEST_CASE("filename-prefix layout") {
  const auto root = fresh_dir("prefix");
  write_tone(root / "p1_000.wav");
  write_tone(root / "p1_001.wav");
  write_tone(root / "p2_000.wav");
  const auto m = data::build_manifest(root, data::DatasetLayout::kFilenamePrefix);
  CHECK(m.registry.training_ids() == std::vector<std::string>{"p1", "p2"});
  CHECK(data::records_of(m.records, "p1").size() == 2);
}

TEST_CASE("unreadable audio is reported, not fatal") {
  const auto root = fresh_dir("corrupt");
  write_tone(root / "a" / "ok.wav");
  write_tone(root / "b" / "ok.wav");
  std::ofstream(root / "b" / "broken.wav") << "RIFF garbage";
  const auto m = data::build_manifest(root, data::DatasetLayout::kSpeakerDirectories);
  REQUIRE(m.rejected.size() == 1);
  CHECK(m.rejected[0].path.find("broken.wav") != std::string::npos);
  CHECK(m.records.size() == 2);
}

TEST_CASE("dataset errors") {
  const auto empty = fresh_dir("empty");
  CHECK(code_of([&] { data::build_manifest(empty, data::DatasetLayout::kSpeakerDirectories); }) ==
        ErrorCode::kEmptyDataset);
  const auto r1 = fresh_dir("root1"), r2 = fresh_dir("root2");
  write_tone(r1 / "same" / "a.wav");
  write_tone(r2 / "same" / "b.wav");
  const std::vector<fs::path> roots{r1, r2};
  CHECK(code_of([&] { data::build_manifest(roots, data::DatasetLayout::kSpeakerDirectories); }) ==
        ErrorCode::kDuplicateSpeakerId);
  CHECK(code_of([] { data::SpeakerRegistry::from_ids({"x", "y", "x"}); }) == ErrorCode::kDuplicateSpeakerId);
}

TEST_CASE("manifest and registry round-trip") {
  const auto dir = fresh_dir("rt");
  std::vector<data::UtteranceRecord> recs{{"a", "/x/a.wav", std::string("/c/a.melc"), 1.25},
                                          {"b", "/x/b.wav", std::nullopt, 2.0}};
  data::save_manifest(dir / "m.jsonl", recs);
  CHECK(data::load_manifest(dir / "m.jsonl") == recs);
  const auto split = data::split_held_out(data::SpeakerRegistry::from_ids({"a", "b", "c"}), {"b"});
  data::save_registry(dir / "r.json", split.train);
  CHECK(data::load_registry(dir / "r.json") == split.train);
}

TEST_CASE("split_held_out reindexes the remaining speakers") {
  std::vector<std::string> ids;
  for (int i = 0; i < 291; ++i) ids.push_back("s" + std::to_string(1000 + i));
  std::vector<std::string> held(ids.end() - 40, ids.end());
  const auto split = data::split_held_out(data::SpeakerRegistry::from_ids(ids), held);
  CHECK(split.train.n_in_dataset() == 251);
  CHECK(split.held_out.speakers().size() == 40);
  std::set<int> indices;
  for (const auto& e : split.train.speakers())
    if (e.in_dataset) indices.insert(e.index);
  CHECK(indices.size() == 251);
  CHECK(*indices.begin() == 0);
  CHECK(*indices.rbegin() == 250);
  CHECK(code_of([&] { split.train.index_of(held[0]); }) == ErrorCode::kUnknownSpeaker);
  CHECK(code_of([&] { data::split_held_out(split.train, {"nobody"}); }) == ErrorCode::kUnknownSpeaker);
}

TEST_CASE("ordered speaker pairs are drawn uniformly") {
  const auto reg = data::SpeakerRegistry::from_ids({"a", "b", "c", "d"});
  std::vector<data::SpeakerData> sp;
  for (int i = 0; i < 4; ++i) sp.push_back(flat_speaker(reg.id_at(i), 2, 12, static_cast<float>(i)));
  const data::TrainingCorpus corpus(reg, sp, 8);
  auto rng = data::make_stream(42, 0);
  std::map<std::pair<int, int>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto p = data::sample_training_pair(corpus, rng);
    REQUIRE(p.source_index != p.target_index);
    CHECK(p.source_window.frames == 8);
    CHECK(p.target_window.n_mels == 8);
    ++counts[{p.source_index, p.target_index}];
  }
  REQUIRE(counts.size() == 12);
  const double expect = draws / 12.0;
  for (const auto& [pair, n] : counts) CHECK(std::abs(n - expect) < 0.2 * expect);
}

TEST_CASE("crops come from the scaled utterances") {
  const auto reg = data::SpeakerRegistry::from_ids({"a", "b"});
  std::vector<data::SpeakerData> sp{flat_speaker("a", 1, 10, -1.0f), flat_speaker("b", 1, 10, 1.0f)};
  const data::TrainingCorpus corpus(reg, sp, 8);
  auto rng = data::make_stream(1, 0);
  for (int i = 0; i < 20; ++i) {
    const auto p = data::sample_training_pair(corpus, rng);
    for (float v : p.source_window.values) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("corpus rejects too few speakers and short speakers") {
  const auto one = data::SpeakerRegistry::from_ids({"a"});
  CHECK(code_of([&] { data::TrainingCorpus(one, {flat_speaker("a", 1, 10, 0)}, 8); }) ==
        ErrorCode::kInsufficientSpeakers);
  const auto two = data::SpeakerRegistry::from_ids({"a", "b"});
  CHECK(code_of([&] { data::TrainingCorpus(two, {flat_speaker("a", 1, 10, 0), flat_speaker("b", 2, 5, 0)}, 8); }) ==
        ErrorCode::kWindowTooShort);
  auto b = flat_speaker("b", 1, 9, 0);
  b.utterances.push_back(flat_speaker("b", 1, 5, 0).utterances[0]);
  const data::TrainingCorpus mixed(two, {flat_speaker("a", 1, 10, 0), b}, 8);
  CHECK(mixed.skipped() == 1);
  CHECK(mixed.utterances(1).size() == 1);
}

TEST_CASE("rng streams are reproducible and distinct") {
  auto a = data::make_stream(5, 0), b = data::make_stream(5, 0), c = data::make_stream(5, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
}

TEST_CASE("synthetic corpus is deterministic") {
  const auto speakers = data::synthetic_speakers(5);
  CHECK(speakers.size() == 5);
  std::set<std::string> ids;
  for (const auto& s : speakers) ids.insert(s.id);
  CHECK(ids.size() == 5);
  const auto w1 = data::synthesize_utterance(speakers[0], 16000, 0.5, 3);
  const auto w2 = data::synthesize_utterance(speakers[0], 16000, 0.5, 3);
  CHECK(w1.size() == 8000);
  CHECK(w1 == w2);
  CHECK(w1 != data::synthesize_utterance(speakers[0], 16000, 0.5, 4));
}
