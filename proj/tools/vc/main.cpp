#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "commands.hpp"
#include "vcgan/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vc: many-to-many voice conversion with speaker-embedding conditioned Cycle-GANs"};
  app.require_subcommand(1);

  vc::GlobalOptions global;
  app.add_option("--config", global.config, "JSON config overlay")->check(CLI::ExistingFile);
  app.add_option("--seed", global.seed, "Seed for training, SID and subset choices");

  vc::PreprocessOptions pre;
  auto* preprocess = app.add_subcommand("preprocess", "Scan a dataset, cache log-mels, compute per-speaker stats");
  preprocess->add_option("--data", pre.data, "Dataset root")->required();
  preprocess->add_option("--out", pre.out, "Run directory")->required();
  preprocess->add_option("--layout", pre.layout, "speaker_dirs or prefix")
      ->check(CLI::IsMember({"speaker_dirs", "prefix"}));
  preprocess->add_option("--held-out", pre.held_out, "Speaker ids kept out of training")->delimiter(',');

  vc::TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train (or resume) the generator, embedding and discriminator");
  train->add_option("--run", tr.run, "Run directory")->required();
  train->add_option("--steps", tr.steps, "Total steps")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tr.batch_size, "Pairs per step")->check(CLI::PositiveNumber);
  train->add_option("--resume", tr.resume, "Checkpoint path or name under <run>/checkpoints");
  train->add_option("--log-every", tr.log_every, "Progress line interval")->check(CLI::PositiveNumber);

  vc::ConvertOptions cv;
  auto* convert = app.add_subcommand("convert", "Convert one utterance to a target voice");
  convert->add_option("--run", cv.run, "Run directory")->required();
  convert->add_option("--source", cv.source, "Source WAV")->required()->check(CLI::ExistingFile);
  convert->add_option("--source-id", cv.source_id, "Speaker id whose stats scale the source");
  auto* tid = convert->add_option("--target-id", cv.target_id, "Target speaker of the run");
  auto* tsamples =
      convert->add_option("--target-samples", cv.target_samples, "WAVs of an unseen target")->check(CLI::ExistingFile);
  tid->excludes(tsamples);
  convert->add_option("--out", cv.out, "Output WAV")->required();
  convert->add_option("--checkpoint", cv.checkpoint, "Checkpoint (default: latest)")->check(CLI::ExistingFile);
  convert->add_option("--spectrogram", cv.spectrogram, "Also write source | converted as a PPM image");
  convert->add_flag("--overlap-add", cv.overlap_add, "Cross-fade half-overlapping windows");

  vc::EmbedOptions em;
  auto* embed = app.add_subcommand("embed", "Write the speaker embedding of some samples");
  embed->add_option("--run", em.run, "Run directory")->required();
  embed->add_option("--samples", em.samples, "WAV files")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", em.out, "Output JSON")->required();
  embed->add_option("--checkpoint", em.checkpoint, "Checkpoint (default: latest)")->check(CLI::ExistingFile);

  vc::EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Top-K speaker identification of converted audio");
  evaluate->add_option("--run", ev.run, "Run directory");
  evaluate->add_option("--grid", ev.grid, "e.g. sources=2+2,targets=4,utterances=5");
  evaluate->add_flag("--train-sid", ev.train_sid, "Train the identifier first");
  evaluate->add_flag("--chance-only", ev.chance_only, "Print the chance baseline and exit");
  evaluate->add_option("--speakers", ev.speakers, "M for --chance-only")->check(CLI::PositiveNumber);
  evaluate->add_option("--checkpoint", ev.checkpoint, "Checkpoint (default: latest)")->check(CLI::ExistingFile);

  vc::SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "Write a small synthetic multi-speaker corpus");
  synth->add_option("--out", sy.out, "Dataset root")->required();
  synth->add_option("--speakers", sy.speakers, "Speaker count")->check(CLI::PositiveNumber);
  synth->add_option("--utterances", sy.utterances, "Utterances per speaker")->check(CLI::PositiveNumber);
  synth->add_option("--seconds", sy.seconds, "Utterance length")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; everything else is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*preprocess) return vc::cmd_preprocess(global, pre);
    if (*train) return vc::cmd_train(global, tr);
    if (*convert) return vc::cmd_convert(global, cv);
    if (*embed) return vc::cmd_embed(global, em);
    if (*evaluate) {
      if (!ev.chance_only && (ev.run.empty() || ev.grid.empty())) {
        std::cerr << "vc: evaluate needs --run and --grid (or --chance-only)\n";
        return 2;
      }
      return vc::cmd_evaluate(global, ev);
    }
    if (*synth) return vc::cmd_synth(global, sy);
  } catch (const vcgan::Error& e) {
    // what() already leads with the code name.
    std::string msg = e.what();
    const auto code = std::string(vcgan::to_string(e.code()));
    if (msg.rfind(code + ": ", 0) == 0) msg.erase(0, code.size() + 2);
    std::cerr << "vc: error [" << code << "]: " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "vc: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
