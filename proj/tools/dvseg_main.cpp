#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "dvseg/eval.hpp"
#include "dvseg/io_formats.hpp"
#include "dvseg/pipeline.hpp"
#include "dvseg/synthetic.hpp"
#include "selftest.hpp"

namespace {

using namespace dvseg;

// channel count from a feature file header without loading the payload
int peek_feature_channels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open feature file");
  char header[24];
  in.read(header, sizeof(header));
  if (in.gcount() != sizeof(header) || std::string(header, 4) != "FTN1")
    throw FormatError(path + ": not a feature file");
  const unsigned char* b = reinterpret_cast<const unsigned char*>(header + 8);
  return static_cast<int>(b[0] | (b[1] << 8) | (b[2] << 16) | (b[3] << 24));
}

struct RunOptions {
  std::string sequence, config, out, features;
  bool no_update = false;
};

int cmd_run(const RunOptions& opt) {
  RunFileConfig file = read_run_config(opt.config);
  if (!opt.features.empty()) file.feature_source = opt.features;

  int precomputed_channels = 0;
  if (file.feature_source.value_or("toy") == "precomputed")
    precomputed_channels = peek_feature_channels(feature_path(opt.sequence, 0));

  EngineConfig cfg = engine_config_from_file(file, precomputed_channels);
  cfg.updates_enabled = !opt.no_update;

  const int frames = sequence_frame_count(opt.sequence);
  std::filesystem::create_directories(opt.out);
  std::ofstream diag(opt.out + "/diagnostics.txt");

  auto out_name = [&opt](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "/%05d.pgm", i);
    return opt.out + buf;
  };

  Engine engine(cfg, make_feature_provider(cfg.features, opt.sequence));
  engine.set_diagnostics([&diag](const FrameDiagnostics& d) {
    diag << "frame " << d.frame << " ms " << d.millis;
    if (d.updated) {
      diag << " update";
      for (const GnStepRecord& r : d.update_records)
        diag << " loss " << r.loss_before << " -> " << r.loss_after;
    }
    diag << "\n";
  });

  const Tensor first = read_ppm(frame_path(opt.sequence, 0));
  const IndexMask annotation = read_pgm(mask_path(opt.sequence, 0));
  const OutputMask out0 = engine.initialize(first, annotation);
  write_pgm(out_name(0), out0.labels);

  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 1; i < frames; ++i) {
    const OutputMask out = engine.process_frame(read_ppm(frame_path(opt.sequence, i)));
    write_pgm(out_name(i), out.labels);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (frames > 1) {
    diag << "fps " << (frames - 1) / secs << "\n";
    std::fprintf(stderr, "processed %d frames at %.2f fps (excluding initialization)\n",
                 frames - 1, (frames - 1) / secs);
  }
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& report_path) {
  // accept either a sequence directory or its masks/ subdirectory
  const std::string gt_dir =
      std::filesystem::exists(gt + "/masks/00000.pgm") ? gt + "/masks" : gt;
  const EvalReport report = evaluate_dirs(pred, gt_dir);
  std::ofstream out(report_path, std::ios::trunc);
  if (!out) throw FormatError(report_path + ": cannot open report for writing");
  write_report(out, report);
  std::fprintf(stderr, "mean_j %.6f over %d frames\n", report.mean_j, report.frames - 1);
  return 0;
}

struct SynthOptions {
  std::string out, tier = "easy";
  std::uint64_t seed = 0;
  int frames = 60, width = 640, height = 384, objects = 1;
};

int cmd_synth(const SynthOptions& opt) {
  const SyntheticSceneSpec spec = make_tier_spec(tier_from_name(opt.tier), opt.seed, opt.frames,
                                                 opt.width, opt.height, opt.objects);
  write_sequence(spec, opt.out);
  std::fprintf(stderr, "wrote %d frames to %s\n", opt.frames, opt.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online discriminative video object segmentation"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "segment a sequence directory");
  run->add_option("--sequence", run_opt.sequence, "sequence directory")->required();
  run->add_option("--config", run_opt.config, "key=value run configuration")->required();
  run->add_option("--out", run_opt.out, "output directory for label masks")->required();
  run->add_option("--features", run_opt.features, "feature source override")
      ->check(CLI::IsMember({"toy", "precomputed"}));
  run->add_flag("--no-update", run_opt.no_update, "freeze the model after the first frame");

  std::string pred, gt, report;
  CLI::App* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--pred", pred, "directory with predicted NNNNN.pgm masks")->required();
  ev->add_option("--gt", gt, "sequence directory or its masks/ directory")->required();
  ev->add_option("--report", report, "output report path")->required();

  SynthOptions synth_opt;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic sequence");
  synth->add_option("--out", synth_opt.out, "output sequence directory")->required();
  synth->add_option("--tier", synth_opt.tier, "difficulty tier")
      ->check(CLI::IsMember({"easy", "medium", "hard"}));
  synth->add_option("--seed", synth_opt.seed, "scene seed");
  synth->add_option("--frames", synth_opt.frames, "frame count")->check(CLI::PositiveNumber);
  synth->add_option("--width", synth_opt.width, "frame width")->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_opt.height, "frame height")->check(CLI::PositiveNumber);
  synth->add_option("--objects", synth_opt.objects, "annotated object count (1 or 2)");

  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_opt);
    if (ev->parsed()) return cmd_eval(pred, gt, report);
    if (synth->parsed()) return cmd_synth(synth_opt);
    if (selftest->parsed()) return run_selftest() == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
