// Command-line driver: analyze / train / eval / infer / plot.

#include <torch/torch.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "freqsr/config.hpp"
#include "freqsr/data.hpp"
#include "freqsr/degradation.hpp"
#include "freqsr/errors.hpp"
#include "freqsr/eval.hpp"
#include "freqsr/image.hpp"
#include "freqsr/training.hpp"

namespace fs = std::filesystem;
using namespace freqsr;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kConfig = 3, kIo = 4, kFormat = 5, kNumeric = 6 };

const std::map<double, double> kDefaultThresholds = {{2.0, 0.09}, {3.0, 0.2}, {4.0, 0.5}};

struct AnalyzeArgs {
  std::string hr_dir;
  std::string lr_dir;
  std::vector<double> scales{2.0, 3.0, 4.0};
  std::vector<double> thresholds;
  std::string out = "vfp_histogram.csv";
};

struct TrainArgs {
  std::string config;
  std::string train_dir;
  std::string log = "train_log.csv";
  std::string checkpoint = "freqsr.ckpt";
  std::string resume;
  int64_t steps = 0;
  int64_t seed = -1;
  int fixed_action = -1;
  double scale = 0.0;
  bool no_sfa = false;
  bool no_dense = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::vector<double> scales{2.0, 3.0, 4.0};
  std::string out = "eval.csv";
};

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  double scale = 2.0;
};

struct PlotArgs {
  std::string histogram;
  std::string log;
  std::string out_dir = "plots";
};

int run_analyze(const AnalyzeArgs& a) {
  std::map<double, double> thresholds;
  if (a.thresholds.empty()) {
    for (const double r : a.scales) thresholds[r] = threshold_for(kDefaultThresholds, r);
  } else if (a.thresholds.size() == 1) {
    for (const double r : a.scales) thresholds[r] = a.thresholds[0];
  } else if (a.thresholds.size() == a.scales.size()) {
    for (std::size_t i = 0; i < a.scales.size(); ++i) thresholds[a.scales[i]] = a.thresholds[i];
  } else {
    throw ConfigError("--threshold needs one value or one per --scale");
  }
  const auto files = list_images(a.hr_dir);
  if (files.empty()) throw IoError("no images in '" + a.hr_dir + "'");

  std::vector<AnalysisPair> pairs;
  for (const auto& file : files) {
    const auto hr = to_luminance(load_image(file));
    for (const double r : a.scales) {
      check_scale(r);
      torch::Tensor lr;
      if (!a.lr_dir.empty()) {
        const auto lr_path = fs::path(a.lr_dir) / file.filename();
        if (!fs::exists(lr_path)) throw IoError("missing LR counterpart '" + lr_path.string() + "'");
        lr = to_luminance(load_image(lr_path));
        if (lr.sizes() != hr.sizes()) lr = bicubic_resize(lr, hr.size(0), hr.size(1)).clamp(0.0, 1.0);
      } else {
        lr = degrade(hr, r);
      }
      pairs.push_back(AnalysisPair{hr, lr, r});
    }
  }
  const auto histograms = profile_corpus(pairs, thresholds);
  export_histograms(histograms, a.out);
  std::printf("%6s %9s %9s %8s %5s %5s %8s %9s\n", "scale", "threshold", "blocks", "skipped", "min", "max",
              "mean", "in[2,4]");
  for (const auto& h : histograms) {
    std::printf("%6.2f %9.3f %9lld %8lld %5d %5d %8.3f %9.4f\n", h.scale, h.threshold,
                static_cast<long long>(h.total_blocks), static_cast<long long>(h.skipped_blocks), h.min_vfp(),
                h.max_vfp(), h.mean_vfp(), h.fraction_in(2, 4));
  }
  std::printf("wrote %s\n", a.out.c_str());
  return kOk;
}

int run_train(const TrainArgs& a) {
  TrainConfig config;
  config.train_dir = (fs::path(FREQSR_DATA_DIR) / "train").string();
  if (!a.config.empty()) config = load_config(a.config, config);
  if (!a.train_dir.empty()) config.train_dir = a.train_dir;
  if (a.steps > 0) config.steps = a.steps;
  if (a.seed >= 0) config.seed = static_cast<uint64_t>(a.seed);
  if (a.fixed_action >= 0) config.model.fixed_action = a.fixed_action;
  if (a.scale != 0.0) config.train_scale = a.scale;
  if (a.no_sfa) config.model.sfr.sfa = false;
  if (a.no_dense) config.model.sfr.dense = false;
  config.log_path = a.log;
  config.checkpoint_path = a.checkpoint;
  config.validate();

  const auto manifest = build_manifest(config.train_dir, "train", config.patch_size, config.patch_size / 2);
  if (manifest.entries.empty()) throw IoError("no training patches in '" + config.train_dir + "'");
  Trainer trainer(config, manifest);
  if (!a.resume.empty()) trainer.restore(a.resume);
  if (fs::path(a.log).has_parent_path()) fs::create_directories(fs::path(a.log).parent_path());
  std::ofstream log(a.log);
  if (!log) throw IoError("cannot write training log '" + a.log + "'");
  const int64_t every = std::max<int64_t>(1, config.steps / 20);
  trainer.run(&log, [&](const StepMetrics& m) {
    if (m.step % every == 0 || m.step == config.steps) {
      std::printf("step %6lld  lr %.3e  l_sfr %.6f  l_dct %.3e  l_sfd %.5f  mean_a %.2f\n",
                  static_cast<long long>(m.step), m.lr, m.losses.l_sfr, m.losses.l_dct, m.losses.l_sfd,
                  m.mean_action);
      std::fflush(stdout);
    }
  });
  std::printf("wrote %s and %s\n", a.log.c_str(), a.checkpoint.c_str());
  return kOk;
}

int run_eval_cmd(const EvalArgs& a) {
  auto loaded = load_checkpoint(a.checkpoint);
  const auto report = run_eval(a.data, a.scales, loaded.model, fs::path(a.checkpoint).filename().string());
  write_eval_csv(report, a.out);
  std::cout << format_summary(report) << "wrote " << a.out << '\n';
  return kOk;
}

int run_infer(const InferArgs& a) {
  const auto image = load_image(a.input);
  const auto sr = super_resolve(image, a.scale, a.checkpoint);
  save_image(a.output, sr);
  std::printf("%lldx%lld -> %lldx%lld, wrote %s\n", static_cast<long long>(image.size(-1)),
              static_cast<long long>(image.size(-2)), static_cast<long long>(sr.size(-1)),
              static_cast<long long>(sr.size(-2)), a.output.c_str());
  return kOk;
}

int run_plot(const PlotArgs& a) {
  if (a.histogram.empty() && a.log.empty()) throw ConfigError("plot needs --histogram and/or --log");
  if (!a.histogram.empty()) {
    const auto png = fs::path(a.out_dir) / "vfp_histogram.png";
    plot_histograms(a.histogram, png);
    std::printf("wrote %s\n", png.string().c_str());
  }
  if (!a.log.empty()) {
    const auto png = fs::path(a.out_dir) / "training_loss.png";
    plot_training_log(a.log, png);
    std::printf("wrote %s\n", png.string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Frequency-domain arbitrary-scale super-resolution"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* cmd_analyze = app.add_subcommand("analyze", "VFP statistics of HR/LR pairs");
  cmd_analyze->add_option("--hr", analyze.hr_dir, "HR image directory")->required()->check(CLI::ExistingDirectory);
  cmd_analyze->add_option("--lr", analyze.lr_dir, "LR counterparts (same file names); default: bicubic degrade")
      ->check(CLI::ExistingDirectory);
  cmd_analyze->add_option("--scale", analyze.scales, "scale factors")->check(CLI::Range(kMinScale, kMaxScale));
  cmd_analyze->add_option("--threshold", analyze.thresholds, "T per scale, or one T for all")
      ->check(CLI::PositiveNumber);
  cmd_analyze->add_option("--out", analyze.out, "histogram CSV (a .json mirror is written next to it)");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "joint training on a patch corpus");
  cmd_train->add_option("--config", train.config, "keyed config file")->check(CLI::ExistingFile);
  cmd_train->add_option("--train-dir", train.train_dir, "training image directory");
  cmd_train->add_option("--steps", train.steps, "override step count")->check(CLI::PositiveNumber);
  cmd_train->add_option("--seed", train.seed, "override seed")->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--log", train.log, "training log CSV");
  cmd_train->add_option("--checkpoint", train.checkpoint, "checkpoint output path");
  cmd_train->add_option("--resume", train.resume, "restore weights and optimizer state first")
      ->check(CLI::ExistingFile);
  cmd_train->add_option("--fixed-action", train.fixed_action, "pin every block's VFP (0 = learned)")
      ->check(CLI::Range(0, 64));
  cmd_train->add_option("--scale", train.scale, "train at one scale instead of the 30-value grid")
      ->check(CLI::Range(kMinScale, kMaxScale));
  cmd_train->add_flag("--no-sfa", train.no_sfa, "drop the scale-aware adaption blocks");
  cmd_train->add_flag("--no-dense", train.no_dense, "plain residual chains instead of dense groups");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "PSNR/SSIM on luminance against bicubic");
  cmd_eval->add_option("--checkpoint", eval.checkpoint)->required();
  cmd_eval->add_option("--data", eval.data, "HR image directory")->required();
  cmd_eval->add_option("--scale", eval.scales)->check(CLI::Range(kMinScale, kMaxScale));
  cmd_eval->add_option("--out", eval.out, "per-image CSV");

  InferArgs infer;
  auto* cmd_infer = app.add_subcommand("infer", "super-resolve one image");
  cmd_infer->add_option("--checkpoint", infer.checkpoint)->required();
  cmd_infer->add_option("--input", infer.input)->required()->check(CLI::ExistingFile);
  cmd_infer->add_option("--output", infer.output)->required();
  cmd_infer->add_option("--scale", infer.scale)->check(CLI::Range(kMinScale, kMaxScale));

  PlotArgs plot;
  auto* cmd_plot = app.add_subcommand("plot", "render VFP histograms and loss curves");
  cmd_plot->add_option("--histogram", plot.histogram, "histogram CSV from analyze")->check(CLI::ExistingFile);
  cmd_plot->add_option("--log", plot.log, "training log CSV")->check(CLI::ExistingFile);
  cmd_plot->add_option("--out-dir", plot.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*cmd_analyze) return run_analyze(analyze);
    if (*cmd_train) return run_train(train);
    if (*cmd_eval) return run_eval_cmd(eval);
    if (*cmd_infer) return run_infer(infer);
    if (*cmd_plot) return run_plot(plot);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const RangeError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
