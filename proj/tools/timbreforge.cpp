#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "timbre/audio.hpp"
#include "timbre/dataset.hpp"
#include "timbre/inference.hpp"
#include "timbre/melspec.hpp"
#include "timbre/metrics.hpp"
#include "timbre/trainer.hpp"

namespace fs = std::filesystem;
using namespace timbre;

namespace {

uint64_t resolve_seed(uint64_t flag_seed, bool flag_set) {
  if (flag_set) return flag_seed;
  if (const char* env = std::getenv("TIMBRE_FORGE_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const std::string& manifest_path, double target_db,
                   uint64_t seed) {
  std::vector<std::pair<std::string, std::vector<std::string>>> domains;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (!entry.is_directory()) continue;
    std::string domain = entry.path().filename().string();
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (f.path().extension() == ".wav") files.push_back(f.path().string());
    std::sort(files.begin(), files.end());
    if (!files.empty()) domains.emplace_back(domain, files);
  }
  std::sort(domains.begin(), domains.end());
  if (domains.empty())
    throw InsufficientData("no domain subdirectories with WAV files in " +
                           in_dir);

  StftConfig stft;
  std::vector<std::pair<std::string, std::vector<std::string>>> processed;
  for (const auto& [domain, files] : domains) {
    fs::create_directories(fs::path(out_dir) / domain);
    std::vector<std::string> out_files;
    for (const auto& file : files) {
      AudioClip clip = read_wav(file);
      clip = resample(clip, kPipelineSampleRate);
      std::string warning;
      clip = rms_normalize(clip, target_db, &warning);
      if (!warning.empty())
        std::cerr << file << ": " << warning << "\n";
      clip = mask_silence(clip);

      fs::path stem = fs::path(file).stem();
      fs::path wav_out = fs::path(out_dir) / domain / (stem.string() + ".wav");
      write_wav(clip, wav_out.string());
      MelSpectrogram mel = mel_spectrogram(clip, stft);
      fs::path mel_out = fs::path(out_dir) / domain / (stem.string() + ".mels");
      write_mel_cache(mel, mel_out.string());
      out_files.push_back(wav_out.string());
    }
    processed.emplace_back(domain, out_files);
  }

  DatasetManifest manifest = split_dataset(processed, seed);
  fs::create_directories(fs::path(manifest_path).parent_path());
  write_manifest(manifest, manifest_path);
  std::cout << "wrote " << manifest_path << " (" << manifest.domains.size()
            << " domains)\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  TrainConfig cfg = train_config_from_json_file(config_path);
  if (cfg.manifest.empty())
    throw ConfigError("config must set 'manifest' for training");
  DatasetManifest manifest = read_manifest(cfg.manifest);
  for (const auto& d : cfg.domains)
    if (!manifest.has_domain(d))
      throw ConfigError("domain '" + d + "' not present in the manifest");

  ExcerptDataset data =
      ExcerptDataset::from_manifest(manifest, Split::kTrain, StftConfig{});
  std::string final_path;
  if (resume.empty()) {
    Trainer trainer(cfg, std::move(data));
    final_path = trainer.run();
  } else {
    Trainer trainer(cfg, std::move(data), resume);
    final_path = trainer.run();
  }
  std::cout << "final checkpoint: " << final_path << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& in,
              const std::string& source, const std::string& target,
              const std::string& out, bool plot, int overlap, bool stochastic,
              uint64_t seed) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (!source.empty()) ck.bundle.decoder(source);  // validates the name
  BundleTranslator translator(ck.bundle, target, !stochastic, seed);

  EndToEndOptions opts;
  opts.overlap = overlap;
  if (plot) {
    fs::path dir = fs::path(out).parent_path();
    opts.png_dir = dir.empty() ? "." : dir.string();
  }
  end_to_end(in, out, translator, StftConfig{}, opts);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& manifest_path,
                 const std::string& out_json, const std::string& out_csv,
                 bool no_fad, int stride, const std::string& reference_split) {
  Checkpoint ck = load_checkpoint(ckpt);
  DatasetManifest manifest = read_manifest(manifest_path);

  EvalConfig cfg;
  cfg.excerpt_stride = stride;
  cfg.compute_fad = !no_fad;
  cfg.out_json = out_json;
  cfg.out_csv = out_csv;
  if (reference_split == "train")
    cfg.reference_split = Split::kTrain;
  else if (reference_split == "valid")
    cfg.reference_split = Split::kValid;
  else if (reference_split == "test")
    cfg.reference_split = Split::kTest;
  else
    throw ConfigError("unknown split: " + reference_split);

  EvalReport report = evaluate_model(ck.bundle, manifest, cfg);
  std::cout << report.to_json() << "\n";
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_plot(const std::string& in, const std::string& out) {
  MelSpectrogram mel;
  if (fs::path(in).extension() == ".mels") {
    mel = read_mel_cache(in);
  } else {
    AudioClip clip = read_wav(in);
    clip = resample(clip, kPipelineSampleRate);
    mel = mel_spectrogram(clip, StftConfig{});
  }
  write_image(mel, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_validate_config(const std::string& config_path) {
  TrainConfig cfg = train_config_from_json_file(config_path);
  if (!cfg.manifest.empty() && fs::exists(cfg.manifest)) {
    DatasetManifest manifest = read_manifest(cfg.manifest);
    for (const auto& d : cfg.domains)
      if (!manifest.has_domain(d))
        throw ConfigError("domain '" + d + "' not present in manifest " +
                          cfg.manifest);
  }
  std::cout << train_config_to_json(cfg) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"timbreforge: mel-spectrogram timbre transfer"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs", jobs, "worker thread cap");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "normalize audio, build splits");
  std::string pre_in, pre_out, pre_manifest;
  double pre_db = -30.0;
  uint64_t pre_seed = 0;
  bool pre_seed_set = false;
  pre->add_option("--in", pre_in, "directory of per-domain subdirectories")
      ->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--manifest", pre_manifest, "manifest path")->required();
  pre->add_option("--target-db", pre_db, "RMS normalization target (dB)");
  pre->add_option("--seed", pre_seed, "split shuffle seed")
      ->each([&](const std::string&) { pre_seed_set = true; });

  // train
  auto* train = app.add_subcommand("train", "train a model from a config");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "training config JSON")
      ->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // infer
  auto* infer = app.add_subcommand("infer", "translate a WAV between domains");
  std::string inf_ckpt, inf_in, inf_source, inf_target, inf_out;
  bool inf_plot = false, inf_stochastic = false;
  int inf_overlap = 4;
  uint64_t inf_seed = 0;
  bool inf_seed_set = false;
  infer->add_option("--ckpt", inf_ckpt, "model checkpoint")->required();
  infer->add_option("--in", inf_in, "input WAV")->required();
  infer->add_option("--source", inf_source, "source domain name");
  infer->add_option("--target", inf_target, "target domain name")->required();
  infer->add_option("--out", inf_out, "output WAV")->required();
  infer->add_flag("--plot", inf_plot, "also write input/output mel PNGs");
  infer->add_flag("--stochastic", inf_stochastic,
                  "sample the latent instead of using the mean");
  infer->add_option("--seed", inf_seed, "latent sampling seed")
      ->each([&](const std::string&) { inf_seed_set = true; });
  infer->add_option("--overlap", inf_overlap, "windows covering each frame");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "SSIM / FAD evaluation report");
  std::string ev_ckpt, ev_manifest, ev_json, ev_csv, ev_ref = "train";
  bool ev_no_fad = false;
  int ev_stride = kPatchSize;
  eval->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  eval->add_option("--manifest", ev_manifest, "dataset manifest")->required();
  eval->add_option("--out-json", ev_json, "JSON report path");
  eval->add_option("--out-csv", ev_csv, "CSV report path");
  eval->add_flag("--no-fad", ev_no_fad, "skip the FAD computation");
  eval->add_option("--stride", ev_stride, "excerpt stride in frames");
  eval->add_option("--reference-split", ev_ref,
                   "split providing the real audio for FAD");

  // plot
  auto* plot = app.add_subcommand("plot", "render a mel-spectrogram PNG");
  std::string plot_in, plot_out;
  plot->add_option("--in", plot_in, "WAV or .mels cache")->required();
  plot->add_option("--out", plot_out, "PNG path")->required();

  // validate-config
  auto* vc = app.add_subcommand("validate-config",
                                "check a training config and print it");
  std::string vc_config;
  vc->add_option("--config", vc_config, "training config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*pre)
      return cmd_preprocess(pre_in, pre_out, pre_manifest, pre_db,
                            resolve_seed(pre_seed, pre_seed_set));
    if (*train) return cmd_train(train_config, train_resume);
    if (*infer)
      return cmd_infer(inf_ckpt, inf_in, inf_source, inf_target, inf_out,
                       inf_plot, inf_overlap, inf_stochastic,
                       resolve_seed(inf_seed, inf_seed_set));
    if (*eval)
      return cmd_evaluate(ev_ckpt, ev_manifest, ev_json, ev_csv, ev_no_fad,
                          ev_stride, ev_ref);
    if (*plot) return cmd_plot(plot_in, plot_out);
    if (*vc) return cmd_validate_config(vc_config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
