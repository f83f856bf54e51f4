#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "timbre/dataset.hpp"
#include "timbre/losses.hpp"
#include "timbre/melspec.hpp"
#include "timbre/model.hpp"
#include "timbre/optim.hpp"

namespace timbre {

enum class VaeReconPath { kSelf, kInverse };

const char* vae_recon_path_name(VaeReconPath p);
VaeReconPath vae_recon_path_from_name(const std::string& s);

struct TrainConfig {
  std::vector<std::string> domains;
  int epochs = 100;
  int batch_size = 4;  // per timbre domain
  LossWeights weights;
  double alpha = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  VariantFlags variant;
  VaeReconPath vae_recon_path = VaeReconPath::kSelf;
  uint64_t seed = 0;
  int checkpoint_every = 25;   // epochs
  int steps_per_epoch = 0;     // 0 = derive from dataset size
  std::string manifest;        // path, used by the CLI
  std::string out_dir = ".";

  void validate() const;
};

TrainConfig train_config_from_json_file(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

// Normalized 128-bin mel grids per domain, training currency of the model.
struct ExcerptDataset {
  std::map<std::string, std::vector<Grid>> domains;

  // Reads every file of `split` from the manifest, resamples to the pipeline
  // rate and computes mel spectrograms with `cfg`.
  static ExcerptDataset from_manifest(const DatasetManifest& manifest,
                                      Split split, const StftConfig& cfg);
};

struct ExcerptBatch {
  std::string domain;
  Tensor4 patches;  // batch x 1 x 128 x 128
  std::vector<std::pair<int, int>> origins;  // (recording id, start frame)
};

ExcerptBatch sample_batch(const ExcerptDataset& data, const std::string& domain,
                          int batch_size, Rng& rng);

// One checkpointable unit: parameters plus optimizer states.
struct Checkpoint {
  ModelBundle bundle;
  std::map<std::string, AdamState> opt_states;
  int next_epoch = 0;
};

void save_checkpoint(const ModelBundle& bundle,
                     const std::map<std::string, AdamState>& opt_states,
                     int next_epoch, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

class Trainer {
 public:
  Trainer(TrainConfig cfg, ExcerptDataset data);
  // Resume: verifies the checkpoint matches the configured architecture.
  Trainer(TrainConfig cfg, ExcerptDataset data, const std::string& checkpoint);

  // Full training loop; writes the loss CSV and periodic checkpoints into
  // cfg.out_dir. Returns the path of the final checkpoint.
  std::string run();

  // One simultaneous generator/discriminator update on a domain pair.
  LossReport pair_step(const ExcerptBatch& batch_a, const ExcerptBatch& batch_b,
                       double lr, Rng& rng);

  ModelBundle& bundle() { return bundle_; }
  const TrainConfig& config() const { return cfg_; }
  const std::map<std::string, AdamState>& opt_states() const {
    return opt_states_;
  }
  int steps_per_epoch() const;
  std::vector<std::pair<std::string, std::string>> training_pairs() const;

  // After pair_step, true iff no generator parameter holds a nonzero
  // gradient (checked right after the discriminator backward pass).
  bool last_disc_backward_clean() const { return disc_backward_clean_; }

 private:
  void adam_update(const std::vector<NamedParam>& params, double lr);

  TrainConfig cfg_;
  ExcerptDataset data_;
  ModelBundle bundle_;
  std::map<std::string, AdamState> opt_states_;
  int start_epoch_ = 0;
  bool disc_backward_clean_ = true;
};

}  // namespace timbre
