#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfd/classifier.hpp"
#include "tfd/cwt.hpp"
#include "tfd/datagen.hpp"
#include "tfd/vae.hpp"

// End-to-end run pipeline: dataset generation -> scalogram cache -> twin
// VAE training -> classifier training -> evaluation -> report. Every stage
// reads and writes a single run directory and is deterministic for a fixed
// config, so re-running a stage reproduces its artifacts byte for byte.
namespace tfd::pipeline {

// Parsed run configuration. Every seed is required in the JSON; nothing
// falls back to wall-clock entropy.
struct RunConfig {
  std::string out_dir;

  datagen::DatasetConfig data;
  cwt::Prefactor prefactor = cwt::Prefactor::kReciprocal;
  uint64_t split_seed = 0;

  vae::VaeHyper vae_hyper;
  uint64_t vae_seed_positive = 0;
  uint64_t vae_seed_negative = 0;

  clf::ClassifierHyper clf_hyper;
  double dropout_p = 0.5;
  std::vector<uint64_t> clf_seeds;  // one trained classifier per seed
};

// Reads and validates a JSON run config. Unknown keys are rejected so a
// typo cannot silently fall back to a default.
RunConfig load_run_config(const std::string& path);

// Artifact paths under cfg.out_dir, exposed for tests and tooling.
std::string dataset_csv_path(const RunConfig& cfg, const std::string& name);
std::string cache_path(const RunConfig& cfg, const std::string& name);
std::string vae_checkpoint_path(const RunConfig& cfg, const std::string& which);
std::string classifier_checkpoint_path(const RunConfig& cfg, clf::Variant variant,
                                       uint64_t seed);
std::string metrics_csv_path(const RunConfig& cfg, clf::Variant variant,
                             uint64_t seed);
std::string roc_csv_path(const RunConfig& cfg, clf::Variant variant, uint64_t seed);
std::string report_csv_path(const RunConfig& cfg);

// Stage entry points. `config_path` is the JSON file the config was loaded
// from: gen_data records a verbatim copy inside the run directory and every
// later stage refuses to run if the bytes no longer match. A stage whose
// inputs are missing fails with ErrorKind::Prereq naming the command to run
// first. `progress`, when non-null, receives human-readable status lines.
void gen_data(const RunConfig& cfg, const std::string& config_path,
              std::ostream* progress = nullptr);
void render_cwt(const RunConfig& cfg, const std::string& config_path,
                std::ostream* progress = nullptr);
void train_vae_stage(const RunConfig& cfg, const std::string& config_path,
                     const std::string& which, std::ostream* progress = nullptr);
void train_classifier_stage(const RunConfig& cfg, const std::string& config_path,
                            clf::Variant variant, std::ostream* progress = nullptr);
void evaluate_stage(const RunConfig& cfg, const std::string& config_path,
                    bool dump_reconstructions = false,
                    std::ostream* progress = nullptr);
void report_stage(const RunConfig& cfg, const std::string& config_path,
                  std::ostream* progress = nullptr);

}  // namespace tfd::pipeline
