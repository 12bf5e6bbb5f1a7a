#pragma once

#include <string>
#include <vector>

#include "slowwave/embed/dataset.hpp"
#include "slowwave/embed/vae.hpp"
#include "slowwave/pipeline/config.hpp"

namespace slowwave::pipeline {

/// Outcome of one stage. `failures` counts recordings or events that could not be processed;
/// the rest of the stage still ran. Errors that stop a stage outright are thrown.
struct StageReport {
  std::string stage;
  int items = 0;
  int failures = 0;
  std::vector<std::string> messages;

  bool partial() const { return failures > 0; }
};

/// Every stage reads upstream files through `<output>/manifest.json` and records its own
/// outputs there with SHA-256 hashes. Rerunning a stage replaces its previous outputs.
StageReport run_synth(const PipelineConfig& cfg);
StageReport run_detect(const PipelineConfig& cfg);
StageReport run_flow(const PipelineConfig& cfg);
StageReport run_decompose(const PipelineConfig& cfg);
StageReport run_features(const PipelineConfig& cfg);
StageReport run_embed(const PipelineConfig& cfg, int variant);
StageReport run_prototypes(const PipelineConfig& cfg);
StageReport run_report(const PipelineConfig& cfg);

/// detect through report, all three embedding variants.
std::vector<StageReport> run_all(const PipelineConfig& cfg);

/// A trained embedding model as stored by run_embed.
struct StoredModel {
  int variant = 0;
  embed::VaeParams params;
  embed::Standardizer scaler;
};

void save_model(const fs::path& dir, const StoredModel& model, std::vector<std::string>* written = nullptr);
StoredModel load_model(const fs::path& dir);

}  // namespace slowwave::pipeline
