#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "slowwave/embed/gmm.hpp"
#include "slowwave/embed/vae.hpp"
#include "slowwave/features/features.hpp"
#include "slowwave/flow/flow.hpp"
#include "slowwave/helmholtz/helmholtz.hpp"
#include "slowwave/signal/signal.hpp"
#include "slowwave/synth/synth.hpp"

namespace slowwave::pipeline {

namespace fs = std::filesystem;

/// Environment variable naming the root that relative output directories resolve against.
inline constexpr const char* kOutputRootEnv = "SLOWWAVE_OUTPUT_ROOT";

struct InputSpec {
  std::string id;
  fs::path frames;      // .npy stack or .json raw-binary sidecar
  fs::path mask_left;
  fs::path mask_right;
  std::optional<fs::path> aux;
  double fs = 0.0;      // 0: take it from the sidecar
  std::string condition;
};

struct VariantConfig {
  std::vector<Eigen::Index> hidden_sizes{256, 128, 64, 32, 16, 8};
  Eigen::Index latent_dim = 2;
  std::map<std::string, double> weights;  // per-stream overrides
  embed::OptimizerConfig optimizer;
};

struct EmbedConfig {
  std::array<VariantConfig, 3> variants;
  embed::GridSpec manifold;
  int prototype_variant = 1;  // whose embeddings the prototypes stage clusters
};

struct SynthRecording {
  std::string id;
  synth::RecordingSpec spec;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  fs::path output_dir;
  std::vector<InputSpec> inputs;
  signal::DetectionConfig detection;
  flow::HsConfig hs;
  helmholtz::SolverConfig solver;
  features::FeatureConfig features;
  EmbedConfig embed;
  embed::GmmConfig gmm;
  std::vector<SynthRecording> synth;
  unsigned threads = 0;  // 0: hardware concurrency

  /// Module-level checks. Missing input files are reported by the stage that needs them.
  void validate() const;
};

/// Default scenario for the synth stage: two conditions, two recordings each.
std::vector<SynthRecording> default_synth();

/// Parses a config document. Relative input paths resolve against `base_dir` after the
/// literal "{output}" is replaced by the output directory. Unknown keys are rejected.
/// `output_override` replaces the document's output_dir.
PipelineConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir,
                            const std::optional<fs::path>& output_override = std::nullopt);
PipelineConfig load_config(const fs::path& path, const std::optional<fs::path>& output_override = std::nullopt);

/// Output directory after applying the output-root environment variable to relative paths.
fs::path resolve_output(const fs::path& output_dir, const fs::path& base_dir);

/// Echo of the effective configuration (inputs by id, not path) for provenance files.
nlohmann::json describe(const PipelineConfig& cfg);

}  // namespace slowwave::pipeline
