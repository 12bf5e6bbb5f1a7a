#pragma once

// Helpers shared by the stage implementations.

#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slowwave/core/array.hpp"
#include "slowwave/features/features.hpp"
#include "slowwave/io/manifest.hpp"
#include "slowwave/io/npy.hpp"
#include "slowwave/io/render.hpp"
#include "slowwave/pipeline/config.hpp"
#include "slowwave/pipeline/stages.hpp"
#include "slowwave/signal/signal.hpp"

namespace slowwave::pipeline::detail {

using nlohmann::json;

/// Collects a stage's outputs and records them in the manifest on commit. Writes may come
/// from several threads; each path must be written once. Previous outputs of the stage that
/// were not rewritten are deleted on commit, so a stage that throws early leaves them intact.
class StageWriter {
 public:
  StageWriter(const PipelineConfig& cfg, std::string stage);

  const io::Manifest& manifest() const { return manifest_; }
  const fs::path& root() const { return manifest_.root(); }

  void npy(const std::string& rel, const Image& img);
  void npy(const std::string& rel, const Mask& mask);
  void npy(const std::string& rel, const Stack& stack, io::Dtype dtype = io::Dtype::F8);
  void npy(const std::string& rel, const Series& series);
  void npy(const std::string& rel, const std::vector<std::size_t>& shape, std::span<const double> data);
  void json_file(const std::string& rel, const json& j);
  void text(const std::string& rel, const std::string& content);
  void png(const std::string& rel, const io::Canvas& canvas);
  /// For files written by other code directly under root.
  void adopt(const std::string& rel);

  /// Hashes every output in sorted path order and saves the manifest.
  void commit();

 private:
  fs::path prepare(const std::string& rel);

  std::string stage_;
  io::Manifest manifest_;
  std::mutex mutex_;
  std::vector<std::string> written_;
  std::vector<std::string> previous_;
};

json read_json(const fs::path& path);

/// Upstream event record from detect/events.json.
struct EventRecord {
  std::string id;
  std::string recording;
  std::string condition;
  double fs = 0.0;
  std::ptrdiff_t onset = 0;
  std::ptrdiff_t offset = 0;
  double duration_s = 0.0;
  double peak_amplitude = 0.0;
  bool kept = false;

  std::string dir(const char* stage) const { return std::string(stage) + "/" + recording + "/" + id; }
};

std::vector<EventRecord> read_events(const io::Manifest& m);
/// Kept events whose `probe` output exists in the manifest (all kept events when probe is empty).
std::vector<EventRecord> available_events(const io::Manifest& m, const std::string& stage, const std::string& probe);

signal::Event load_event(const io::Manifest& m, const EventRecord& rec);
std::pair<Mask, Mask> load_masks(const io::Manifest& m, const std::string& recording);

struct FeatureRecord {
  EventRecord event;
  features::FeatureVector features;
};

/// Reads features/features.json plus the per-event arrays, in file order.
std::vector<FeatureRecord> load_features(const io::Manifest& m);

/// Sorted distinct labels and the index of each input label in that list.
std::vector<std::string> distinct(const std::vector<std::string>& labels, std::vector<int>* index = nullptr);

/// nullopt as JSON null.
json opt(const std::optional<double>& v);

std::string number(double v);

}  // namespace slowwave::pipeline::detail
