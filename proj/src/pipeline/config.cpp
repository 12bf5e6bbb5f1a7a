#include "slowwave/pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "slowwave/core/error.hpp"

namespace slowwave::pipeline {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidArgument, "config: " + what); }

const json& object(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  return j;
}

void allow(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, _] : object(j, where).items())
    if (!ok.count(k)) bad("unknown key '" + k + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

synth::Vec2 vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) bad(where + " must be a [row, col] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

void parse_detection(const json& j, signal::DetectionConfig& d) {
  allow(j, "detection", {"baseline", "bandstop", "detrend", "segment", "event", "exclusion"});
  if (j.contains("baseline")) {
    const auto& b = j["baseline"];
    allow(b, "detection.baseline", {"kind", "percentile"});
    std::string kind = "percentile";
    get(b, "kind", kind, "detection.baseline");
    if (kind == "percentile") d.baseline.kind = signal::BaselineSpec::Kind::Percentile;
    else if (kind == "mean") d.baseline.kind = signal::BaselineSpec::Kind::Mean;
    else bad("detection.baseline.kind must be percentile or mean");
    get(b, "percentile", d.baseline.percentile, "detection.baseline");
  }
  if (j.contains("bandstop")) {
    const auto& b = j["bandstop"];
    allow(b, "detection.bandstop", {"low_hz", "high_hz", "transition_hz", "per_pixel"});
    get(b, "low_hz", d.bandstop.low_hz, "detection.bandstop");
    get(b, "high_hz", d.bandstop.high_hz, "detection.bandstop");
    get(b, "transition_hz", d.bandstop.transition_hz, "detection.bandstop");
    get(b, "per_pixel", d.bandstop.per_pixel, "detection.bandstop");
  }
  if (j.contains("detrend")) {
    const auto& b = j["detrend"];
    allow(b, "detection.detrend", {"kind", "window_s"});
    std::string kind = "linear";
    get(b, "kind", kind, "detection.detrend");
    if (kind == "linear") d.detrend.kind = signal::DetrendSpec::Kind::Linear;
    else if (kind == "moving_average") d.detrend.kind = signal::DetrendSpec::Kind::MovingAverage;
    else bad("detection.detrend.kind must be linear or moving_average");
    get(b, "window_s", d.detrend.window_s, "detection.detrend");
  }
  if (j.contains("segment")) {
    const auto& b = j["segment"];
    allow(b, "detection.segment", {"k_on", "k_off", "min_duration_s", "merge_gap_s"});
    get(b, "k_on", d.segment.k_on, "detection.segment");
    get(b, "k_off", d.segment.k_off, "detection.segment");
    get(b, "min_duration_s", d.segment.min_duration_s, "detection.segment");
    get(b, "merge_gap_s", d.segment.merge_gap_s, "detection.segment");
  }
  if (j.contains("event")) {
    const auto& b = j["event"];
    allow(b, "detection.event", {"baseline_window_s", "min_baseline_frames"});
    get(b, "baseline_window_s", d.event.baseline_window_s, "detection.event");
    get(b, "min_baseline_frames", d.event.min_baseline_frames, "detection.event");
  }
  if (j.contains("exclusion")) {
    const auto& b = j["exclusion"];
    allow(b, "detection.exclusion", {"min_peak_amplitude", "max_correlation"});
    get(b, "min_peak_amplitude", d.exclusion.min_peak_amplitude, "detection.exclusion");
    get(b, "max_correlation", d.exclusion.max_correlation, "detection.exclusion");
  }
}

void parse_variant(const json& j, VariantConfig& v, const std::string& where) {
  allow(j, where, {"hidden_sizes", "latent_dim", "weights", "learning_rate", "beta1", "beta2", "epsilon", "batch_size",
                   "epochs"});
  get(j, "hidden_sizes", v.hidden_sizes, where);
  get(j, "latent_dim", v.latent_dim, where);
  get(j, "weights", v.weights, where);
  get(j, "learning_rate", v.optimizer.learning_rate, where);
  get(j, "beta1", v.optimizer.beta1, where);
  get(j, "beta2", v.optimizer.beta2, where);
  get(j, "epsilon", v.optimizer.epsilon, where);
  get(j, "batch_size", v.optimizer.batch_size, where);
  get(j, "epochs", v.optimizer.epochs, where);
}

void parse_embed(const json& j, EmbedConfig& e) {
  allow(j, "embed", {"defaults", "variant1", "variant2", "variant3", "manifold", "prototype_variant"});
  // "defaults" applies to every variant before the per-variant sections.
  if (j.contains("defaults"))
    for (auto& v : e.variants) parse_variant(j["defaults"], v, "embed.defaults");
  for (int i = 0; i < 3; ++i) {
    const std::string key = "variant" + std::to_string(i + 1);
    if (j.contains(key)) parse_variant(j[key], e.variants[static_cast<std::size_t>(i)], "embed." + key);
  }
  if (j.contains("manifold")) {
    const auto& m = j["manifold"];
    allow(m, "embed.manifold", {"lo", "hi", "n"});
    get(m, "lo", e.manifold.lo, "embed.manifold");
    get(m, "hi", e.manifold.hi, "embed.manifold");
    get(m, "n", e.manifold.n, "embed.manifold");
  }
  get(j, "prototype_variant", e.prototype_variant, "embed");
}

SynthRecording parse_synth_recording(const json& j) {
  allow(j, "synth recording", {"id", "condition", "seed", "rows", "cols", "fs", "duration_s", "baseline", "noise_sigma",
                               "heartbeat_amplitude", "heartbeat_hz", "with_aux", "aux_hz", "events"});
  SynthRecording r;
  auto& s = r.spec;
  get(j, "id", r.id, "synth");
  get(j, "condition", s.condition, "synth");
  get(j, "seed", s.seed, "synth");
  get(j, "rows", s.rows, "synth");
  get(j, "cols", s.cols, "synth");
  get(j, "fs", s.fs, "synth");
  get(j, "duration_s", s.duration_s, "synth");
  get(j, "baseline", s.baseline, "synth");
  get(j, "noise_sigma", s.noise_sigma, "synth");
  get(j, "heartbeat_amplitude", s.heartbeat_amplitude, "synth");
  get(j, "heartbeat_hz", s.heartbeat_hz, "synth");
  get(j, "with_aux", s.with_aux, "synth");
  get(j, "aux_hz", s.aux_hz, "synth");
  if (j.contains("events")) {
    for (const auto& e : j["events"]) {
      allow(e, "synth event", {"onset_s", "duration_s", "amplitude", "direction", "source_center"});
      synth::EventSpec ev;
      get(e, "onset_s", ev.onset_s, "synth event");
      get(e, "duration_s", ev.duration_s, "synth event");
      get(e, "amplitude", ev.amplitude, "synth event");
      if (e.contains("direction")) ev.direction = vec2(e["direction"], "synth event direction");
      if (e.contains("source_center")) ev.source_center = vec2(e["source_center"], "synth event source_center");
      s.events.push_back(ev);
    }
  }
  if (r.id.empty()) bad("every synth recording needs an id");
  return r;
}

fs::path expand(const std::string& raw, const fs::path& output, const fs::path& base) {
  std::string s = raw;
  static constexpr std::string_view token = "{output}";
  for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos))
    s.replace(pos, token.size(), output.string());
  fs::path p(s);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

std::vector<SynthRecording> default_synth() {
  // Condition "down" carries waves travelling image-down, "up" the reverse, with larger peaks.
  std::vector<SynthRecording> out;
  const std::array<std::pair<const char*, synth::Vec2>, 2> conditions{{{"down", {1.0, 0.0}}, {"up", {-1.0, 0.0}}}};
  std::uint64_t seed = 1;
  for (const auto& [label, dir] : conditions) {
    for (int rep = 0; rep < 2; ++rep) {
      SynthRecording r;
      r.id = std::string(label) + std::to_string(rep);
      auto& s = r.spec;
      s.rows = 32;
      s.cols = 32;
      s.fs = 100.0;
      s.duration_s = 14.0;
      s.condition = label;
      s.seed = seed++;
      s.noise_sigma = 0.002;
      s.heartbeat_amplitude = 0.01;
      const double base = label == std::string("down") ? 0.08 : 0.14;
      for (int e = 0; e < 4; ++e) {
        synth::EventSpec ev;
        ev.onset_s = 1.5 + 3.0 * e + 0.2 * rep;
        ev.duration_s = 0.8 + 0.15 * e;
        ev.amplitude = base + 0.02 * e;
        ev.direction = dir;
        s.events.push_back(ev);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

fs::path resolve_output(const fs::path& output_dir, const fs::path& base_dir) {
  if (output_dir.is_absolute()) return output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') return fs::path(root) / output_dir;
  return base_dir / output_dir;
}

PipelineConfig parse_config(const json& doc, const fs::path& base_dir, const std::optional<fs::path>& output_override) {
  allow(doc, "config", {"seed", "output_dir", "threads", "inputs", "detection", "flow", "solver", "features", "embed",
                        "gmm", "synth"});
  PipelineConfig cfg;
  get(doc, "seed", cfg.seed, "config");
  get(doc, "threads", cfg.threads, "config");
  std::string out = "output";
  get(doc, "output_dir", out, "config");
  cfg.output_dir = output_override ? fs::absolute(*output_override) : resolve_output(out, base_dir);

  if (doc.contains("inputs")) {
    if (!doc["inputs"].is_array()) bad("inputs must be an array");
    std::set<std::string> ids;
    for (const auto& in : doc["inputs"]) {
      allow(in, "input", {"id", "frames", "mask_left", "mask_right", "aux", "fs", "condition"});
      InputSpec s;
      std::string frames, left, right;
      get(in, "id", s.id, "input");
      get(in, "frames", frames, "input");
      get(in, "mask_left", left, "input");
      get(in, "mask_right", right, "input");
      get(in, "fs", s.fs, "input");
      get(in, "condition", s.condition, "input");
      if (s.id.empty() || frames.empty() || left.empty() || right.empty()) {
        bad("inputs need id, frames, mask_left and mask_right");
      }
      if (!ids.insert(s.id).second) bad("duplicate input id '" + s.id + "'");
      if (s.condition.empty()) s.condition = "default";
      s.frames = expand(frames, cfg.output_dir, base_dir);
      s.mask_left = expand(left, cfg.output_dir, base_dir);
      s.mask_right = expand(right, cfg.output_dir, base_dir);
      if (in.contains("aux")) s.aux = expand(in["aux"].get<std::string>(), cfg.output_dir, base_dir);
      cfg.inputs.push_back(std::move(s));
    }
  }
  if (doc.contains("detection")) parse_detection(doc["detection"], cfg.detection);
  if (doc.contains("flow")) {
    const auto& f = doc["flow"];
    allow(f, "flow", {"alpha", "max_iters", "tol"});
    get(f, "alpha", cfg.hs.alpha, "flow");
    get(f, "max_iters", cfg.hs.max_iters, "flow");
    get(f, "tol", cfg.hs.tol, "flow");
  }
  if (doc.contains("solver")) {
    const auto& s = doc["solver"];
    allow(s, "solver", {"cg_tol", "max_iters_per_pixel"});
    get(s, "cg_tol", cfg.solver.cg_tol, "solver");
    get(s, "max_iters_per_pixel", cfg.solver.max_iters_per_pixel, "solver");
  }
  if (doc.contains("features")) {
    const auto& f = doc["features"];
    allow(f, "features", {"trace_len", "map_size", "flip_vertical", "midline_col"});
    get(f, "trace_len", cfg.features.trace_len, "features");
    get(f, "map_size", cfg.features.map_size, "features");
    get(f, "flip_vertical", cfg.features.direction.flip_vertical, "features");
    get(f, "midline_col", cfg.features.direction.midline_col, "features");
  }
  if (doc.contains("embed")) parse_embed(doc["embed"], cfg.embed);
  if (doc.contains("gmm")) {
    const auto& g = doc["gmm"];
    allow(g, "gmm", {"k", "reg_eps", "tol", "max_iters"});
    get(g, "k", cfg.gmm.k, "gmm");
    get(g, "reg_eps", cfg.gmm.reg_eps, "gmm");
    get(g, "tol", cfg.gmm.tol, "gmm");
    get(g, "max_iters", cfg.gmm.max_iters, "gmm");
  }
  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    if (s.is_string() && s.get<std::string>() == "default") {
      cfg.synth = default_synth();
    } else {
      allow(s, "synth", {"recordings"});
      for (const auto& r : s.at("recordings")) cfg.synth.push_back(parse_synth_recording(r));
    }
  } else {
    cfg.synth = default_synth();
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const std::optional<fs::path>& output_override) {
  std::ifstream in(path);
  if (!in) bad("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    bad(path.string() + ": " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path(), output_override);
}

void PipelineConfig::validate() const {
  hs.validate();
  if (!(solver.cg_tol > 0.0) || !(solver.max_iters_per_pixel > 0.0)) bad("solver tolerances must be positive");
  if (features.trace_len < 2 || features.map_size < 1) bad("features.trace_len >= 2 and map_size >= 1 required");
  for (const auto& v : embed.variants) v.optimizer.validate();
  if (embed.prototype_variant < 1 || embed.prototype_variant > 3) bad("embed.prototype_variant must be 1, 2 or 3");
  if (embed.manifold.n < 1 || !(embed.manifold.hi > embed.manifold.lo)) bad("embed.manifold needs n >= 1 and hi > lo");
  gmm.validate();
  std::set<std::string> ids;
  for (const auto& s : synth)
    if (!ids.insert(s.id).second) bad("duplicate synth recording id '" + s.id + "'");
}

json describe(const PipelineConfig& cfg) {
  json inputs = json::array();
  for (const auto& in : cfg.inputs) inputs.push_back({{"id", in.id}, {"condition", in.condition}, {"fs", in.fs}});
  const auto& d = cfg.detection;
  json variants = json::array();
  for (const auto& v : cfg.embed.variants) {
    variants.push_back({{"hidden_sizes", v.hidden_sizes},
                        {"latent_dim", v.latent_dim},
                        {"weights", v.weights},
                        {"learning_rate", v.optimizer.learning_rate},
                        {"beta1", v.optimizer.beta1},
                        {"beta2", v.optimizer.beta2},
                        {"epsilon", v.optimizer.epsilon},
                        {"batch_size", v.optimizer.batch_size},
                        {"epochs", v.optimizer.epochs}});
  }
  return {
      {"seed", cfg.seed},
      {"inputs", inputs},
      {"detection",
       {{"baseline", {{"kind", d.baseline.kind == signal::BaselineSpec::Kind::Mean ? "mean" : "percentile"},
                      {"percentile", d.baseline.percentile}}},
        {"bandstop", {{"low_hz", d.bandstop.low_hz}, {"high_hz", d.bandstop.high_hz},
                      {"transition_hz", d.bandstop.transition_hz}, {"per_pixel", d.bandstop.per_pixel}}},
        {"detrend", {{"kind", d.detrend.kind == signal::DetrendSpec::Kind::Linear ? "linear" : "moving_average"},
                     {"window_s", d.detrend.window_s}}},
        {"segment", {{"k_on", d.segment.k_on}, {"k_off", d.segment.k_off},
                     {"min_duration_s", d.segment.min_duration_s}, {"merge_gap_s", d.segment.merge_gap_s}}},
        {"event", {{"baseline_window_s", d.event.baseline_window_s},
                   {"min_baseline_frames", d.event.min_baseline_frames}}},
        {"exclusion", {{"min_peak_amplitude", d.exclusion.min_peak_amplitude},
                       {"max_correlation", d.exclusion.max_correlation}}}}},
      {"flow", {{"alpha", cfg.hs.alpha}, {"max_iters", cfg.hs.max_iters}, {"tol", cfg.hs.tol}}},
      {"solver", {{"cg_tol", cfg.solver.cg_tol}, {"max_iters_per_pixel", cfg.solver.max_iters_per_pixel}}},
      {"features", {{"trace_len", cfg.features.trace_len}, {"map_size", cfg.features.map_size},
                    {"flip_vertical", cfg.features.direction.flip_vertical},
                    {"midline_col", cfg.features.direction.midline_col}}},
      {"embed", {{"variants", variants},
                 {"manifold", {{"lo", cfg.embed.manifold.lo}, {"hi", cfg.embed.manifold.hi}, {"n", cfg.embed.manifold.n}}},
                 {"prototype_variant", cfg.embed.prototype_variant}}},
      {"gmm", {{"k", cfg.gmm.k}, {"reg_eps", cfg.gmm.reg_eps}, {"tol", cfg.gmm.tol}, {"max_iters", cfg.gmm.max_iters}}},
  };
}

}  // namespace slowwave::pipeline
