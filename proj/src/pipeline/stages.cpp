#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "common.hpp"
#include "slowwave/core/parallel.hpp"
#include "slowwave/helmholtz/helmholtz.hpp"
#include "slowwave/io/npy.hpp"
#include "slowwave/synth/synth.hpp"

namespace slowwave::pipeline {

using namespace detail;

namespace {

json vec(const synth::Vec2& v) { return json::array({v[0], v[1]}); }

signal::Recording load_recording(const InputSpec& in) {
  signal::Recording rec;
  double fs = in.fs;
  if (in.frames.extension() == ".json") {
    auto raw = io::load_raw_stack(in.frames);
    rec.frames = std::move(raw.frames);
    if (fs <= 0.0) fs = raw.fs;
  } else {
    rec.frames = io::load_stack(in.frames);
  }
  if (!(fs > 0.0)) throw Error(ErrorCode::InvalidArgument, "no sampling rate for input '" + in.id + "'");
  rec.fs = fs;
  rec.mask_left = io::load_mask(in.mask_left);
  rec.mask_right = io::load_mask(in.mask_right);
  rec.condition = in.condition;
  if (in.aux) rec.aux = io::load_series(*in.aux);
  rec.validate();
  return rec;
}

std::string what(const std::exception& e) { return e.what(); }

}  // namespace

StageReport run_synth(const PipelineConfig& cfg) {
  StageWriter w(cfg, "synth");
  StageReport report;
  report.stage = "synth";
  json inputs = json::array();
  for (const auto& r : cfg.synth) {
    auto spec = r.spec;
    spec.seed = r.spec.seed ^ (cfg.seed * 0x9e3779b97f4a7c15ULL);
    auto [rec, truth] = synth::make_recording(spec);
    const std::string dir = "synth/" + r.id;
    w.npy(dir + "/frames.npy", rec.frames, io::Dtype::F4);
    w.npy(dir + "/mask_left.npy", rec.mask_left);
    w.npy(dir + "/mask_right.npy", rec.mask_right);
    json entry = {{"id", r.id},
                  {"frames", "{output}/" + dir + "/frames.npy"},
                  {"mask_left", "{output}/" + dir + "/mask_left.npy"},
                  {"mask_right", "{output}/" + dir + "/mask_right.npy"},
                  {"fs", spec.fs},
                  {"condition", spec.condition}};
    if (rec.aux) {
      w.npy(dir + "/aux.npy", *rec.aux);
      entry["aux"] = "{output}/" + dir + "/aux.npy";
    }
    inputs.push_back(entry);

    json events = json::array();
    for (std::size_t i = 0; i < truth.windows.size(); ++i) {
      events.push_back({{"onset", truth.windows[i].onset},
                        {"offset", truth.windows[i].offset},
                        {"peak_amplitude", truth.peak_amplitudes[i]},
                        {"direction", vec(truth.directions[i])},
                        {"source_center", vec(truth.sources[i])}});
    }
    json sched = json::array();
    for (const auto& e : spec.events) {
      sched.push_back({{"onset_s", e.onset_s}, {"duration_s", e.duration_s}, {"amplitude", e.amplitude},
                       {"direction", vec(e.direction)}, {"source_center", vec(e.source_center)}});
    }
    w.json_file(dir + "/truth.json",
                {{"id", r.id},
                 {"condition", spec.condition},
                 {"seed", spec.seed},
                 {"shape", {rec.frames.frames(), rec.frames.rows(), rec.frames.cols()}},
                 {"fs", spec.fs},
                 {"baseline", spec.baseline},
                 {"noise_sigma", spec.noise_sigma},
                 {"heartbeat_amplitude", spec.heartbeat_amplitude},
                 {"heartbeat_hz", spec.heartbeat_hz},
                 {"schedule", sched},
                 {"events", events}});
    ++report.items;
  }
  // Ready-to-run config for the generated dataset: the output root is this file's parent.
  w.json_file("synth/pipeline.json", {{"seed", cfg.seed}, {"output_dir", ".."}, {"inputs", inputs}});
  w.commit();
  return report;
}

StageReport run_detect(const PipelineConfig& cfg) {
  if (cfg.inputs.empty()) throw Error(ErrorCode::InvalidArgument, "the input manifest is empty");
  StageWriter w(cfg, "detect");
  StageReport report;
  report.stage = "detect";
  const std::size_t n = cfg.inputs.size();
  std::vector<json> records(n);
  std::vector<std::string> errors(n);

  parallel_for(
      n,
      [&](std::size_t i) {
        const InputSpec& in = cfg.inputs[i];
        json rec = {{"id", in.id}, {"condition", in.condition}};
        try {
          const signal::Recording r = load_recording(in);
          const signal::Detection d = signal::detect(r, cfg.detection);
          const std::string dir = "detect/" + in.id;
          w.npy(dir + "/mask_left.npy", r.mask_left);
          w.npy(dir + "/mask_right.npy", r.mask_right);
          w.npy(dir + "/trace_raw.npy", d.raw_trace);
          w.npy(dir + "/trace_filtered.npy", d.filtered_trace);
          w.npy(dir + "/trace_detection.npy", d.detection_trace);
          w.png(dir + "/traces.png", io::line_plot({d.raw_trace, d.detection_trace}, {io::palette(7), io::palette(0)}, 640, 160));

          json events = json::array();
          for (std::size_t k = 0; k < d.events.size(); ++k) {
            const auto& ev = d.events[k];
            const std::string id = fmt::format("{}_e{:03d}", in.id, k);
            json e = {{"id", id},
                      {"onset", ev.onset_frame},
                      {"offset", ev.offset_frame},
                      {"duration_s", ev.duration_s},
                      {"peak_amplitude", ev.peak_amplitude},
                      {"kept", static_cast<bool>(d.kept[k])}};
            if (r.aux) {
              const auto lo = static_cast<std::size_t>(ev.onset_frame);
              const auto hi = static_cast<std::size_t>(ev.offset_frame);
              e["aux_correlation"] = opt(signal::pearson(ev.mean_trace, std::span(*r.aux).subspan(lo, hi - lo)));
            }
            if (d.kept[k]) {
              w.npy(dir + "/" + id + "/dffw.npy", ev.dffw);
              w.npy(dir + "/" + id + "/mean_trace.npy", ev.mean_trace);
            }
            events.push_back(e);
          }
          rec["status"] = "ok";
          rec["fs"] = r.fs;
          rec["frames"] = r.frames.frames();
          rec["events"] = events;
        } catch (const std::exception& e) {
          rec["status"] = "failed";
          rec["error"] = what(e);
          errors[i] = in.id + ": " + what(e);
        }
        records[i] = std::move(rec);
      },
      cfg.threads);

  json all = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    all.push_back(records[i]);
    ++report.items;
    if (!errors[i].empty()) {
      ++report.failures;
      report.messages.push_back(errors[i]);
    }
  }
  w.json_file("detect/events.json", {{"recordings", all}});
  w.commit();
  return report;
}

StageReport run_flow(const PipelineConfig& cfg) {
  StageWriter w(cfg, "flow");
  StageReport report;
  report.stage = "flow";
  const auto events = available_events(w.manifest(), "detect", "dffw.npy");
  std::vector<std::string> errors(events.size());
  parallel_for(
      events.size(),
      [&](std::size_t i) {
        const auto& e = events[i];
        try {
          const signal::Event ev = load_event(w.manifest(), e);
          const auto [left, right] = load_masks(w.manifest(), e.recording);
          const auto [fl, fr] = flow::flow_sequence(ev.dffw, e.fs, left, right, cfg.hs);
          const auto pairs = static_cast<std::ptrdiff_t>(fl.fields.size());
          Stack u(pairs, ev.dffw.rows(), ev.dffw.cols());
          Stack v(pairs, ev.dffw.rows(), ev.dffw.cols());
          Mask valid = left || right;
          for (std::ptrdiff_t t = 0; t < pairs; ++t) {
            const auto f = helmholtz::add(fl.fields[static_cast<std::size_t>(t)], fr.fields[static_cast<std::size_t>(t)]);
            u.frame(t) = f.u;
            v.frame(t) = f.v;
            valid = f.valid;
          }
          const std::string dir = e.dir("flow");
          w.npy(dir + "/u.npy", u);
          w.npy(dir + "/v.npy", v);
          w.npy(dir + "/valid.npy", valid);
        } catch (const Error& ex) {
          if (ex.code() == ErrorCode::MissingUpstream) throw;
          errors[i] = e.id + ": " + what(ex);
        }
      },
      cfg.threads);
  for (const auto& err : errors) {
    ++report.items;
    if (!err.empty()) {
      ++report.failures;
      report.messages.push_back(err);
    }
  }
  w.commit();
  return report;
}

namespace {

flow::FlowSequence load_flow(const io::Manifest& m, const EventRecord& e) {
  const std::string dir = e.dir("flow");
  const Stack u = io::load_stack(m.require(dir + "/u.npy"));
  const Stack v = io::load_stack(m.require(dir + "/v.npy"));
  const Mask valid = io::load_mask(m.require(dir + "/valid.npy"));
  flow::FlowSequence seq;
  seq.fs = e.fs;
  for (std::ptrdiff_t t = 0; t < u.frames(); ++t) seq.fields.push_back({u.frame(t), v.frame(t), valid});
  return seq;
}

const std::array<const char*, 10> kDecompositionFiles{"phi",   "psi",   "sources", "sinks",      "grad_u",
                                                      "grad_v", "rot_u", "rot_v",   "harmonic_u", "harmonic_v"};

}  // namespace

StageReport run_decompose(const PipelineConfig& cfg) {
  StageWriter w(cfg, "decompose");
  StageReport report;
  report.stage = "decompose";
  const auto events = available_events(w.manifest(), "flow", "u.npy");
  std::vector<std::string> errors(events.size());
  parallel_for(
      events.size(),
      [&](std::size_t i) {
        const auto& e = events[i];
        try {
          const auto seq = load_flow(w.manifest(), e);
          const auto T = static_cast<std::ptrdiff_t>(seq.fields.size());
          const auto rows = seq.fields.empty() ? 0 : seq.fields[0].rows();
          const auto cols = seq.fields.empty() ? 0 : seq.fields[0].cols();
          std::array<Stack, kDecompositionFiles.size()> out;
          for (auto& s : out) s = Stack(T, rows, cols);
          Image mean_density = Image::Zero(rows, cols);
          flow::FlowField mean_flow = flow::FlowField::zeros(seq.fields.empty() ? Mask() : seq.fields[0].valid);
          for (std::ptrdiff_t t = 0; t < T; ++t) {
            const auto& f = seq.fields[static_cast<std::size_t>(t)];
            const auto h = helmholtz::decompose(f, cfg.solver);
            const std::array<const Image*, kDecompositionFiles.size()> src{
                &h.phi, &h.psi, &h.sources, &h.sinks, &h.grad_phi.u, &h.grad_phi.v,
                &h.rot_psi.u, &h.rot_psi.v, &h.harmonic.u, &h.harmonic.v};
            for (std::size_t k = 0; k < src.size(); ++k) out[k].frame(t) = *src[k];
            mean_density += h.source_density;
            const auto fc = features::flow_component(f, h);
            mean_flow.u += fc.u;
            mean_flow.v += fc.v;
          }
          const std::string dir = e.dir("decompose");
          for (std::size_t k = 0; k < out.size(); ++k) w.npy(dir + "/" + kDecompositionFiles[k] + ".npy", out[k]);
          if (T > 0) {
            mean_density /= static_cast<double>(T);
            auto canvas = io::heatmap(mean_density, &mean_flow.valid, true, 6);
            io::quiver(canvas, mean_flow, 6, 3);
            w.png(dir + "/quicklook.png", canvas);
          }
        } catch (const Error& ex) {
          if (ex.code() == ErrorCode::MissingUpstream) throw;
          errors[i] = e.id + ": " + what(ex);
        }
      },
      cfg.threads);
  for (const auto& err : errors) {
    ++report.items;
    if (!err.empty()) {
      ++report.failures;
      report.messages.push_back(err);
    }
  }
  w.commit();
  return report;
}

namespace {

std::vector<helmholtz::HelmholtzResult> load_decompositions(const io::Manifest& m, const EventRecord& e,
                                                            const Mask& valid) {
  const std::string dir = e.dir("decompose");
  const Stack sources = io::load_stack(m.require(dir + "/sources.npy"));
  const Stack sinks = io::load_stack(m.require(dir + "/sinks.npy"));
  const Stack gu = io::load_stack(m.require(dir + "/grad_u.npy"));
  const Stack gv = io::load_stack(m.require(dir + "/grad_v.npy"));
  std::vector<helmholtz::HelmholtzResult> out(static_cast<std::size_t>(sources.frames()));
  for (std::ptrdiff_t t = 0; t < sources.frames(); ++t) {
    auto& h = out[static_cast<std::size_t>(t)];
    h.sources = sources.frame(t);
    h.sinks = sinks.frame(t);
    h.source_density = h.sources + h.sinks;
    h.grad_phi = {gu.frame(t), gv.frame(t), valid};
  }
  return out;
}

}  // namespace

StageReport run_features(const PipelineConfig& cfg) {
  StageWriter w(cfg, "features");
  StageReport report;
  report.stage = "features";
  const auto events = available_events(w.manifest(), "decompose", "sources.npy");
  std::vector<std::optional<features::FeatureVector>> results(events.size());
  std::vector<std::string> errors(events.size());
  parallel_for(
      events.size(),
      [&](std::size_t i) {
        const auto& e = events[i];
        try {
          const signal::Event ev = load_event(w.manifest(), e);
          const auto seq = load_flow(w.manifest(), e);
          const Mask valid = io::load_mask(w.manifest().require(e.dir("flow") + "/valid.npy"));
          const auto dec = load_decompositions(w.manifest(), e, valid);
          auto fv = features::build_feature_vector(ev, seq, dec, e.condition, cfg.features);
          const std::string dir = e.dir("features");
          w.npy(dir + "/source_mean.npy", fv.source_mean);
          w.npy(dir + "/sink_mean.npy", fv.sink_mean);
          w.npy(dir + "/dff_mean_map.npy", fv.dff_mean_map);
          w.npy(dir + "/trace.npy", fv.trace);
          w.npy(dir + "/flow_up_trace.npy", fv.flow_up_trace);
          w.npy(dir + "/flow_down_trace.npy", fv.flow_down_trace);
          results[i] = std::move(fv);
        } catch (const Error& ex) {
          if (ex.code() == ErrorCode::MissingUpstream) throw;
          errors[i] = e.id + ": " + what(ex);
        }
      },
      cfg.threads);

  json rows = json::array();
  std::string csv =
      "event_id,recording,condition,onset,offset,duration_s,peak_amplitude,vertical_fraction,bottom_up_share,"
      "medial_to_lateral_left,medial_to_lateral_right,up_total,down_total,left_total,right_total\n";
  auto cell = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };
  for (std::size_t i = 0; i < events.size(); ++i) {
    ++report.items;
    if (!results[i]) {
      ++report.failures;
      report.messages.push_back(errors[i]);
      continue;
    }
    const auto& e = events[i];
    const auto& f = *results[i];
    rows.push_back({{"id", e.id},
                    {"recording", e.recording},
                    {"condition", e.condition},
                    {"onset", e.onset},
                    {"offset", e.offset},
                    {"duration_s", f.duration_s},
                    {"peak_amplitude", f.peak_amplitude},
                    {"vertical_fraction", opt(f.vertical_fraction)},
                    {"bottom_up_share", opt(f.bottom_up_share)},
                    {"medial_to_lateral_left", opt(f.medial_to_lateral_left)},
                    {"medial_to_lateral_right", opt(f.medial_to_lateral_right)},
                    {"up_total", f.up_total},
                    {"down_total", f.down_total},
                    {"left_total", f.left_total},
                    {"right_total", f.right_total}});
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", e.id, e.recording, e.condition, e.onset,
                       e.offset, number(f.duration_s), number(f.peak_amplitude), cell(f.vertical_fraction),
                       cell(f.bottom_up_share), cell(f.medial_to_lateral_left), cell(f.medial_to_lateral_right),
                       number(f.up_total), number(f.down_total), number(f.left_total), number(f.right_total));
  }
  w.json_file("features/features.json",
              {{"trace_len", cfg.features.trace_len}, {"map_size", cfg.features.map_size}, {"events", rows}});
  w.text("features/features.csv", csv);
  w.commit();
  return report;
}

std::vector<StageReport> run_all(const PipelineConfig& cfg) {
  std::vector<StageReport> out;
  out.push_back(run_detect(cfg));
  out.push_back(run_flow(cfg));
  out.push_back(run_decompose(cfg));
  out.push_back(run_features(cfg));
  for (int v = 1; v <= 3; ++v) out.push_back(run_embed(cfg, v));
  out.push_back(run_prototypes(cfg));
  out.push_back(run_report(cfg));
  return out;
}

}  // namespace slowwave::pipeline
