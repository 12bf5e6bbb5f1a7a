#include "common.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "slowwave/io/npy.hpp"

namespace slowwave::pipeline::detail {

StageWriter::StageWriter(const PipelineConfig& cfg, std::string stage)
    : stage_(std::move(stage)), manifest_(cfg.output_dir), previous_(manifest_.files(stage_)) {}

fs::path StageWriter::prepare(const std::string& rel) {
  {
    std::lock_guard lock(mutex_);
    written_.push_back(rel);
  }
  return root() / rel;
}

void StageWriter::npy(const std::string& rel, const Image& img) { io::save(prepare(rel), img); }
void StageWriter::npy(const std::string& rel, const Mask& mask) { io::save(prepare(rel), mask); }
void StageWriter::npy(const std::string& rel, const Series& series) { io::save(prepare(rel), series); }

void StageWriter::npy(const std::string& rel, const Stack& stack, io::Dtype dtype) {
  io::write_npy(prepare(rel),
                {static_cast<std::size_t>(stack.frames()), static_cast<std::size_t>(stack.rows()),
                 static_cast<std::size_t>(stack.cols())},
                stack.data(), dtype);
}

void StageWriter::npy(const std::string& rel, const std::vector<std::size_t>& shape, std::span<const double> data) {
  io::write_npy(prepare(rel), shape, data);
}

void StageWriter::text(const std::string& rel, const std::string& content) {
  const fs::path p = prepare(rel);
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << content;
}

void StageWriter::json_file(const std::string& rel, const json& j) { text(rel, j.dump(2) + "\n"); }

void StageWriter::png(const std::string& rel, const io::Canvas& canvas) { io::write_png(prepare(rel), canvas); }

void StageWriter::adopt(const std::string& rel) { prepare(rel); }

void StageWriter::commit() {
  std::sort(written_.begin(), written_.end());
  for (const auto& rel : previous_) {
    if (std::binary_search(written_.begin(), written_.end(), rel)) continue;
    std::error_code ec;
    fs::remove(root() / rel, ec);
    manifest_.erase(rel);
    // fs::remove only deletes empty directories.
    for (fs::path dir = fs::path(rel).parent_path(); !dir.empty() && fs::remove(root() / dir, ec);) dir = dir.parent_path();
  }
  for (const auto& rel : written_) manifest_.record(stage_, rel);
  manifest_.save();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

std::vector<EventRecord> read_events(const io::Manifest& m) {
  const json doc = read_json(m.require("detect/events.json"));
  std::vector<EventRecord> out;
  for (const auto& rec : doc.at("recordings")) {
    if (rec.at("status") != "ok") continue;
    for (const auto& e : rec.at("events")) {
      EventRecord r;
      r.id = e.at("id");
      r.recording = rec.at("id");
      r.condition = rec.at("condition");
      r.fs = rec.at("fs");
      r.onset = e.at("onset");
      r.offset = e.at("offset");
      r.duration_s = e.at("duration_s");
      r.peak_amplitude = e.at("peak_amplitude");
      r.kept = e.at("kept");
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<EventRecord> available_events(const io::Manifest& m, const std::string& stage, const std::string& probe) {
  std::vector<EventRecord> out;
  for (auto& e : read_events(m)) {
    if (!e.kept) continue;
    if (!probe.empty() && !m.contains(e.dir(stage.c_str()) + "/" + probe)) continue;
    out.push_back(std::move(e));
  }
  return out;
}

signal::Event load_event(const io::Manifest& m, const EventRecord& rec) {
  signal::Event ev;
  const std::string dir = rec.dir("detect");
  ev.onset_frame = rec.onset;
  ev.offset_frame = rec.offset;
  ev.dffw = io::load_stack(m.require(dir + "/dffw.npy"));
  ev.mean_trace = io::load_series(m.require(dir + "/mean_trace.npy"));
  ev.duration_s = rec.duration_s;
  ev.peak_amplitude = rec.peak_amplitude;
  return ev;
}

std::pair<Mask, Mask> load_masks(const io::Manifest& m, const std::string& recording) {
  return {io::load_mask(m.require("detect/" + recording + "/mask_left.npy")),
          io::load_mask(m.require("detect/" + recording + "/mask_right.npy"))};
}

namespace {

std::optional<double> read_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::vector<FeatureRecord> load_features(const io::Manifest& m) {
  const json doc = read_json(m.require("features/features.json"));
  std::vector<FeatureRecord> out;
  for (const auto& e : doc.at("events")) {
    FeatureRecord r;
    r.event.id = e.at("id");
    r.event.recording = e.at("recording");
    r.event.condition = e.at("condition");
    r.event.onset = e.at("onset");
    r.event.offset = e.at("offset");
    r.event.duration_s = e.at("duration_s");
    r.event.peak_amplitude = e.at("peak_amplitude");
    r.event.kept = true;
    auto& f = r.features;
    f.condition = r.event.condition;
    f.duration_s = r.event.duration_s;
    f.peak_amplitude = r.event.peak_amplitude;
    f.vertical_fraction = read_opt(e, "vertical_fraction");
    f.bottom_up_share = read_opt(e, "bottom_up_share");
    f.medial_to_lateral_left = read_opt(e, "medial_to_lateral_left");
    f.medial_to_lateral_right = read_opt(e, "medial_to_lateral_right");
    f.up_total = e.at("up_total");
    f.down_total = e.at("down_total");
    f.left_total = e.at("left_total");
    f.right_total = e.at("right_total");
    const std::string dir = r.event.dir("features");
    f.source_mean = io::load_image(m.require(dir + "/source_mean.npy"));
    f.sink_mean = io::load_image(m.require(dir + "/sink_mean.npy"));
    f.dff_mean_map = io::load_image(m.require(dir + "/dff_mean_map.npy"));
    f.trace = io::load_series(m.require(dir + "/trace.npy"));
    f.flow_up_trace = io::load_series(m.require(dir + "/flow_up_trace.npy"));
    f.flow_down_trace = io::load_series(m.require(dir + "/flow_down_trace.npy"));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> distinct(const std::vector<std::string>& labels, std::vector<int>* index) {
  std::vector<std::string> d = labels;
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  if (index) {
    index->clear();
    for (const auto& l : labels)
      index->push_back(static_cast<int>(std::lower_bound(d.begin(), d.end(), l) - d.begin()));
  }
  return d;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string number(double v) { return fmt::format("{:.17g}", v); }

}  // namespace slowwave::pipeline::detail
