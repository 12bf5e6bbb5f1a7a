#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "common.hpp"
#include "slowwave/embed/dataset.hpp"
#include "slowwave/embed/gmm.hpp"
#include "slowwave/io/npy.hpp"

namespace slowwave::pipeline {

using namespace detail;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<std::size_t> shape_of(const Eigen::MatrixXd& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

void save_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  const RowMatrix r = m;
  io::write_npy(path, shape_of(m), std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

Eigen::MatrixXd load_matrix(const fs::path& path) {
  const auto a = io::read_npy(path);
  if (a.shape.size() != 2) throw Error(ErrorCode::Format, path.string() + " is not a matrix");
  return Eigen::Map<const RowMatrix>(a.data.data(), static_cast<Eigen::Index>(a.shape[0]),
                                     static_cast<Eigen::Index>(a.shape[1]));
}

void save_vector(const fs::path& path, const Eigen::VectorXd& v) {
  io::write_npy(path, {static_cast<std::size_t>(v.size())}, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd load_vector(const fs::path& path) {
  const Series s = io::load_series(path);
  return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

embed::VaeSpec variant_spec(const PipelineConfig& cfg, int variant) {
  const auto& vc = cfg.embed.variants[static_cast<std::size_t>(variant - 1)];
  embed::VaeSpec spec;
  spec.inputs = embed::variant_streams(variant, cfg.features);
  for (auto& s : spec.inputs)
    if (auto it = vc.weights.find(s.name); it != vc.weights.end()) s.weight = it->second;
  spec.hidden_sizes = vc.hidden_sizes;
  spec.latent_dim = vc.latent_dim;
  spec.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(variant);
  spec.validate();
  return spec;
}

std::string variant_dir(int variant) { return "embed/v" + std::to_string(variant); }

/// Stream `s` of standardized outputs back in feature units.
Eigen::MatrixXd to_units(const embed::Standardizer& scaler, const embed::VaeSpec& spec, std::size_t s,
                         const Eigen::MatrixXd& block) {
  Eigen::Index first = 0;
  for (std::size_t i = 0; i < s; ++i) first += spec.inputs[i].length;
  return scaler.rows(first, spec.inputs[s].length).invert(block);
}

Series column(const Eigen::MatrixXd& m, Eigen::Index c) {
  return Series(m.col(c).data(), m.col(c).data() + m.rows());
}

}  // namespace

void save_model(const fs::path& dir, const StoredModel& model, std::vector<std::string>* written) {
  const auto& p = model.params;
  json layers = json::array();
  auto add = [&](const std::string& name) {
    if (written) written->push_back(name);
    return name;
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string wn = add(fmt::format("layer{:02d}_W.npy", i));
    const std::string bn = add(fmt::format("layer{:02d}_b.npy", i));
    save_matrix(dir / wn, p.layers[i].W);
    save_vector(dir / bn, p.layers[i].b);
    layers.push_back({{"W", wn}, {"b", bn}});
  }
  save_vector(dir / add("scaler_mean.npy"), model.scaler.mean);
  save_vector(dir / add("scaler_scale.npy"), model.scaler.scale);
  json streams = json::array();
  for (const auto& s : p.spec.inputs) streams.push_back({{"name", s.name}, {"length", s.length}, {"weight", s.weight}});
  const json doc = {{"variant", model.variant},
                    {"streams", streams},
                    {"hidden_sizes", p.spec.hidden_sizes},
                    {"latent_dim", p.spec.latent_dim},
                    {"seed", p.spec.seed},
                    {"layers", layers},
                    {"scaler", {{"mean", "scaler_mean.npy"}, {"scale", "scaler_scale.npy"}}}};
  std::ofstream out(dir / add("model.json"), std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << '\n';
}

StoredModel load_model(const fs::path& dir) {
  const json doc = read_json(dir / "model.json");
  StoredModel m;
  try {
    m.variant = doc.at("variant");
    auto& spec = m.params.spec;
    for (const auto& s : doc.at("streams")) spec.inputs.push_back({s.at("name"), s.at("length"), s.at("weight")});
    spec.hidden_sizes = doc.at("hidden_sizes").get<std::vector<Eigen::Index>>();
    spec.latent_dim = doc.at("latent_dim");
    spec.seed = doc.at("seed");
    for (const auto& l : doc.at("layers")) {
      m.params.layers.push_back({load_matrix(dir / l.at("W").get<std::string>()),
                                 load_vector(dir / l.at("b").get<std::string>())});
    }
    m.scaler.mean = load_vector(dir / doc.at("scaler").at("mean").get<std::string>());
    m.scaler.scale = load_vector(dir / doc.at("scaler").at("scale").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, (dir / "model.json").string() + ": " + e.what());
  }
  m.params.spec.validate();
  // Shapes must agree with a freshly built network of the same spec.
  const auto ref = embed::init_params(m.params.spec);
  if (ref.layers.size() != m.params.layers.size()) throw Error(ErrorCode::Format, "layer count does not match the spec");
  for (std::size_t i = 0; i < ref.layers.size(); ++i) {
    if (ref.layers[i].W.rows() != m.params.layers[i].W.rows() || ref.layers[i].W.cols() != m.params.layers[i].W.cols() ||
        ref.layers[i].b.size() != m.params.layers[i].b.size()) {
      throw Error(ErrorCode::Format, fmt::format("layer {} has the wrong shape", i));
    }
  }
  if (m.scaler.mean.size() != m.params.spec.input_dim() || m.scaler.scale.size() != m.params.spec.input_dim()) {
    throw Error(ErrorCode::Format, "scaler does not match the input size");
  }
  return m;
}

StageReport run_embed(const PipelineConfig& cfg, int variant) {
  if (variant < 1 || variant > 3) throw Error(ErrorCode::InvalidArgument, "variant must be 1, 2 or 3");
  StageWriter w(cfg, "embed_v" + std::to_string(variant));
  StageReport report;
  report.stage = "embed_v" + std::to_string(variant);
  const auto records = load_features(w.manifest());
  if (records.empty()) throw Error(ErrorCode::InsufficientSamples, "no feature vectors to embed");

  std::vector<features::FeatureVector> fvs;
  std::vector<std::string> conditions;
  for (const auto& r : records) {
    fvs.push_back(r.features);
    conditions.push_back(r.event.condition);
  }
  const embed::VaeSpec spec = variant_spec(cfg, variant);
  const Eigen::MatrixXd raw = embed::assemble(variant, fvs, cfg.features);
  const auto scaler = embed::Standardizer::fit(raw);
  const Eigen::MatrixXd data = scaler.apply(raw);
  const auto& vc = cfg.embed.variants[static_cast<std::size_t>(variant - 1)];
  const auto trained = embed::vae_train(spec, data, vc.optimizer);

  const std::string dir = variant_dir(variant);
  fs::create_directories(w.root() / dir);
  std::vector<std::string> model_files;
  save_model(w.root() / dir, {variant, trained.params, scaler}, &model_files);
  for (const auto& f : model_files) w.adopt(dir + "/" + f);

  const Eigen::MatrixXd z = embed::encode(trained.params, data);
  const RowMatrix zt = z.transpose();
  w.npy(dir + "/embeddings.npy", {static_cast<std::size_t>(zt.rows()), static_cast<std::size_t>(zt.cols())},
        std::span<const double>(zt.data(), static_cast<std::size_t>(zt.size())));
  std::string csv = "event_id";
  for (Eigen::Index k = 0; k < z.rows(); ++k) csv += fmt::format(",z{}", k + 1);
  csv += ",condition\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    csv += records[i].event.id;
    for (Eigen::Index k = 0; k < z.rows(); ++k) csv += "," + number(z(k, static_cast<Eigen::Index>(i)));
    csv += "," + conditions[i] + "\n";
  }
  w.text(dir + "/embeddings.csv", csv);
  w.npy(dir + "/loss.npy", trained.loss_history);

  const auto corr = embed::reconstruction_correlation(trained.params, data);
  json stream_corr = json::object();
  for (std::size_t s = 0; s < spec.inputs.size(); ++s) stream_corr[spec.inputs[s].name] = corr[s];
  w.json_file(dir + "/training.json", {{"events", records.size()},
                                       {"epochs", vc.optimizer.epochs},
                                       {"initial_loss", trained.initial_loss},
                                       {"final_loss", trained.loss_history.empty() ? trained.initial_loss
                                                                                   : trained.loss_history.back()},
                                       {"reconstruction_correlation", stream_corr}});

  if (spec.latent_dim == 2) {
    const auto manifold = embed::reconstruction_manifold(trained.params, cfg.embed.manifold);
    for (std::size_t s = 0; s < spec.inputs.size(); ++s) {
      const RowMatrix units = to_units(scaler, spec, s, manifold.streams[s]).transpose();
      w.npy(dir + "/manifold_" + spec.inputs[s].name + ".npy",
            {static_cast<std::size_t>(units.rows()), static_cast<std::size_t>(units.cols())},
            std::span<const double>(units.data(), static_cast<std::size_t>(units.size())));
    }
    // Trace-stream manifold as a grid of small plots laid out like the latent grid.
    const Eigen::MatrixXd traces = to_units(scaler, spec, 0, manifold.streams[0]);
    const int tile_w = 96, tile_h = 56;
    const auto n = static_cast<int>(manifold.n);
    io::Canvas grid(n * tile_w, n * tile_h);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const auto idx = static_cast<Eigen::Index>(r * n + c);
        grid.blit(io::line_plot({column(traces, idx)}, {io::palette(0)}, tile_w, tile_h), c * tile_w, r * tile_h);
      }
    w.png(dir + "/manifold.png", grid);

    std::vector<int> groups;
    distinct(conditions, &groups);
    std::vector<std::array<double, 2>> pts;
    for (Eigen::Index i = 0; i < z.cols(); ++i) pts.push_back({z(0, i), z(1, i)});
    w.png(dir + "/latent.png", io::scatter(pts, groups));
  } else {
    report.messages.push_back("latent_dim != 2: manifold and scatter panels skipped");
  }
  report.items = static_cast<int>(records.size());
  w.commit();
  return report;
}

StageReport run_prototypes(const PipelineConfig& cfg) {
  StageWriter w(cfg, "prototypes");
  StageReport report;
  report.stage = "prototypes";
  const int variant = cfg.embed.prototype_variant;
  const std::string dir = variant_dir(variant);
  const auto records = load_features(w.manifest());
  w.manifest().require(dir + "/model.json");
  const Eigen::MatrixXd zt = load_matrix(w.manifest().require(dir + "/embeddings.npy"));
  if (zt.cols() != 2) throw Error(ErrorCode::InvalidArgument, "prototype selection needs a 2-D latent space");
  if (static_cast<std::size_t>(zt.rows()) != records.size()) {
    throw Error(ErrorCode::ShapeMismatch, "embeddings and features disagree on the event count");
  }
  const Eigen::Matrix2Xd z = zt.transpose();
  std::vector<std::string> conditions;
  std::vector<features::FeatureVector> fvs;
  for (const auto& r : records) {
    conditions.push_back(r.event.condition);
    fvs.push_back(r.features);
  }
  auto gcfg = cfg.gmm;
  gcfg.seed = cfg.seed;
  const auto models = embed::gmm_fit(z, conditions, gcfg);
  const auto protos = embed::prototypes(models, z, conditions);

  // Reconstructions of the prototype traces through the stored model.
  const StoredModel model = load_model(w.root() / dir);
  const Eigen::MatrixXd data = model.scaler.apply(embed::assemble(variant, fvs, cfg.features));
  const auto recon = embed::decode(model.params, embed::encode(model.params, data));
  const Eigen::MatrixXd recon_trace = to_units(model.scaler, model.params.spec, 0, recon[0]);

  json out = json::object();
  for (const auto& [label, g] : models) {
    json comps = json::array();
    for (int j = 0; j < g.k(); ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const auto& c = g.covariances[sj];
      comps.push_back({{"weight", g.weights[sj]},
                       {"mean", {g.means[sj](0), g.means[sj](1)}},
                       {"covariance", {{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}}}});
    }
    out[label] = {{"requested_k", g.requested_k},
                  {"reduced", g.reduced},
                  {"converged", g.converged},
                  {"log_likelihood", g.log_likelihood},
                  {"components", comps},
                  {"prototypes", json::array()}};
    if (g.reduced) {
      report.messages.push_back(fmt::format("{}: {} events, fitted {} of {} components", label,
                                            std::count(conditions.begin(), conditions.end(), label), g.k(),
                                            g.requested_k));
    }
  }
  const int tile_w = 200, tile_h = 100;
  const auto labels = distinct(conditions);
  io::Canvas panel(std::max(1, cfg.gmm.k) * tile_w, std::max<int>(1, static_cast<int>(labels.size())) * tile_h);
  for (const auto& p : protos) {
    const auto& rec = records[p.event];
    out[p.condition]["prototypes"].push_back(
        {{"component", p.component}, {"event_id", rec.event.id}, {"log_density", p.log_density},
         {"z", {z(0, static_cast<Eigen::Index>(p.event)), z(1, static_cast<Eigen::Index>(p.event))}}});
    const auto row = static_cast<int>(std::lower_bound(labels.begin(), labels.end(), p.condition) - labels.begin());
    const auto tile = io::line_plot({rec.features.trace, column(recon_trace, static_cast<Eigen::Index>(p.event))},
                                    {io::palette(0), io::palette(3)}, tile_w, tile_h);
    panel.blit(tile, p.component * tile_w, row * tile_h);
  }
  w.json_file("prototypes/prototypes.json", {{"variant", variant}, {"conditions", out}});
  w.png("prototypes/prototypes.png", panel);
  report.items = static_cast<int>(protos.size());
  w.commit();
  return report;
}

namespace {

json stats(const std::vector<double>& v) {
  if (v.empty()) return {{"n", 0}, {"mean", nullptr}, {"std", nullptr}};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"n", v.size()}, {"mean", mean}, {"std", sd}};
}

}  // namespace

StageReport run_report(const PipelineConfig& cfg) {
  StageWriter w(cfg, "report");
  StageReport report;
  report.stage = "report";
  const auto events = read_events(w.manifest());
  const auto records = load_features(w.manifest());

  std::vector<std::string> labels;
  for (const auto& in : cfg.inputs) labels.push_back(in.condition);
  for (const auto& e : events) labels.push_back(e.condition);
  labels = distinct(labels);

  json per = json::object();
  std::vector<Series> mean_traces;
  for (const auto& label : labels) {
    int detected = 0, kept = 0;
    for (const auto& e : events)
      if (e.condition == label) {
        ++detected;
        kept += e.kept ? 1 : 0;
      }
    std::vector<double> amp, dur, up, down, left, right, vf, bu, ml, mr;
    Image src, snk;
    Series trace;
    for (const auto& r : records) {
      if (r.event.condition != label) continue;
      const auto& f = r.features;
      amp.push_back(f.peak_amplitude);
      dur.push_back(f.duration_s);
      up.push_back(f.up_total);
      down.push_back(f.down_total);
      left.push_back(f.left_total);
      right.push_back(f.right_total);
      if (f.vertical_fraction) vf.push_back(*f.vertical_fraction);
      if (f.bottom_up_share) bu.push_back(*f.bottom_up_share);
      if (f.medial_to_lateral_left) ml.push_back(*f.medial_to_lateral_left);
      if (f.medial_to_lateral_right) mr.push_back(*f.medial_to_lateral_right);
      if (src.size() == 0) {
        src = Image::Zero(f.source_mean.rows(), f.source_mean.cols());
        snk = src;
        trace.assign(f.trace.size(), 0.0);
      }
      src += f.source_mean;
      snk += f.sink_mean;
      for (std::size_t t = 0; t < trace.size(); ++t) trace[t] += f.trace[t];
    }
    const auto n = static_cast<double>(amp.size());
    if (!amp.empty()) {
      src /= n;
      snk /= n;
      for (auto& x : trace) x /= n;
      io::Canvas maps(2 * static_cast<int>(src.cols()) * 6 + 6, static_cast<int>(src.rows()) * 6);
      maps.blit(io::heatmap(src, nullptr, true, 6), 0, 0);
      maps.blit(io::heatmap(snk, nullptr, true, 6), static_cast<int>(src.cols()) * 6 + 6, 0);
      w.png("report/sources_sinks_" + label + ".png", maps);
    }
    mean_traces.push_back(trace);
    per[label] = {{"detected_events", detected},
                  {"kept_events", kept},
                  {"feature_events", amp.size()},
                  {"peak_amplitude", stats(amp)},
                  {"duration_s", stats(dur)},
                  {"directional_totals", {{"up", stats(up)}, {"down", stats(down)}, {"left", stats(left)},
                                          {"right", stats(right)}}},
                  {"ratios", {{"vertical_fraction", stats(vf)}, {"bottom_up_share", stats(bu)},
                              {"medial_to_lateral_left", stats(ml)}, {"medial_to_lateral_right", stats(mr)}}}};
  }
  std::vector<io::Rgb> colors;
  for (std::size_t i = 0; i < mean_traces.size(); ++i) colors.push_back(io::palette(static_cast<int>(i)));
  w.png("report/mean_traces.png", io::line_plot(mean_traces, colors, 480, 200));

  json embeddings = json::object();
  for (int v = 1; v <= 3; ++v) {
    const std::string rel = variant_dir(v) + "/embeddings.npy";
    if (!w.manifest().contains(rel)) continue;
    const Eigen::MatrixXd zt = load_matrix(w.root() / rel);
    embeddings["v" + std::to_string(v)] = {{"events", zt.rows()}, {"latent_dim", zt.cols()}};
    if (zt.cols() == 2 && static_cast<std::size_t>(zt.rows()) == records.size()) {
      std::vector<std::string> conds;
      for (const auto& r : records) conds.push_back(r.event.condition);
      std::vector<int> groups;
      distinct(conds, &groups);
      std::vector<std::array<double, 2>> pts;
      for (Eigen::Index i = 0; i < zt.rows(); ++i) pts.push_back({zt(i, 0), zt(i, 1)});
      w.png("report/latent_v" + std::to_string(v) + ".png", io::scatter(pts, groups));
    }
  }
  json prototypes = nullptr;
  if (w.manifest().contains("prototypes/prototypes.json")) {
    prototypes = read_json(w.root() / "prototypes/prototypes.json");
  }
  w.json_file("report/report.json", {{"conditions", per},
                                     {"condition_colors", labels},
                                     {"total_kept_events", records.size()},
                                     {"embeddings", embeddings},
                                     {"prototypes", prototypes},
                                     {"config", describe(cfg)}});
  report.items = static_cast<int>(labels.size());
  w.commit();
  return report;
}

}  // namespace slowwave::pipeline
