// Command-line front end for the slow-wave pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "slowwave/core/error.hpp"
#include "slowwave/pipeline/config.hpp"
#include "slowwave/pipeline/stages.hpp"

namespace {

using namespace slowwave;

enum Exit { kOk = 0, kPartial = 1, kUsage = 2 };

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::MissingUpstream:
    case ErrorCode::Format:
      return kUsage;
    default:
      return kPartial;
  }
}

void print(const pipeline::StageReport& r) {
  fmt::print(stderr, "[{}] {} item(s), {} failure(s)\n", r.stage, r.items, r.failures);
  for (const auto& m : r.messages) fmt::print(stderr, "[{}]   {}\n", r.stage, m);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slow-wave event detection, flow decomposition and embedding pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<unsigned> threads;
  app.add_option("-c,--config", config_path, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the global seed");
  app.add_option("-o,--output", output, "Override the output directory");
  app.add_option("-j,--threads", threads, "Worker threads (0: all cores)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  auto* detect = app.add_subcommand("detect", "Detect events in every input recording");
  auto* flow = app.add_subcommand("flow", "Optical flow for every kept event");
  auto* decompose = app.add_subcommand("decompose", "Helmholtz decomposition of every flow field");
  auto* features = app.add_subcommand("features", "Aggregate per-event feature vectors");
  auto* embed = app.add_subcommand("embed", "Train a VAE and embed the feature vectors");
  int variant = 1;
  embed->add_option("-v,--variant", variant, "Input variant")->check(CLI::Range(1, 3));
  auto* protos = app.add_subcommand("prototypes", "Per-condition mixtures and prototype events");
  std::optional<int> proto_variant;
  protos->add_option("-v,--variant", proto_variant, "Embedding variant to cluster")->check(CLI::Range(1, 3));
  auto* report = app.add_subcommand("report", "Per-condition statistics and figure panels");
  auto* run = app.add_subcommand("run", "detect through report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  pipeline::PipelineConfig cfg;
  try {
    cfg = pipeline::load_config(config_path, output ? std::optional<std::filesystem::path>(*output) : std::nullopt);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (proto_variant) cfg.embed.prototype_variant = *proto_variant;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }

  try {
    std::vector<pipeline::StageReport> reports;
    if (*synth) reports.push_back(pipeline::run_synth(cfg));
    else if (*detect) reports.push_back(pipeline::run_detect(cfg));
    else if (*flow) reports.push_back(pipeline::run_flow(cfg));
    else if (*decompose) reports.push_back(pipeline::run_decompose(cfg));
    else if (*features) reports.push_back(pipeline::run_features(cfg));
    else if (*embed) reports.push_back(pipeline::run_embed(cfg, variant));
    else if (*protos) reports.push_back(pipeline::run_prototypes(cfg));
    else if (*report) reports.push_back(pipeline::run_report(cfg));
    else if (*run) reports = pipeline::run_all(cfg);

    int code = kOk;
    for (const auto& r : reports) {
      print(r);
      if (r.partial()) code = kPartial;
    }
    return code;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_for(e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kPartial;
  }
}
