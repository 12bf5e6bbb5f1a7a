#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "slowwave/io/manifest.hpp"
#include "slowwave/pipeline/config.hpp"
#include "slowwave/pipeline/stages.hpp"

using namespace slowwave;
using namespace slowwave::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("slowwave_pipeline_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read(const fs::path& p) { return json::parse(slurp(p)); }

void write(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2);
}

json recording(const std::string& id, const std::string& condition, std::uint64_t seed,
               const std::vector<std::pair<double, double>>& events, std::array<double, 2> dir = {1.0, 0.0}) {
  json ev = json::array();
  for (const auto& [onset, amp] : events)
    ev.push_back({{"onset_s", onset}, {"duration_s", 0.9}, {"amplitude", amp}, {"direction", dir}});
  return {{"id", id}, {"condition", condition}, {"seed", seed}, {"rows", 24}, {"cols", 24},
          {"duration_s", 10.0}, {"noise_sigma", 0.001}, {"events", ev}};
}

json small_config(const json& recordings) {
  json inputs = json::array();
  for (const auto& r : recordings) {
    const std::string id = r["id"];
    inputs.push_back({{"id", id},
                      {"frames", "{output}/synth/" + id + "/frames.npy"},
                      {"mask_left", "{output}/synth/" + id + "/mask_left.npy"},
                      {"mask_right", "{output}/synth/" + id + "/mask_right.npy"},
                      {"fs", 100.0},
                      {"condition", r["condition"]}});
  }
  return {{"seed", 7},
          {"output_dir", "out"},
          {"threads", 2},
          {"inputs", inputs},
          {"embed", {{"defaults", {{"hidden_sizes", {32, 16, 8}}, {"epochs", 200}}}}},
          {"gmm", {{"k", 2}}},
          {"synth", {{"recordings", recordings}}}};
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing") {
  TempDir tmp("config");
  const json doc = {{"output_dir", "res"},
                    {"seed", 3},
                    {"inputs", {{{"id", "a"}, {"frames", "{output}/x.npy"}, {"mask_left", "l.npy"},
                                 {"mask_right", "/abs/r.npy"}, {"condition", "c1"}}}},
                    {"flow", {{"alpha", 0.5}}},
                    {"embed", {{"defaults", {{"epochs", 10}}}, {"variant2", {{"epochs", 20}, {"weights", {{"trace", 2.0}}}}}}}};
  ::unsetenv(kOutputRootEnv);
  const auto cfg = parse_config(doc, tmp.path);
  CHECK(cfg.seed == 3);
  CHECK(cfg.output_dir == tmp.path / "res");
  REQUIRE(cfg.inputs.size() == 1);
  CHECK(cfg.inputs[0].frames == tmp.path / "res" / "x.npy");
  CHECK(cfg.inputs[0].mask_left == tmp.path / "l.npy");
  CHECK(cfg.inputs[0].mask_right == fs::path("/abs/r.npy"));
  CHECK(cfg.hs.alpha == 0.5);
  CHECK(cfg.embed.variants[0].optimizer.epochs == 10);
  CHECK(cfg.embed.variants[1].optimizer.epochs == 20);
  CHECK(cfg.embed.variants[1].weights.at("trace") == 2.0);
  CHECK(cfg.synth.size() == default_synth().size());

  ::setenv(kOutputRootEnv, "/srv/results", 1);
  CHECK(parse_config(doc, tmp.path).output_dir == fs::path("/srv/results/res"));
  CHECK(parse_config(doc, tmp.path, fs::path("/elsewhere")).output_dir == fs::path("/elsewhere"));
  ::unsetenv(kOutputRootEnv);

  auto expect_invalid = [&](const json& d) {
    try {
      parse_config(d, tmp.path);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  };
  expect_invalid({{"outptu_dir", "x"}});
  expect_invalid({{"flow", {{"alpha", "big"}}}});
  expect_invalid({{"flow", {{"alpha", -1.0}}}});
  expect_invalid({{"embed", {{"prototype_variant", 4}}}});
  expect_invalid({{"inputs", {{{"id", "a"}, {"frames", "f"}}}}});
}

TEST_CASE("stages require their upstream outputs") {
  TempDir tmp("upstream");
  const auto cfg = parse_config(small_config(json::array({recording("r0", "a", 1, {{2.0, 0.12}})})), tmp.path);
  for (auto run : {run_flow, run_decompose, run_features, run_prototypes, run_report}) {
    try {
      run(cfg);
      FAIL("expected MissingUpstream");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingUpstream);
    }
  }
  CHECK_THROWS_AS(run_embed(cfg, 1), Error);
  CHECK_THROWS_AS(run_embed(cfg, 4), Error);

  auto empty = cfg;
  empty.inputs.clear();
  try {
    run_detect(empty);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("pipeline on a synthetic dataset") {
  TempDir tmp("e2e");
  // Condition "mixed" holds two kinds of event: weak downward and strong upward waves.
  const json recs = json::array({
      recording("a0", "plain", 11, {{1.5, 0.1}, {4.5, 0.12}, {7.5, 0.14}}),
      recording("m0", "mixed", 12, {{1.5, 0.08}, {4.5, 0.09}, {7.5, 0.08}}),
      recording("m1", "mixed", 13, {{1.5, 0.3}, {4.5, 0.32}, {7.5, 0.3}}, {-1.0, 0.0}),
  });
  write(tmp.path / "cfg.json", small_config(recs));
  const auto cfg = load_config(tmp.path / "cfg.json");
  const fs::path out = tmp.path / "out";

  CHECK(run_synth(cfg).failures == 0);
  CHECK(fs::exists(out / "synth/pipeline.json"));
  const auto truth = read(out / "synth/a0/truth.json");
  CHECK(truth["events"].size() == 3);

  const auto detect = run_detect(cfg);
  CHECK(detect.failures == 0);
  const auto events = read(out / "detect/events.json");
  std::map<std::string, int> kept;
  for (const auto& r : events["recordings"]) {
    CHECK(r["status"] == "ok");
    CHECK(r["events"].size() == 3);
    for (const auto& e : r["events"]) kept[r["condition"]] += e["kept"].get<bool>() ? 1 : 0;
    // Windows agree with the generator's schedule.
    const auto t = read(out / ("synth/" + r["id"].get<std::string>() + "/truth.json"));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(r["events"][i]["onset"].get<int>() - t["events"][i]["onset"].get<int>()) <= 2);
      CHECK(std::abs(r["events"][i]["offset"].get<int>() - t["events"][i]["offset"].get<int>()) <= 2);
    }
  }
  CHECK(kept["plain"] == 3);
  CHECK(kept["mixed"] == 6);

  for (auto stage : {run_flow, run_decompose, run_features}) CHECK(stage(cfg).failures == 0);
  const auto rows = csv_rows(out / "features/features.csv");
  CHECK(rows.size() == 1 + 9);

  for (int v = 1; v <= 3; ++v) CHECK(run_embed(cfg, v).items == 9);
  CHECK(csv_rows(out / "embed/v1/embeddings.csv").size() == 1 + 9);

  // The stored model reproduces the embeddings.
  const auto model = load_model(out / "embed/v2");
  CHECK(model.variant == 2);
  CHECK(model.params.finite());

  const auto proto = run_prototypes(cfg);
  CHECK(proto.items == 4);
  const auto pj = read(out / "prototypes/prototypes.json");
  std::set<char> kinds;
  for (const auto& p : pj["conditions"]["mixed"]["prototypes"]) kinds.insert(p["event_id"].get<std::string>()[1]);
  CHECK(kinds == std::set<char>{'0', '1'});

  run_report(cfg);
  const auto report = read(out / "report/report.json");
  CHECK(report["conditions"]["plain"]["detected_events"] == 3);
  CHECK(report["conditions"]["mixed"]["kept_events"] == 6);
  // Amplitude statistics agree with a recomputation from the CSV.
  std::vector<double> amps;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i][2] == "mixed") amps.push_back(std::stod(rows[i][6]));
  double mean = 0.0;
  for (double a : amps) mean += a / static_cast<double>(amps.size());
  double ss = 0.0;
  for (double a : amps) ss += (a - mean) * (a - mean);
  const auto& amp = report["conditions"]["mixed"]["peak_amplitude"];
  CHECK(amp["mean"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
  CHECK(amp["std"].get<double>() == doctest::Approx(std::sqrt(ss / 5.0)).epsilon(1e-12));

  // Every output is listed with the hash of its current contents.
  const io::Manifest m(out);
  for (const auto& [rel, e] : m.entries()) {
    REQUIRE(fs::exists(out / rel));
    CHECK(io::sha256_file(out / rel) == e.sha256);
  }
  const std::string first = slurp(out / "manifest.json");

  // Rerunning a stage reproduces its outputs byte for byte.
  run_features(cfg);
  run_embed(cfg, 1);
  CHECK(slurp(out / "manifest.json") == first);

  // A stage that cannot start keeps its previous outputs.
  fs::rename(out / "features/features.json", tmp.path / "features.json");
  CHECK_THROWS_AS(run_report(cfg), Error);
  CHECK(fs::exists(out / "report/report.json"));
  CHECK(slurp(out / "manifest.json") == first);
  fs::rename(tmp.path / "features.json", out / "features/features.json");

  // Outputs that a rerun no longer produces are removed.
  auto fewer = cfg;
  fewer.inputs.pop_back();
  run_detect(fewer);
  CHECK_FALSE(fs::exists(out / "detect/m1"));
  CHECK(io::Manifest(out).files("detect").size() < m.files("detect").size());
}

#ifdef SLOWWAVE_CLI
TEST_CASE("command-line exit codes") {
  TempDir tmp("cli");
  const std::string cli = SLOWWAVE_CLI;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  write(tmp.path / "empty.json", {{"output_dir", (tmp.path / "o").string()}});
  write(tmp.path / "bad.json", {{"no_such_key", 1}});
  const std::string empty = (tmp.path / "empty.json").string();
  CHECK(run("") == 2);
  CHECK(run("--config " + empty + " frobnicate") == 2);
  CHECK(run("--config " + (tmp.path / "bad.json").string() + " detect") == 2);
  CHECK(run("--config " + empty + " detect") == 2);     // empty input manifest
  CHECK(run("--config " + empty + " flow") == 2);       // nothing upstream
  CHECK(run("--config " + empty + " embed --variant 4") == 2);

  // One unreadable recording among good ones is a partial failure.
  const json recs = json::array({recording("g", "c", 5, {{2.0, 0.12}})});
  auto doc = small_config(recs);
  doc["output_dir"] = (tmp.path / "p").string();
  doc["inputs"].push_back({{"id", "missing"}, {"frames", "nope.npy"}, {"mask_left", "l.npy"},
                           {"mask_right", "r.npy"}, {"fs", 100.0}});
  write(tmp.path / "partial.json", doc);
  const std::string partial = (tmp.path / "partial.json").string();
  CHECK(run("--config " + partial + " synth") == 0);
  CHECK(run("--config " + partial + " detect") == 1);
  CHECK(run("--config " + partial + " --seed 9 flow") == 0);
}
#endif
