#include <doctest.h>

#include <fstream>
#include <iterator>
#include <string>

#include "slowwave/io/manifest.hpp"
#include "slowwave/io/npy.hpp"
#include "slowwave/io/render.hpp"

using namespace slowwave;
namespace fs = std::filesystem;

namespace {

// Bytes written by numpy.save for the same arrays.
const char* kNumpyF8 =
    "934e554d5059010076007b276465736372273a20273c6638272c2027666f727472616e5f6f72646572273a2046616c73652c20277368"
    "617065273a2028322c2033292c207d202020202020202020202020202020202020202020202020202020202020202020202020202020"
    "202020202020202020202020202020202020200a0000000000000000000000000000e03f000000000000f03f000000000000f83f0000"
    "0000000000400000000000000440";
const char* kNumpyU2 =
    "934e554d5059010076007b276465736372273a20273c7532272c2027666f727472616e5f6f72646572273a2046616c73652c20277368"
    "617065273a2028332c292c207d2020202020202020202020202020202020202020202020202020202020202020202020202020202020"
    "202020202020202020202020202020202020200a01000200ffff";

std::string unhex(const std::string& h) {
  std::string out;
  for (std::size_t i = 0; i + 1 < h.size(); i += 2) out.push_back(static_cast<char>(std::stoi(h.substr(i, 2), nullptr, 16)));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("slowwave_io_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("npy matches numpy byte for byte") {
  TempDir tmp;
  Image img(2, 3);
  img << 0.0, 0.5, 1.0, 1.5, 2.0, 2.5;
  io::save(tmp.path / "a.npy", img);
  CHECK(slurp(tmp.path / "a.npy") == unhex(kNumpyF8));

  const std::vector<double> u{1, 2, 65535};
  io::write_npy(tmp.path / "u.npy", {3}, u, io::Dtype::U2);
  CHECK(slurp(tmp.path / "u.npy") == unhex(kNumpyU2));
}

TEST_CASE("npy reads numpy output") {
  TempDir tmp;
  spit(tmp.path / "a.npy", unhex(kNumpyF8));
  const Image img = io::load_image(tmp.path / "a.npy");
  REQUIRE(img.rows() == 2);
  REQUIRE(img.cols() == 3);
  CHECK(img(1, 2) == 2.5);
  CHECK(img(0, 1) == 0.5);

  spit(tmp.path / "u.npy", unhex(kNumpyU2));
  const auto s = io::load_series(tmp.path / "u.npy");
  CHECK(s == std::vector<double>{1, 2, 65535});
}

TEST_CASE("npy round trips") {
  TempDir tmp;
  Stack st(3, 4, 5);
  for (std::size_t i = 0; i < st.data().size(); ++i) st.data()[i] = std::sin(static_cast<double>(i)) * 1e3;
  io::save(tmp.path / "deep/s.npy", st);
  const Stack back = io::load_stack(tmp.path / "deep/s.npy");
  CHECK(back.same_shape(st));
  CHECK(std::equal(st.data().begin(), st.data().end(), back.data().begin()));

  Mask m = Mask::Constant(3, 4, false);
  m(1, 2) = m(2, 0) = true;
  io::save(tmp.path / "m.npy", m);
  CHECK((io::load_mask(tmp.path / "m.npy") == m).all());
  CHECK(io::read_npy(tmp.path / "m.npy").dtype == io::Dtype::B1);

  io::save(tmp.path / "e.npy", Series{});
  CHECK(io::load_series(tmp.path / "e.npy").empty());

  CHECK_THROWS_AS(io::load_stack(tmp.path / "m.npy"), Error);
  spit(tmp.path / "junk.npy", "not an array");
  CHECK_THROWS_AS(io::read_npy(tmp.path / "junk.npy"), Error);
  CHECK_THROWS_AS(io::read_npy(tmp.path / "absent.npy"), Error);
}

TEST_CASE("raw stack with sidecar") {
  TempDir tmp;
  std::vector<float> raw(2 * 3 * 4);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(i) * 0.25f;
  {
    std::ofstream out(tmp.path / "rec.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  }
  spit(tmp.path / "rec.json", R"({"shape": [2, 3, 4], "dtype": "float32", "fs": 50, "file": "rec.bin"})");
  const auto r = io::load_raw_stack(tmp.path / "rec.json");
  CHECK(r.fs == 50.0);
  CHECK(r.frames.frames() == 2);
  CHECK(r.frames(1, 2, 3) == doctest::Approx(23 * 0.25));

  spit(tmp.path / "short.json", R"({"shape": [3, 3, 4], "dtype": "<f4", "file": "rec.bin"})");
  CHECK_THROWS_AS(io::load_raw_stack(tmp.path / "short.json"), Error);
}

TEST_CASE("sha256 known vectors") {
  CHECK(io::sha256_hex("abc", 3) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("", 0) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir tmp;
  spit(tmp.path / "abc", "abc");
  CHECK(io::sha256_file(tmp.path / "abc") == io::sha256_hex("abc", 3));
}

TEST_CASE("manifest records, reloads and clears") {
  TempDir tmp;
  spit(tmp.path / "x.txt", "abc");
  fs::create_directories(tmp.path / "d");
  spit(tmp.path / "d/y.txt", "");
  {
    io::Manifest m(tmp.path);
    m.record("one", "x.txt");
    m.record("two", "d/y.txt");
    m.save();
  }
  io::Manifest m(tmp.path);
  REQUIRE(m.contains("x.txt"));
  CHECK(m.entries().at("x.txt").sha256 == io::sha256_hex("abc", 3));
  CHECK(m.entries().at("x.txt").bytes == 3);
  CHECK(m.files("two") == std::vector<std::string>{"d/y.txt"});
  CHECK(m.require("x.txt") == tmp.path / "x.txt");
  CHECK_THROWS_AS(m.require("nope"), Error);

  m.clear_stage("one");
  CHECK_FALSE(fs::exists(tmp.path / "x.txt"));
  try {
    m.require("x.txt");
    FAIL("expected MissingUpstream");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingUpstream);
  }
}

TEST_CASE("canvas and png output") {
  TempDir tmp;
  io::Canvas c(10, 6);
  c.fill_rect(2, 1, 3, 2, {1, 2, 3});
  CHECK(c.at(3, 2) == io::Rgb{1, 2, 3});
  CHECK(c.at(5, 2) == io::Rgb{255, 255, 255});
  c.set(-1, 100, {0, 0, 0});  // clipped
  c.line(0, 5, 9, 5, {9, 9, 9});
  CHECK(c.at(4, 5) == io::Rgb{9, 9, 9});

  io::write_png(tmp.path / "a.png", c);
  io::write_png(tmp.path / "b.png", c);
  const auto bytes = slurp(tmp.path / "a.png");
  CHECK(bytes.substr(1, 3) == "PNG");
  CHECK(bytes == slurp(tmp.path / "b.png"));

  CHECK(io::diverging(0.0) == io::Rgb{247, 247, 247});
  CHECK(io::diverging(1.0) == io::Rgb{178, 24, 43});
  CHECK(io::diverging(-1.0) == io::Rgb{33, 102, 172});
  CHECK(io::sequential(0.0) == io::Rgb{68, 1, 84});
  CHECK(io::sequential(1.0) == io::Rgb{253, 231, 37});

  Image img(2, 2);
  img << -1, 0, 0, 2;
  Mask m = Mask::Constant(2, 2, true);
  m(0, 1) = false;
  const auto h = io::heatmap(img, &m, true, 3);
  CHECK(h.width() == 6);
  CHECK(h.at(4, 1) == io::Rgb{128, 128, 128});
  CHECK(h.at(4, 4) == io::diverging(1.0));
  CHECK(h.at(1, 1) == io::diverging(-0.5));

  const auto lp = io::line_plot({{0, 1, 0}, {}}, {}, 40, 20);
  CHECK(lp.width() == 40);
  const auto sc = io::scatter({{0, 0}, {1, 1}}, {0, 1}, 40);
  CHECK(sc.height() == 40);
}
