#include "slowwave/io/npy.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "slowwave/core/error.hpp"

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace slowwave::io {

std::size_t NpyArray::size() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

std::string_view descr(Dtype t) {
  switch (t) {
    case Dtype::F8: return "<f8";
    case Dtype::F4: return "<f4";
    case Dtype::U2: return "<u2";
    case Dtype::B1: return "|b1";
  }
  return "";
}

std::size_t item_size(Dtype t) {
  switch (t) {
    case Dtype::F8: return 8;
    case Dtype::F4: return 4;
    case Dtype::U2: return 2;
    case Dtype::B1: return 1;
  }
  return 0;
}

Dtype parse_descr(const std::string& d) {
  if (d == "<f8") return Dtype::F8;
  if (d == "<f4") return Dtype::F4;
  if (d == "<u2") return Dtype::U2;
  if (d == "|b1") return Dtype::B1;
  throw Error(ErrorCode::Format, "unsupported dtype '" + d + "'");
}

std::vector<double> widen(const std::vector<char>& raw, Dtype t, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = raw.data() + i * item_size(t);
    switch (t) {
      case Dtype::F8: std::memcpy(&out[i], p, 8); break;
      case Dtype::F4: {
        float f;
        std::memcpy(&f, p, 4);
        out[i] = f;
        break;
      }
      case Dtype::U2: {
        std::uint16_t u;
        std::memcpy(&u, p, 2);
        out[i] = u;
        break;
      }
      case Dtype::B1: out[i] = *p != 0 ? 1.0 : 0.0; break;
    }
  }
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::vector<char> read_exact(std::ifstream& in, std::size_t bytes, const fs::path& path) {
  std::vector<char> raw(bytes);
  in.read(raw.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw Error(ErrorCode::Format, path.string() + " is truncated");
  return raw;
}

}  // namespace

NpyArray read_npy(const fs::path& path) {
  auto in = open_in(path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw Error(ErrorCode::Format, path.string() + " is not an NPY file");
  }
  std::size_t header_len = 0;
  if (magic[6] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else if (magic[6] == 2 || magic[6] == 3) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw Error(ErrorCode::Format, "unsupported NPY version in " + path.string());
  }
  const auto hdr = read_exact(in, header_len, path);
  const std::string header(hdr.begin(), hdr.end());

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')"))) {
    throw Error(ErrorCode::Format, "NPY header lacks descr");
  }
  NpyArray a;
  a.dtype = parse_descr(m[1]);
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")) && m[1] == "True") {
    throw Error(ErrorCode::Format, "Fortran-ordered NPY arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw Error(ErrorCode::Format, "NPY header lacks shape");
  }
  std::stringstream dims(m[1].str());
  std::string tok;
  while (std::getline(dims, tok, ',')) {
    if (tok.find_first_not_of(" ") == std::string::npos) continue;
    a.shape.push_back(std::stoull(tok));
  }
  const std::size_t n = a.size();
  a.data = widen(read_exact(in, n * item_size(a.dtype), path), a.dtype, n);
  return a;
}

void write_npy(const fs::path& path, const std::vector<std::size_t>& shape, std::span<const double> data, Dtype dtype) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) throw Error(ErrorCode::ShapeMismatch, "NPY shape does not match the data size");

  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) dims += (i ? ", " : "") + std::to_string(shape[i]);
  if (shape.size() == 1) dims += ",";
  std::string header = "{'descr': '" + std::string(descr(dtype)) + "', 'fortran_order': False, 'shape': (" + dims + "), }";
  // Pad so the data starts on a 64-byte boundary; the header ends with a newline.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(lb, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::vector<char> raw(n * item_size(dtype));
  for (std::size_t i = 0; i < n; ++i) {
    char* p = raw.data() + i * item_size(dtype);
    switch (dtype) {
      case Dtype::F8: std::memcpy(p, &data[i], 8); break;
      case Dtype::F4: {
        const auto f = static_cast<float>(data[i]);
        std::memcpy(p, &f, 4);
        break;
      }
      case Dtype::U2: {
        const auto u = static_cast<std::uint16_t>(std::clamp(std::lround(data[i]), 0L, 65535L));
        std::memcpy(p, &u, 2);
        break;
      }
      case Dtype::B1: *p = data[i] != 0.0 ? 1 : 0; break;
    }
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

void save(const fs::path& path, const Image& img) {
  write_npy(path, {static_cast<std::size_t>(img.rows()), static_cast<std::size_t>(img.cols())},
            std::span<const double>(img.data(), static_cast<std::size_t>(img.size())));
}

void save(const fs::path& path, const Mask& mask) {
  const Image as_double = mask.cast<double>();
  write_npy(path, {static_cast<std::size_t>(mask.rows()), static_cast<std::size_t>(mask.cols())},
            std::span<const double>(as_double.data(), static_cast<std::size_t>(as_double.size())), Dtype::B1);
}

void save(const fs::path& path, const Stack& stack) {
  write_npy(path,
            {static_cast<std::size_t>(stack.frames()), static_cast<std::size_t>(stack.rows()),
             static_cast<std::size_t>(stack.cols())},
            stack.data());
}

void save(const fs::path& path, const Series& series) { write_npy(path, {series.size()}, series); }

Stack load_stack(const fs::path& path) {
  const NpyArray a = read_npy(path);
  if (a.shape.size() != 3) throw Error(ErrorCode::Format, path.string() + " is not a 3-D array");
  Stack s(static_cast<std::ptrdiff_t>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]),
          static_cast<Eigen::Index>(a.shape[2]), 0.0);
  std::copy(a.data.begin(), a.data.end(), s.data().begin());
  return s;
}

Image load_image(const fs::path& path) {
  const NpyArray a = read_npy(path);
  if (a.shape.size() != 2) throw Error(ErrorCode::Format, path.string() + " is not a 2-D array");
  Image img(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  std::copy(a.data.begin(), a.data.end(), img.data());
  return img;
}

Mask load_mask(const fs::path& path) { return load_image(path) != 0.0; }

Series load_series(const fs::path& path) {
  NpyArray a = read_npy(path);
  if (a.shape.size() != 1) throw Error(ErrorCode::Format, path.string() + " is not a 1-D array");
  return std::move(a.data);
}

RawStack load_raw_stack(const fs::path& sidecar) {
  nlohmann::json meta;
  try {
    auto in = open_in(sidecar);
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, sidecar.string() + ": " + e.what());
  }
  const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw Error(ErrorCode::Format, "raw stack shape must be [T, H, W]");
  std::string dt = meta.value("dtype", "<f4");
  if (dt == "float32") dt = "<f4";
  if (dt == "float64") dt = "<f8";
  if (dt == "uint16") dt = "<u2";
  const Dtype dtype = parse_descr(dt);
  fs::path data_path = meta.contains("file") ? sidecar.parent_path() / meta["file"].get<std::string>()
                                             : fs::path(sidecar).replace_extension("");
  auto in = open_in(data_path);
  const std::size_t n = shape[0] * shape[1] * shape[2];
  const auto values = widen(read_exact(in, n * item_size(dtype), data_path), dtype, n);
  RawStack r{Stack(static_cast<std::ptrdiff_t>(shape[0]), static_cast<Eigen::Index>(shape[1]),
                   static_cast<Eigen::Index>(shape[2]), 0.0),
             meta.value("fs", 0.0)};
  std::copy(values.begin(), values.end(), r.frames.data().begin());
  return r;
}

}  // namespace slowwave::io
