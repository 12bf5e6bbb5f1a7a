#include "slowwave/io/manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "slowwave/core/error.hpp"

namespace slowwave::io {

namespace {

using EvpCtx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

EvpCtx new_ctx() {
  EvpCtx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 initialisation failed");
  }
  return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) throw Error(ErrorCode::Io, "SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  auto ctx = new_ctx();
  EVP_DigestUpdate(ctx.get(), data, size);
  return finish(ctx.get());
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  auto ctx = new_ctx();
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return finish(ctx.get());
}

Manifest::Manifest(fs::path root) : root_(std::move(root)) {
  std::ifstream in(path());
  if (!in) return;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    for (const auto& [rel, e] : j.at("files").items()) {
      entries_[rel] = Entry{e.at("stage").get<std::string>(), e.at("sha256").get<std::string>(),
                            e.at("bytes").get<std::uintmax_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, path().string() + ": " + e.what());
  }
}

void Manifest::record(const std::string& stage, const std::string& rel) {
  const fs::path p = root_ / rel;
  entries_[rel] = Entry{stage, sha256_file(p), fs::file_size(p)};
}

void Manifest::clear_stage(const std::string& stage) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.stage == stage) {
      std::error_code ec;
      fs::remove(root_ / it->first, ec);
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
}

fs::path Manifest::require(const std::string& rel) const {
  const fs::path p = root_ / rel;
  if (!contains(rel) || !fs::exists(p)) throw Error(ErrorCode::MissingUpstream, rel + " has not been produced");
  return p;
}

std::vector<std::string> Manifest::files(const std::string& stage) const {
  std::vector<std::string> out;
  for (const auto& [rel, e] : entries_)
    if (e.stage == stage) out.push_back(rel);
  return out;
}

void Manifest::save() const {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [rel, e] : entries_) files[rel] = {{"stage", e.stage}, {"sha256", e.sha256}, {"bytes", e.bytes}};
  const nlohmann::json j = {{"version", 1}, {"files", files}};
  fs::create_directories(root_);
  std::ofstream out(path(), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path().string());
  out << j.dump(2) << '\n';
}

}  // namespace slowwave::io
