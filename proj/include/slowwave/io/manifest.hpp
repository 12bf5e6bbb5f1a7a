#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace slowwave::io {

namespace fs = std::filesystem;

/// Lowercase hex SHA-256.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const fs::path& path);

/// Index of every file under an output root with its producing stage and content hash,
/// stored as `<root>/manifest.json`. Keys are root-relative paths with '/' separators.
class Manifest {
 public:
  struct Entry {
    std::string stage;
    std::string sha256;
    std::uintmax_t bytes = 0;
  };

  explicit Manifest(fs::path root);  // loads the existing manifest if present

  const fs::path& root() const { return root_; }
  fs::path path() const { return root_ / "manifest.json"; }

  /// Hashes `rel` (relative to root) and records it under `stage`.
  void record(const std::string& stage, const std::string& rel);
  /// Deletes every file previously recorded for `stage` and forgets the entries.
  void clear_stage(const std::string& stage);
  /// Forgets one entry; the file is left alone.
  void erase(const std::string& rel) { entries_.erase(rel); }

  bool contains(const std::string& rel) const { return entries_.count(rel) != 0; }
  /// Absolute path of a listed file; throws MissingUpstream when unlisted or absent on disk.
  fs::path require(const std::string& rel) const;
  std::vector<std::string> files(const std::string& stage) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void save() const;

 private:
  fs::path root_;
  std::map<std::string, Entry> entries_;
};

}  // namespace slowwave::io
