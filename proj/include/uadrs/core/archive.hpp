#pragma once

#include <nlohmann/json_fwd.hpp>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uadrs/core/tensor.hpp"

namespace uadrs {

/// Self-describing checkpoint container: a JSON header (metadata plus a
/// tensor directory) followed by raw little-endian float32 payloads. A file
/// loads without any companion config.
void write_archive(const std::filesystem::path& path, const nlohmann::json& meta,
                   const std::vector<std::pair<std::string, const Tensor*>>& tensors);

struct LoadedArchive {
  std::shared_ptr<nlohmann::json> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

LoadedArchive read_archive(const std::filesystem::path& path);

/// Stable FNV-1a hash of a byte string, hex-encoded. Used for config hashes
/// and checkpoint identities.
std::string fnv1a_hex(const std::string& bytes);

/// Hash of an on-disk file's contents.
std::string file_hash(const std::filesystem::path& path);

}  // namespace uadrs
