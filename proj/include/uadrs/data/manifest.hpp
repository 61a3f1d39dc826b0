#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace uadrs::data {

/// Persisted record tying one experiment together: what was attacked, with
/// what, how it was purified, and what came out. Serialized as canonical
/// JSON (sorted keys, fixed indentation) so equal manifests are equal bytes.
struct ExperimentManifest {
  std::string dataset_root;
  std::string task;
  std::string victim_checkpoint;
  std::string diffusion_checkpoint;
  std::string attack;
  int selected_level = -1;
  uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json artifacts = nlohmann::json::object();  // stage -> path refs
  nlohmann::json seeds = nlohmann::json::object();      // stage -> seed
  std::string tool_version;

  nlohmann::json to_json() const;
  static ExperimentManifest from_json(const nlohmann::json& j);

  bool operator==(const ExperimentManifest& o) const;
};

/// Refuses to persist records pointing at files that do not exist; every
/// string leaf under `artifacts` is checked the same way.
void write_manifest(const ExperimentManifest& m,
                    const std::filesystem::path& path);
ExperimentManifest read_manifest(const std::filesystem::path& path);

/// dump(2) with a trailing newline; nlohmann objects iterate in key order,
/// which makes this byte-stable.
std::string canonical_json(const nlohmann::json& j);

/// Write-to-temp-then-rename so readers never observe a half-written file.
void atomic_write_text(const std::filesystem::path& path,
                       const std::string& text);

}  // namespace uadrs::data
