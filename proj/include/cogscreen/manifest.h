#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace cogscreen {

struct ArtifactHash {
  std::string path;
  std::string sha256;
};

// Provenance record written next to every CLI output.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> configs;  // role -> path
  std::map<std::string, std::uint64_t> seeds;
  std::vector<ArtifactHash> inputs;
  std::vector<ArtifactHash> outputs;
  nlohmann::json summary = nlohmann::json::object();
  std::string started_at;
  std::string finished_at;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void add_config(const std::string& role, const std::filesystem::path& path);

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  // Re-hashes every input; returns the paths whose content changed or vanished.
  std::vector<std::string> stale_inputs() const;
};

std::string utc_timestamp();

// `<artifact>.manifest.json`, written atomically.
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);
void write_manifest(RunManifest manifest, const std::filesystem::path& artifact);

}  // namespace cogscreen
