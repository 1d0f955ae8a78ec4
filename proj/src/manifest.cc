#include "cogscreen/manifest.h"

#include <chrono>
#include <ctime>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs.push_back({path.string(), sha256_file(path)}); }

void RunManifest::add_output(const std::filesystem::path& path) { outputs.push_back({path.string(), sha256_file(path)}); }

void RunManifest::add_config(const std::string& role, const std::filesystem::path& path) {
  configs[role] = path.string();
  add_input(path);
}

json RunManifest::to_json() const {
  auto hashes = [](const std::vector<ArtifactHash>& v) {
    json a = json::array();
    for (const auto& h : v) a.push_back({{"path", h.path}, {"sha256", h.sha256}});
    return a;
  };
  return {{"command", command}, {"argv", argv},     {"configs", configs},       {"seeds", seeds},
          {"inputs", hashes(inputs)}, {"outputs", hashes(outputs)}, {"summary", summary},
          {"started_at", started_at}, {"finished_at", finished_at}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.configs = j.at("configs").get<std::map<std::string, std::string>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    for (const auto& h : j.at("inputs")) m.inputs.push_back({h.at("path"), h.at("sha256")});
    for (const auto& h : j.at("outputs")) m.outputs.push_back({h.at("path"), h.at("sha256")});
    m.summary = j.value("summary", json::object());
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::vector<std::string> RunManifest::stale_inputs() const {
  std::vector<std::string> stale;
  for (const auto& h : inputs) {
    if (!std::filesystem::exists(h.path) || sha256_file(h.path) != h.sha256) stale.push_back(h.path);
  }
  return stale;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  return artifact.string() + ".manifest.json";
}

void write_manifest(RunManifest manifest, const std::filesystem::path& artifact) {
  if (manifest.finished_at.empty()) manifest.finished_at = utc_timestamp();
  atomic_write(manifest_path_for(artifact), manifest.to_json().dump(2) + "\n");
}

}  // namespace cogscreen
