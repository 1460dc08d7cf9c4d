#pragma once

#include "esbound/core_model.hpp"

#include <json.hpp>

#include <string>

namespace esb {

struct LoadedConfig {
  std::string path;
  nlohmann::json raw;
  PowerSystem system;
  NetloadModel netload;
  std::string sidecar_bytes;  // concatenated CSV contents, for hashing
};

// Reads the JSON document and its CSV sidecars (paths relative to the JSON file).
// Throws IoError for unreadable or malformed files.
LoadedConfig load_config(const std::string& path);

PowerSystem parse_system(const nlohmann::json& doc);

// FNV-1a over the canonical JSON dump plus sidecar contents.
std::string config_hash(const LoadedConfig& cfg);

}  // namespace esb
