#pragma once

// Per-invocation record of what a command ran with and what it produced.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsgkd/io.hpp"

namespace dsgkd {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  std::string timestamp;  // UTC, ISO 8601
  std::string status = "running";  // running | complete
  KeyValues config;                // fully resolved
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256

  // "key = value" lines with config.*, input.* and output.* prefixes.
  std::string to_text() const;
  static RunManifest parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);

  // Keys whose values differ in command, config or inputs.
  std::vector<std::string> mismatches(const RunManifest& other) const;
};

std::string utc_timestamp();

}  // namespace dsgkd
