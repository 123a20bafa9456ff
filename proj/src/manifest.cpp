#include "dsgkd/manifest.hpp"

#include <chrono>
#include <ctime>

#include "dsgkd/errors.hpp"

namespace dsgkd {

std::string RunManifest::to_text() const {
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  line("command", command);
  line("tool_version", tool_version);
  line("timestamp", timestamp);
  line("status", status);
  for (const auto& [k, v] : config) line("config." + k, v);
  for (const auto& [k, v] : inputs) line("input." + k, v);
  for (const auto& [k, v] : outputs) line("output." + k, v);
  return out;
}

RunManifest RunManifest::parse(std::string_view text) {
  RunManifest m;
  m.tool_version.clear();
  m.status.clear();
  for (const auto& [k, v] : parse_key_values(text)) {
    if (k == "command") m.command = v;
    else if (k == "tool_version") m.tool_version = v;
    else if (k == "timestamp") m.timestamp = v;
    else if (k == "status") m.status = v;
    else if (k.starts_with("config.")) m.config[k.substr(7)] = v;
    else if (k.starts_with("input.")) m.inputs[k.substr(6)] = v;
    else if (k.starts_with("output.")) m.outputs[k.substr(7)] = v;
    else throw ParseError("unknown manifest key '" + k + "'");
  }
  if (m.command.empty()) throw ParseError("manifest has no command");
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_text());
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::vector<std::string> RunManifest::mismatches(const RunManifest& other) const {
  std::vector<std::string> out;
  if (command != other.command) out.push_back("command");
  auto diff = [&](const std::map<std::string, std::string>& a,
                  const std::map<std::string, std::string>& b, const std::string& prefix) {
    for (const auto& [k, v] : a) {
      auto it = b.find(k);
      if (it == b.end() || it->second != v) out.push_back(prefix + k);
    }
    for (const auto& [k, v] : b)
      if (!a.contains(k)) out.push_back(prefix + k);
  };
  diff(config, other.config, "config.");
  diff(inputs, other.inputs, "input.");
  return out;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace dsgkd
