#pragma once

// Small file and text helpers shared by the file formats.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace dsgkd {

using KeyValues = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment; blank lines ignored. Later keys
// override earlier ones. Throws ParseError with the line number otherwise.
KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

// Shortest text that parses back to the identical double.
std::string format_exact(double v);
double parse_double(const std::string& s, const std::string& key);
long long parse_int(const std::string& s, const std::string& key);
bool parse_bool(const std::string& s, const std::string& key);

std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace dsgkd
