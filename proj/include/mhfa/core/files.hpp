#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mhfa {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Reads a JSON Lines file, skipping blank lines. Throws ParseError naming the line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace mhfa
