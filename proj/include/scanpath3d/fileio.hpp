#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace scanpath3d {

/// Runs `write` against a sibling temp path, then renames it over `path`.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(const std::filesystem::path&)>& write);

void write_text_atomically(const std::filesystem::path& path, std::string_view text);

/// Whole-file read; throws ParseError when the file cannot be opened.
std::string read_text(const std::filesystem::path& path);

}  // namespace scanpath3d
