#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ssnmt {

using Words = std::vector<std::string>;

// Throws IoError when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

// Splits on ASCII whitespace; never yields empty tokens.
Words split_words(std::string_view line);
std::string join_words(const Words& words, std::string_view sep = " ");

}  // namespace ssnmt
