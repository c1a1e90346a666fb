#pragma once

#include <filesystem>
#include <string>

namespace hiersteer {

/// Whole-file text helpers; failures raise IoError naming the path.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

}  // namespace hiersteer
