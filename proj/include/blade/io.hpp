#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace blade::io {

// Writes to a sibling temp file, then renames over the target.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Appends one line (a trailing newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

std::string csv_escape(std::string_view field);

std::string trim(std::string_view text);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

std::string utc_timestamp();

void write_u32_le(std::ostream& out, std::uint32_t value);
void write_u64_le(std::ostream& out, std::uint64_t value);
void write_f64_le(std::ostream& out, double value);
std::uint32_t read_u32_le(std::istream& in);
std::uint64_t read_u64_le(std::istream& in);
double read_f64_le(std::istream& in);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace blade::io
