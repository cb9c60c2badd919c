#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace hml {

// ---------------------------------------------------------------------------
// string helpers
// ---------------------------------------------------------------------------

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
bool starts_with(const std::string& s, const std::string& prefix);

// Locale-independent numeric parsing/formatting (std::to_chars/from_chars).
double parse_double(const std::string& s, bool* ok = nullptr);
long parse_long(const std::string& s, bool* ok = nullptr);
std::string format_double(double v);             // shortest round-trip form
std::string format_fixed(double v, int digits);  // fixed precision

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path);
// Writes to a temp file in the same directory, then renames over the target.
void write_file_atomic(const std::string& path, const std::string& content);

// ---------------------------------------------------------------------------
// parallel_for
// ---------------------------------------------------------------------------

// Runs fn(i) for i in [0, count). threads <= 0 means hardware concurrency.
// Work items must be independent; output slots are indexed by i, so results
// never depend on the number of worker threads.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

// crc32 (IEEE), used by the bundle format to detect corruption.
std::uint32_t crc32(const void* data, std::size_t size);

} // namespace hml
