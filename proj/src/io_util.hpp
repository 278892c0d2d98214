#pragma once

// Small helpers shared by the file readers and writers.

#include "treecat/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <span>
#include <string_view>
#include <vector>

namespace treecat::detail {

std::ifstream open_input(const std::filesystem::path& path, bool binary = false);
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Parses a full-field double; throws ParseError naming `where`.
double parse_double(std::string_view text, const std::string& where);

/// Splits one CSV record, honoring double-quoted fields.
std::vector<std::string> split_csv(std::string_view line, const std::string& where);
std::string quote_csv(std::string_view field);

std::string trim(std::string_view s);

/// Reads a JSON Lines file; blank lines are skipped. Each element is paired
/// with its 1-based line number.
std::vector<std::pair<std::size_t, nlohmann::json>> read_json_lines(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

std::string location(const std::filesystem::path& path, std::size_t line);

/// Typed field access with provenance in the error message.
template <typename T>
T json_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(Errc::ParseError, where + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, where + ": field '" + key + "': " + e.what());
  }
}

inline std::uint32_t swap_bytes(std::uint32_t v) { return __builtin_bswap32(v); }
inline std::uint64_t swap_bytes(std::uint64_t v) { return __builtin_bswap64(v); }

/// Raw little-endian IEEE values (float or double) to and from doubles.
template <typename T>
void write_le(std::ostream& out, std::span<const double> values) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (double v : values) {
    Bits bits = std::bit_cast<Bits>(static_cast<T>(v));
    if constexpr (std::endian::native == std::endian::big) bits = swap_bytes(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

template <typename T>
std::vector<double> read_le(std::istream& in, std::size_t count, const std::string& where) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<Bits> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(Bits)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(Bits)) {
    throw Error(Errc::ParseError, where + ": payload shorter than " + std::to_string(count) + " values");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Bits bits = raw[i];
    if constexpr (std::endian::native == std::endian::big) bits = swap_bytes(bits);
    out[i] = static_cast<double>(std::bit_cast<T>(bits));
  }
  return out;
}

}  // namespace treecat::detail
