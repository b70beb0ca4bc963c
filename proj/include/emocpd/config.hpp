#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace emocpd {

// Flat "key = value" text, '#' comments. Used for the model / training
// config files and for the config block inside checkpoints.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues parse_key_values_text(const std::string& text);

// Full-precision double formatting so configs round-trip exactly.
std::string format_double(double v);

int64_t get_int(const KeyValues& kv, const std::string& key, int64_t fallback);
double get_double(const KeyValues& kv, const std::string& key, double fallback);
uint64_t get_u64(const KeyValues& kv, const std::string& key, uint64_t fallback);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

}  // namespace emocpd
