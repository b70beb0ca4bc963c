#pragma once

// Little-endian primitives shared by the EMOG and EMOC containers.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "emocpd/errors.hpp"

namespace emocpd::binio {

inline void put_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

inline void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool get_bytes(std::istream& in, char* dst, size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  return static_cast<size_t>(in.gcount()) == n;
}

inline uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!get_bytes(in, reinterpret_cast<char*>(b), 2)) throw FormatError("truncated file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!get_bytes(in, reinterpret_cast<char*>(b), 4)) throw FormatError("truncated file");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!get_bytes(in, reinterpret_cast<char*>(b), 8)) throw FormatError("truncated file");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float get_f32(std::istream& in) {
  uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& in) {
  uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string get_string(std::istream& in, uint32_t max_len = 1u << 20) {
  uint32_t len = get_u32(in);
  if (len > max_len) throw FormatError("string length " + std::to_string(len) + " implausible");
  std::string s(len, '\0');
  if (len && !get_bytes(in, s.data(), len)) throw FormatError("truncated file");
  return s;
}

}  // namespace emocpd::binio
