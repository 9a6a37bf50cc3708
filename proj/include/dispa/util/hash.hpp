#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dispa::hash {

// Seed for every portable hash in the project. Changing it invalidates
// stored embeddings, fingerprints, and config hashes.
inline constexpr std::uint64_t kSeed = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over bytes followed by the splitmix64 finalizer, seeded.
constexpr std::uint64_t hash_bytes(std::string_view s, std::uint64_t seed = kSeed) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(h);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

std::string to_hex(std::uint64_t v);

// Hex digest of a file's content (64-bit, non-cryptographic).
std::string file_digest(const std::filesystem::path& path);

}  // namespace dispa::hash
