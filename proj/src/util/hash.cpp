#include "dispa/util/hash.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "dispa/util/error.hpp"

namespace dispa::hash {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return to_hex(hash_bytes(content));
}

}  // namespace dispa::hash
