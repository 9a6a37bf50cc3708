#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "common.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"

namespace dispa::cli {

std::vector<std::pair<std::string, std::string>> tree_digests(const fs::path& dir, const fs::path& skip) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (!skip.empty() && e.path() == skip) continue;
    out.emplace_back(fs::relative(e.path(), dir).generic_string(), hash::file_digest(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_manifest(const fs::path& dir, const Context& ctx, const std::string& command,
                    const std::vector<ManifestInput>& inputs, const std::vector<std::uint64_t>& seeds) {
  const auto path = dir / "manifest.json";
  nlohmann::ordered_json j;
  j["tool"] = "dispa";
  j["version"] = DISPA_VERSION;
  j["command"] = command;
  j["argv"] = std::vector<std::string>(ctx.argv.begin() + 1, ctx.argv.end());
  j["config"] = ctx.app->config_to_str(true, false);
  nlohmann::ordered_json in = nlohmann::ordered_json::array();
  for (const auto& i : inputs) {
    nlohmann::ordered_json e;
    e["role"] = i.role;
    e["path"] = i.path.generic_string();
    if (fs::is_directory(i.path)) {
      nlohmann::ordered_json files;
      for (const auto& [rel, d] : tree_digests(i.path, i.path / "manifest.json")) files[rel] = d;
      e["files"] = std::move(files);
    } else {
      e["digest"] = hash::file_digest(i.path);
    }
    in.push_back(std::move(e));
  }
  j["inputs"] = std::move(in);
  j["seeds"] = seeds;
  nlohmann::ordered_json out;
  if (fs::exists(path)) fs::remove(path);
  for (const auto& [rel, d] : tree_digests(dir)) out[rel] = d;
  j["outputs"] = std::move(out);
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace dispa::cli
