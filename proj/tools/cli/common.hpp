#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dispa/model/dispa_model.hpp"
#include "dispa/train/trainer.hpp"

namespace dispa::cli {

namespace fs = std::filesystem;

// Options shared by every subcommand; a --config file may set any of them.
struct Globals {
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::string log_level = "info";
  train::RunConfig run;
  std::vector<CLI::Option*> model_options;  // used by the config-hash guard

  bool model_options_given() const;
};

struct Context {
  CLI::App* app = nullptr;
  Globals globals;
  std::vector<std::string> argv;
};

// Applies the log level; every command calls it first.
void begin(const Context& ctx, const std::string& command);

// The project-wide run configuration with the global seed and threads applied.
train::RunConfig run_config(const Context& ctx);

struct ManifestInput {
  std::string role;
  fs::path path;
};

// Writes <dir>/manifest.json: command, argv, config snapshot, input and
// output digests, seeds and tool version. Outputs are every regular file
// under `dir` except the manifest itself.
void write_manifest(const fs::path& dir, const Context& ctx, const std::string& command,
                    const std::vector<ManifestInput>& inputs, const std::vector<std::uint64_t>& seeds);

// Per-file digests of a directory tree, sorted by relative path.
std::vector<std::pair<std::string, std::string>> tree_digests(const fs::path& dir, const fs::path& skip = {});

void add_data_commands(CLI::App& app, Context& ctx);
void add_model_commands(CLI::App& app, Context& ctx);
void add_analysis_commands(CLI::App& app, Context& ctx);
void add_selftest_command(CLI::App& app, Context& ctx);

std::vector<std::string> split_list(const std::string& s);

}  // namespace dispa::cli
