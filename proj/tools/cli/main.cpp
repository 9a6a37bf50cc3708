#include <iostream>

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "common.hpp"
#include "dispa/util/error.hpp"

namespace dispa::cli {

bool Globals::model_options_given() const {
  for (const auto* o : model_options) {
    if (o->count() > 0) return true;
  }
  return false;
}

void begin(const Context& ctx, const std::string& command) {
  spdlog::set_level(spdlog::level::from_str(ctx.globals.log_level));
  spdlog::debug("command {} with {} threads, seed {}", command, ctx.globals.threads, ctx.globals.seed);
}

train::RunConfig run_config(const Context& ctx) {
  auto rc = ctx.globals.run;
  rc.seed = ctx.globals.seed;
  rc.threads = ctx.globals.threads;
  return rc;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace {

void add_globals(CLI::App& app, Globals& g) {
  auto& m = g.run.model;
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Base seed; initialisation uses seed+1, batch order seed+2");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
  app.add_option("--lr", g.run.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--batch-size", g.run.batch_size, "Pairs per mini-batch")->capture_default_str();
  app.add_option("--epochs", g.run.epochs, "Maximum epochs")->capture_default_str();
  app.add_option("--patience", g.run.patience, "Epochs without validation improvement before stopping")
      ->capture_default_str();
  g.model_options = {
      app.add_option("--d-a", m.d_a, "Encoder width")->capture_default_str(),
      app.add_option("--d", m.d, "Attention width (0: same as d-a)")->capture_default_str(),
      app.add_option("--heads", m.heads, "Attention heads per view")->capture_default_str(),
      app.add_option("--layers", m.layers, "Attention layers (only 1 supported)")->capture_default_str(),
      app.add_option("--head-hidden", m.head_hidden, "Prediction head hidden width (0: attention width)")
          ->capture_default_str(),
      app.add_option("--lambda-init", m.lambda_init, "Differential attention lambda offset")->capture_default_str(),
      app.add_option("--lambda-override", m.lambda_override, "Fix lambda to this value"),
      app.add_flag("--layer-norm", m.layer_norm, "Layer norm on the pooled vector"),
      app.add_option("--dropout", m.dropout, "Accepted only as 0")->capture_default_str(),
  };
}

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace
}  // namespace dispa::cli

int main(int argc, char** argv) {
  using namespace dispa::cli;
  CLI::App app{"Pathway-substructure drug response modelling", "dispa"};
  app.set_version_flag("--version", std::string(DISPA_VERSION));
  app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");
  app.allow_config_extras(false);
  app.fallthrough();
  app.require_subcommand(1);
  Context ctx;
  ctx.app = &app;
  ctx.argv.assign(argv, argv + argc);
  add_globals(app, ctx.globals);
  add_data_commands(app, ctx);
  add_model_commands(app, ctx);
  add_analysis_commands(app, ctx);
  add_selftest_command(app, ctx);

  auto logger = spdlog::stderr_color_mt("dispa");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const dispa::DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const dispa::ShapeError& e) {
    return fail("config", e.what(), 4);
  } catch (const dispa::Error& e) {
    return fail("dispa", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 70);
  }
  return 0;
}
