#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

#include "emplace/config.hpp"
#include "emplace/error.hpp"
#include "emplace/pipeline.hpp"

namespace {

std::string quoted(std::string s) {
  for (auto& ch : s) {
    if (ch == '"') ch = '\'';
    if (ch == '\n') ch = ' ';
  }
  return "\"" + s + "\"";
}

int fail(const char* kind, int code, const std::string& msg) {
  std::cerr << "error kind=" << kind << " code=" << code << " msg=" << quoted(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace emplace;

  CLI::App app{"Self-supervised street-view change detection pipeline"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::string si, train_si, window, margin, data_dir, out_dir;
  std::vector<std::string> test_si;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  std::string kind;
  std::size_t heatmaps = 0;
  bool print_defaults = false;

  app.add_option("-c,--config", config_path, "INI configuration file");
  app.add_option("--set", sets, "Override a config key, e.g. --set train.lr=1e-3");
  app.add_option("--data-dir", data_dir, "Input data directory (paths.data_dir)");
  app.add_option("--out-dir", out_dir, "Artifact directory (paths.output_dir)");
  app.add_option("--seed", seed, "Root seed (general.seed)");
  app.add_option("--si", si, "Triplet setup for mine/train (train.si)");
  app.add_option("--train-si", train_si, "Model to evaluate, by training setup");
  app.add_option("--test-si", test_si, "Test setups for eval-order")->delimiter(',');
  app.add_option("--threshold", threshold, "Detector threshold; overrides calibration");
  app.add_option("--window", window, "Large-change window, WxH");
  auto* wrap = app.add_flag("--wrap,!--no-wrap", "Horizontal wrap for the detectors");
  app.add_option("--margin", margin, "Triplet margin: adaptive or fixed")->check(CLI::IsMember({"adaptive", "fixed"}));
  app.add_option("--kind", kind, "Detections to emit: large, small or both")->check(CLI::IsMember({"large", "small", "both"}));
  app.add_option("--heatmaps", heatmaps, "Export this many detection heatmaps as PNG");
  auto* no_cf = app.add_flag("--no-cut-flip", "Disable cut-and-flip augmentation");
  app.add_flag("--print-config", print_defaults, "Print every config key with its default and exit");

  std::string command;
  for (const auto& name : pipeline::commands()) {
    app.add_subcommand(name, "Run the " + name + " stage")->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", 2, e.what());
  }

  if (print_defaults) {
    std::cout << config::default_ini();
    return 0;
  }
  if (command.empty()) return fail("config", 2, "no command given; see --help");

  try {
    config::KeyValues kv;
    if (!config_path.empty()) kv = config::read_ini(config_path);
    if (const char* env = std::getenv("EMPLACE_DATA_DIR"); env && *env) kv["paths.data_dir"] = env;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (!data_dir.empty()) kv["paths.data_dir"] = data_dir;
    if (!out_dir.empty()) kv["paths.output_dir"] = out_dir;
    if (app.count("--seed")) kv["general.seed"] = std::to_string(seed);
    if (!si.empty()) kv["train.si"] = si;
    if (!train_si.empty()) kv["train.si"] = train_si;
    if (!window.empty()) kv["detect.window"] = window;
    if (wrap->count()) kv["detect.wrap"] = wrap->as<bool>() ? "true" : "false";
    if (!margin.empty()) kv["train.margin"] = margin;
    if (!kind.empty()) kv["detect.kind"] = kind;
    if (no_cf->count()) kv["train.cut_and_flip"] = "false";
    pipeline::CommandOptions opts;
    if (app.count("--threshold")) {
      std::ostringstream t;
      t.precision(17);
      t << threshold;
      kv["detect.threshold"] = t.str();
      opts.threshold_override = true;
    }
    opts.test_si = test_si;
    opts.heatmaps = heatmaps;

    const auto cfg = config::from_key_values(kv);
    pipeline::run_command(command, cfg, opts, std::clog);
    return 0;
  } catch (const Error& e) {
    return fail(e.kind_name(), e.exit_code(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", 1, e.what());
  }
}
