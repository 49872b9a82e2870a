#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qwave/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qwave: blowup experiments for the 2-D quasilinear wave equation"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(qwave::kVersion));

  std::string config_path, out_dir = "out", preset;
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (owned by this invocation)");
  app.add_option("--preset", preset, "data preset, same as --set data.preset=NAME");
  app.add_option("--set", overrides, "override one key, key=value (repeatable)");
  app.add_flag("--quiet", quiet, "no progress notes on stderr");
  app.add_flag_function(
         "--list-keys",
         [](std::int64_t) {
           const qwave::ExperimentConfig defaults;
           for (const auto& [k, e] : defaults.entries())
             std::cout << k << " = " << e.value << "  # " << e.help << "\n";
           throw CLI::Success();
         },
         "print every config key with its default and exit")
      ->trigger_on_parse();

  const char* names[][2] = {{"profile", "directional profile and decay fits"},
                            {"predict", "lifespan prediction tau0 and blowup point"},
                            {"simulate", "one nonlinear run until blowup"},
                            {"scaling", "lifespan scaling study over an epsilon list"},
                            {"residual", "residual norm scaling of the approximate solution"},
                            {"geometry", "blowup chart and condition H"}};
  for (const auto& [n, help] : names) app.add_subcommand(n, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? qwave::cmd::kSuccess : qwave::cmd::kConfigOrDiagnostic;
  }

  qwave::cmd::Context ctx;
  ctx.out_dir = out_dir;
  ctx.quiet = quiet;
  try {
    if (!config_path.empty()) ctx.config.load(config_path);
    if (!preset.empty()) ctx.config.set("data.preset", preset, "--preset");
    for (const auto& kv : overrides) ctx.config.set_assignment(kv);
  } catch (const qwave::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return qwave::cmd::kConfigOrDiagnostic;
  }
  return qwave::cmd::run(app.get_subcommands().front()->get_name(), ctx);
}
