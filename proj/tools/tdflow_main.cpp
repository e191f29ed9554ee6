#include "tdflow/commands.hpp"
#include "tdflow/report.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generative successor-measure models trained by temporal-difference flow matching and diffusion."};
  app.set_version_flag("--version", tdflow::code_version());
  app.require_subcommand(1);

  tdflow::CommandOptions options;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int steps = 0;
  std::string checkpoint;
  std::string input;

  for (const auto& name : tdflow::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Overrides the config seed");
    sub->add_option("--out", out, "Output root; runs are written to <out>/<run-id>/");
    if (name != "train" && name != "oracle" && name != "plot") {
      sub->add_option("--checkpoint", checkpoint, "Overrides the config checkpoint");
    }
    if (name == "train") sub->add_option("--steps", steps, "Overrides train.steps")->check(CLI::NonNegativeNumber);
    if (name == "plot") sub->add_option("--input", input, "Overrides plot.csv")->check(CLI::ExistingFile);
    sub->callback([&, name, sub] {
      options.command = name;
      options.config = config;
      if (sub->count("--seed") > 0) options.seed = seed;
      if (sub->count("--out") > 0) options.out = out;
      if (name == "train" && sub->count("--steps") > 0) options.steps = steps;
      if (name == "plot" && sub->count("--input") > 0) options.input = input;
      if (sub->get_option_no_throw("--checkpoint") != nullptr && sub->count("--checkpoint") > 0) {
        options.checkpoint = checkpoint;
      }
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tdflow::kExitOk : tdflow::kExitConfig;
  }

  try {
    const auto dir = tdflow::run_command(options);
    std::cout << dir.string() << '\n';
    return tdflow::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "tdflow " << options.command << ": " << e.what() << '\n';
    return tdflow::exit_code_for(e);
  }
}
