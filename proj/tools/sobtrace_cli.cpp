// sobtrace_cli: sharp trace constants, expansion checks, Steklov solves and
// hole optimization, each writing one CSV with a '#' config header.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sobtrace/cli.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  long seed = -1;
};

std::filesystem::path hole_path(const std::filesystem::path& out, std::size_t k) {
  std::filesystem::path p = out;
  p.replace_filename(out.stem().string() + "_hole_" + std::to_string(k) + ".csv");
  return p;
}

int run(const std::string& command, const Flags& flags) {
  using namespace sobtrace;
  cli::ConfigMap cfg;
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) throw ConfigError("cannot open config file " + flags.config);
    cfg = cli::parse_config(in);
  }
  for (const std::string& s : flags.sets) cli::apply_override(cfg, s);
  if (flags.seed >= 0) cfg["seed"] = std::to_string(flags.seed);
  const cli::RunConfig run_cfg = cli::resolve_config(command, cfg);

  std::ostringstream buf;
  std::vector<std::pair<std::filesystem::path, std::string>> holes;
  cli::HoleSink sink;
  if (!flags.out.empty()) {
    sink = [&](std::size_t k, const ShapeRunRecord& rec) {
      std::ostringstream h;
      cli::write_header(h, run_cfg);
      write_hole_csv(h, rec);
      holes.emplace_back(hole_path(flags.out, k), h.str());
    };
  }
  const int code = cli::run_command(run_cfg, buf, sink);
  if (flags.out.empty()) {
    std::cout << buf.str();
  } else {
    std::ofstream out(flags.out, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + flags.out);
    out << buf.str();
    for (const auto& [path, text] : holes) {
      std::ofstream h(path, std::ios::binary | std::ios::trunc);
      if (!h) throw ConfigError("cannot write " + path.string());
      h << text;
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{sobtrace::cli::kVersion};
  app.set_version_flag("--version", std::string(sobtrace::cli::kVersion));
  app.require_subcommand(1);
  Flags flags;
  const char* help[] = {
      "Closed-form K_p^{-1} table with the norm-ratio self-check",
      "Quadrature of the extremal norms against their closed forms",
      "Expansion coefficients, regime labels and good-point verdict",
      "Model-patch quotient over an epsilon grid with a fitted expansion",
      "P1 finite-element minimizer of the trace Rayleigh quotient",
      "Optimal holes of prescribed measure over an alpha grid",
  };
  std::string chosen;
  const auto& names = sobtrace::cli::command_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", flags.config, "key=value config file");
    sub->add_option("--out", flags.out, "output CSV (default: stdout)");
    sub->add_option("--set", flags.sets, "override key=value (repeatable)");
    sub->add_option("--seed", flags.seed, "random seed")->check(CLI::NonNegativeNumber);
    sub->callback([&chosen, name = names[i]] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sobtrace::cli::kUsageError;
  }
  try {
    return run(chosen, flags);
  } catch (const sobtrace::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sobtrace::cli::kUsageError;
  } catch (const sobtrace::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sobtrace::cli::kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sobtrace::cli::kRuntimeError;
  }
}
