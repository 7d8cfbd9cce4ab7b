#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "almgren/almgren.hpp"

namespace {

enum Exit { ok = 0, check_failed = 1, usage = 2, module_error = 3 };

int exit_code(const almgren::Error& e) {
  switch (e.kind()) {
    case almgren::ErrorKind::parse_error:
    case almgren::ErrorKind::validation_error:
    case almgren::ErrorKind::usage_error: return usage;
    default: return module_error;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace almgren;
  CLI::App app{"Frequency-function analysis of singular electromagnetic Schroedinger solutions"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  double tol_scale = 1.0;
  std::uint64_t seed = 42;
  app.add_option("--config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory for reports and traces");
  app.add_option("--tol-scale", tol_scale, "multiplier applied to every check tolerance")
      ->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "seed for randomized sweeps (default 42)");

  auto* spectrum = app.add_subcommand("spectrum", "angular eigenvalues and eigenspace blocks");
  auto* solve = app.add_subcommand("solve", "modal field solve; writes modal.json");
  auto* frequency = app.add_subcommand("frequency", "frequency trace (CSV) and fitted limit");
  auto* asymptotics = app.add_subcommand("asymptotics", "coefficients, blow-up profiles and regularity");
  auto* kelvin = app.add_subcommand("kelvin", "Kelvin-image scenario and conjugacy checks");
  auto* verify = app.add_subcommand("verify", "inequality sweeps and identity residuals");
  auto* run = app.add_subcommand("run", "full pipeline");
  std::string check_list;
  verify->add_option("--check", check_list, "comma-separated checks")->required();
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const Scenario sc = parse_scenario(config);
    RunOptions opt;
    opt.out_dir = out_dir;
    opt.tol_scale = tol_scale;
    if (seed_opt->count() > 0) opt.seed = seed;

    RunReport report;
    if (*run) {
      if (opt.out_dir.empty()) opt.out_dir = ".";
      report = run_scenario(sc, opt);
    } else if (*verify) {
      report = verify_suite(sc, parse_check_list(check_list), opt);
    } else {
      Stages st;
      if (*solve) {
        st.field = true;
        st.modal_file = true;
      } else if (*frequency) {
        st.field = st.frequency = st.trace_file = true;
      } else if (*asymptotics) {
        st.field = st.asymptotics = true;
      } else if (*kelvin) {
        st.field = st.kelvin = st.kelvin_image = true;
      } else if (!*spectrum) {
        throw Error(ErrorKind::usage_error, "no subcommand");
      }
      report = run_stages(sc, st, opt);
    }
    std::cout << report.json.dump(2) << '\n';
    for (const auto& f : report.files) std::cerr << "wrote " << f << '\n';
    return report.passed ? ok : check_failed;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return module_error;
  }
}
