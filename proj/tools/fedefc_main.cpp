#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedefc/harness.hpp"

namespace fs = std::filesystem;
using namespace fedefc;

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with prestopping and forward loss correction"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment and write per-round metrics");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_path;
  run->add_option("--config", config_path, "Experiment config (key = value)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--workers", workers, "Client-update threads (results do not depend on this)");
  run->add_option("--out", out_path, "Metrics CSV path (default: print to stdout)");

  auto* report = app.add_subcommand("report", "Summarize final test accuracy per method");
  std::vector<std::string> inputs;
  std::optional<std::size_t> trials;
  std::string report_out;
  report->add_option("--inputs", inputs, "Metrics CSV files")->required();
  report->add_option("--trials", trials, "Require this many runs per method");
  report->add_option("--out", report_out, "Also write the summary as CSV");

  auto* diag = app.add_subcommand("diag-noise", "Print the true transition matrix and realized noise");
  std::string diag_config;
  diag->add_option("--config", diag_config, "Experiment config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = harness::parse_config(config_path);
      if (seed) cfg.seed = *seed;
      if (workers) {
        if (*workers == 0) throw std::invalid_argument("--workers must be positive");
        cfg.workers = *workers;
      }
      const auto result = harness::run_experiment(
          cfg, out_path.empty() ? std::nullopt : std::optional<fs::path>(out_path));
      if (out_path.empty()) {
        harness::write_csv(result.table, std::cout);
      } else {
        const auto& s = result.table.summary;
        std::cerr << s.method << " seed " << s.seed << ": final test acc " << s.final_test_acc
                  << ", prestop round "
                  << (s.prestop_round ? std::to_string(*s.prestop_round) : std::string("-")) << '\n';
      }
    } else if (*report) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      const auto rows = harness::compare_report(paths, trials);
      std::cout << harness::report_text(rows);
      if (!report_out.empty()) {
        std::ofstream out(report_out);
        if (!out) throw std::runtime_error("cannot write " + report_out);
        out << harness::report_csv(rows);
      }
    } else if (*diag) {
      std::cout << harness::noise_diagnostic(harness::parse_config(diag_config));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
