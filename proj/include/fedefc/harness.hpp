#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedefc/fed.hpp"
#include "fedefc/nn.hpp"

namespace fedefc::harness {

enum class DatasetKind { synthetic, mnist_idx };
enum class Method { fedavg, fedefc, forward_percentile, confident_pruning, fedavg_clean };

std::string to_string(Method method);
Method method_from_string(const std::string& text);

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::synthetic;
  // synthetic mixture
  std::size_t num_classes = 3;
  std::size_t dim = 10;
  std::size_t per_class = 500;
  std::size_t test_per_class = 500;
  double separation = 3.0;
  // IDX files
  std::string mnist_train_images;
  std::string mnist_train_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;
  std::size_t mnist_train_limit = 0;
  std::size_t mnist_test_limit = 0;

  std::vector<std::size_t> hidden_dims{32};
  std::size_t num_clients = 20;
  double client_fraction = 0.25;
  int rounds = 60;
  int local_epochs = 2;
  std::size_t batch_size = 16;
  double learning_rate = 0.005;
  double momentum = 0.5;
  double alpha_dir = 10.0;
  double p = 0.5;
  double rho = 0.2;
  double zeta = 0.8;
  Method method = Method::fedefc;
  int gamma_thr = 3;
  int warmup_rounds = 10;
  bool weighted_matrix = false;
  double percentile = 97.0;
  double epsilon_clip = 1e-8;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

/// Parse failure with the 1-based line number (0 when not tied to a line)
/// and the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, std::string key, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

/// Flat `key = value` format, one key per line, `#` starts a comment.
/// Unknown and duplicate keys are rejected; `method` is required.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

struct Summary {
  std::string method;
  std::uint64_t seed = 0;
  int rounds = 0;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  std::optional<int> prestop_round;
  std::optional<double> prestop_a_t;
  std::optional<double> mean_cos_sim_phase2;
  std::size_t singular_estimates = 0;

  bool operator==(const Summary&) const = default;
};

struct MetricsTable {
  std::vector<fed::RoundRecord> records;
  Summary summary;

  bool operator==(const MetricsTable&) const = default;
};

inline constexpr const char* kCsvHeader = "round,phase,A_t,tau_p,test_acc,cos_sim";

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_csv(const MetricsTable& table, std::ostream& out);
MetricsTable read_csv(std::istream& in);
MetricsTable read_csv(const std::filesystem::path& path);

struct ExperimentRun {
  MetricsTable table;
  nn::ModelParams final_params;
};

/// Data -> true transition -> label noise (skipped for fedavg_clean) ->
/// partition -> federation. Writes the CSV to `csv_out` when given.
ExperimentRun run_experiment(const ExperimentConfig& config,
                             const std::optional<std::filesystem::path>& csv_out = std::nullopt);

struct ReportRow {
  std::string method;
  std::size_t trials = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

/// Groups runs by method (first-appearance order) and reports mean and
/// population std of the final test accuracy. When `trials_per_method` is set
/// every method must have exactly that many runs.
std::vector<ReportRow> compare_report(const std::vector<MetricsTable>& runs,
                                      std::optional<std::size_t> trials_per_method = std::nullopt);
std::vector<ReportRow> compare_report(const std::vector<std::filesystem::path>& csv_paths,
                                      std::optional<std::size_t> trials_per_method = std::nullopt);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_text(const std::vector<ReportRow>& rows);

/// Human-readable dump of the true transition matrix and the realized noise
/// statistics for the config's training set.
std::string noise_diagnostic(const ExperimentConfig& config);

}  // namespace fedefc::harness
