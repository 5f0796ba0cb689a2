#include "fedefc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fedefc/datagen.hpp"
#include "fedefc/label_noise.hpp"
#include "fedefc/rng.hpp"

namespace fedefc::harness {

std::string to_string(Method method) {
  switch (method) {
    case Method::fedavg: return "fedavg";
    case Method::fedefc: return "fedefc";
    case Method::forward_percentile: return "forward_percentile";
    case Method::confident_pruning: return "confident_pruning";
    case Method::fedavg_clean: return "fedavg_clean";
  }
  return "?";
}

Method method_from_string(const std::string& text) {
  for (auto m : {Method::fedavg, Method::fedefc, Method::forward_percentile,
                 Method::confident_pruning, Method::fedavg_clean}) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown method '" + text + "'");
}

ConfigError::ConfigError(std::size_t line, std::string key, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? "" : "'" + key + "': ") + message),
      line_(line),
      key_(std::move(key)) {}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& value, std::size_t line, const std::string& key,
               const char* type_name) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(line, key, std::string("expected ") + type_name + ", got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& v, std::size_t line, const std::string& key) {
  const double d = parse_number<double>(v, line, key, "a real number");
  if (!std::isfinite(d)) throw ConfigError(line, key, "value must be finite");
  return d;
}

std::size_t parse_count(const std::string& v, std::size_t line, const std::string& key) {
  return parse_number<std::size_t>(v, line, key, "a nonnegative integer");
}

int parse_int(const std::string& v, std::size_t line, const std::string& key) {
  return parse_number<int>(v, line, key, "an integer");
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(line, key, "expected true/false, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, std::size_t, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset",
       [](ExperimentConfig& c, const std::string& v, std::size_t l, const std::string& k) {
         if (v == "synthetic") c.dataset = DatasetKind::synthetic;
         else if (v == "mnist_idx") c.dataset = DatasetKind::mnist_idx;
         else throw ConfigError(l, k, "expected synthetic or mnist_idx, got '" + v + "'");
       }},
      {"num_classes", [](auto& c, auto& v, auto l, auto& k) { c.num_classes = parse_count(v, l, k); }},
      {"dim", [](auto& c, auto& v, auto l, auto& k) { c.dim = parse_count(v, l, k); }},
      {"per_class", [](auto& c, auto& v, auto l, auto& k) { c.per_class = parse_count(v, l, k); }},
      {"test_per_class", [](auto& c, auto& v, auto l, auto& k) { c.test_per_class = parse_count(v, l, k); }},
      {"separation", [](auto& c, auto& v, auto l, auto& k) { c.separation = parse_real(v, l, k); }},
      {"mnist_train_images", [](auto& c, auto& v, auto, auto&) { c.mnist_train_images = v; }},
      {"mnist_train_labels", [](auto& c, auto& v, auto, auto&) { c.mnist_train_labels = v; }},
      {"mnist_test_images", [](auto& c, auto& v, auto, auto&) { c.mnist_test_images = v; }},
      {"mnist_test_labels", [](auto& c, auto& v, auto, auto&) { c.mnist_test_labels = v; }},
      {"mnist_train_limit", [](auto& c, auto& v, auto l, auto& k) { c.mnist_train_limit = parse_count(v, l, k); }},
      {"mnist_test_limit", [](auto& c, auto& v, auto l, auto& k) { c.mnist_test_limit = parse_count(v, l, k); }},
      {"hidden_dims",
       [](ExperimentConfig& c, const std::string& v, std::size_t l, const std::string& k) {
         c.hidden_dims.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           const auto w = parse_count(trim(item), l, k);
           if (w == 0) throw ConfigError(l, k, "hidden layer widths must be positive");
           c.hidden_dims.push_back(w);
         }
       }},
      {"num_clients", [](auto& c, auto& v, auto l, auto& k) { c.num_clients = parse_count(v, l, k); }},
      {"client_fraction", [](auto& c, auto& v, auto l, auto& k) { c.client_fraction = parse_real(v, l, k); }},
      {"rounds", [](auto& c, auto& v, auto l, auto& k) { c.rounds = parse_int(v, l, k); }},
      {"local_epochs", [](auto& c, auto& v, auto l, auto& k) { c.local_epochs = parse_int(v, l, k); }},
      {"batch_size", [](auto& c, auto& v, auto l, auto& k) { c.batch_size = parse_count(v, l, k); }},
      {"learning_rate", [](auto& c, auto& v, auto l, auto& k) { c.learning_rate = parse_real(v, l, k); }},
      {"momentum", [](auto& c, auto& v, auto l, auto& k) { c.momentum = parse_real(v, l, k); }},
      {"alpha_dir", [](auto& c, auto& v, auto l, auto& k) { c.alpha_dir = parse_real(v, l, k); }},
      {"p", [](auto& c, auto& v, auto l, auto& k) { c.p = parse_real(v, l, k); }},
      {"rho", [](auto& c, auto& v, auto l, auto& k) { c.rho = parse_real(v, l, k); }},
      {"zeta", [](auto& c, auto& v, auto l, auto& k) { c.zeta = parse_real(v, l, k); }},
      {"method",
       [](ExperimentConfig& c, const std::string& v, std::size_t l, const std::string& k) {
         try {
           c.method = method_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(l, k, e.what());
         }
       }},
      {"gamma_thr", [](auto& c, auto& v, auto l, auto& k) { c.gamma_thr = parse_int(v, l, k); }},
      {"warmup_rounds", [](auto& c, auto& v, auto l, auto& k) { c.warmup_rounds = parse_int(v, l, k); }},
      {"weighted_matrix", [](auto& c, auto& v, auto l, auto& k) { c.weighted_matrix = parse_bool(v, l, k); }},
      {"percentile", [](auto& c, auto& v, auto l, auto& k) { c.percentile = parse_real(v, l, k); }},
      {"epsilon_clip", [](auto& c, auto& v, auto l, auto& k) { c.epsilon_clip = parse_real(v, l, k); }},
      {"workers", [](auto& c, auto& v, auto l, auto& k) { c.workers = parse_count(v, l, k); }},
      {"seed", [](auto& c, auto& v, auto l, auto& k) { c.seed = parse_number<std::uint64_t>(v, l, k, "a nonnegative integer"); }},
  };
  return table;
}

void validate(const ExperimentConfig& c, const std::map<std::string, std::size_t>& lines) {
  auto fail = [&](const std::string& key, const std::string& msg) {
    const auto it = lines.find(key);
    throw ConfigError(it == lines.end() ? 0 : it->second, key, msg);
  };
  if (c.dataset == DatasetKind::synthetic) {
    if (c.num_classes < 2) fail("num_classes", "must be >= 2");
    if (c.dim == 0) fail("dim", "must be positive");
    if (c.dim == 1 && c.num_classes > 2) fail("dim", "dim 1 supports only two classes");
    if (c.per_class == 0) fail("per_class", "must be positive");
    if (c.test_per_class == 0) fail("test_per_class", "must be positive");
    if (!(c.separation > 0.0)) fail("separation", "must be positive");
  } else {
    for (const char* key : {"mnist_train_images", "mnist_train_labels", "mnist_test_images",
                            "mnist_test_labels"}) {
      if (!lines.contains(key)) throw ConfigError(0, key, "required when dataset = mnist_idx");
    }
  }
  if (c.num_clients == 0) fail("num_clients", "must be positive");
  if (!(c.client_fraction > 0.0 && c.client_fraction <= 1.0)) fail("client_fraction", "must be in (0, 1]");
  if (c.rounds < 0) fail("rounds", "must be >= 0");
  if (c.local_epochs < 0) fail("local_epochs", "must be >= 0");
  if (c.batch_size == 0) fail("batch_size", "must be positive");
  if (!(c.learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (!(c.alpha_dir > 0.0)) fail("alpha_dir", "must be positive");
  if (!(c.p > 0.0 && c.p <= 1.0)) fail("p", "must be in (0, 1]");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) fail("rho", "must be in [0, 1]");
  if (!(c.zeta >= 0.0 && c.zeta <= 1.0)) fail("zeta", "must be in [0, 1]");
  if (c.gamma_thr < 1) fail("gamma_thr", "must be positive");
  if (c.warmup_rounds < 0) fail("warmup_rounds", "must be >= 0");
  if (!(c.percentile > 0.0 && c.percentile <= 100.0)) fail("percentile", "must be in (0, 100]");
  if (!(c.epsilon_clip > 0.0 && c.epsilon_clip <= 1e-3)) fail("epsilon_clip", "must be in (0, 1e-3]");
  if (c.workers == 0) fail("workers", "must be positive");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "", "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "", "missing key before '='");
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(line_no, key, "unknown key");
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(line_no, key, "duplicate key (first set on line " +
                                          std::to_string(prev->second) + ")");
    }
    seen.emplace(key, line_no);
    it->second(cfg, value, line_no, key);
  }
  if (!seen.contains("method")) throw ConfigError(0, "method", "missing required key");
  validate(cfg, seen);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double read_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw SchemaError("malformed number in " + what + ": '" + s + "'");
  }
  return v;
}

template <typename T>
T read_integer(const std::string& s, const std::string& what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw SchemaError("malformed integer in " + what + ": '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_csv(const MetricsTable& table, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : table.records) {
    out << r.round << ',' << fed::to_string(r.phase) << ',' << fmt_real(r.a_t) << ',' << r.tau_p
        << ',' << fmt_real(r.test_accuracy) << ',' << (r.cos_sim ? fmt_real(*r.cos_sim) : "-")
        << '\n';
  }
  const Summary& s = table.summary;
  out << "# method=" << s.method << '\n';
  out << "# seed=" << s.seed << '\n';
  out << "# rounds=" << s.rounds << '\n';
  out << "# final_test_acc=" << fmt_real(s.final_test_acc) << '\n';
  out << "# best_test_acc=" << fmt_real(s.best_test_acc) << '\n';
  out << "# prestop_round=" << (s.prestop_round ? std::to_string(*s.prestop_round) : "-") << '\n';
  out << "# prestop_A_t=" << (s.prestop_a_t ? fmt_real(*s.prestop_a_t) : "-") << '\n';
  out << "# mean_cos_sim_phase2="
      << (s.mean_cos_sim_phase2 ? fmt_real(*s.mean_cos_sim_phase2) : "-") << '\n';
  out << "# singular_estimates=" << s.singular_estimates << '\n';
}

MetricsTable read_csv(std::istream& in) {
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader) {
    throw SchemaError("metrics CSV header must be '" + std::string(kCsvHeader) + "'");
  }
  std::map<std::string, std::string> summary;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw SchemaError("malformed summary " + where);
      summary[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 6) {
      throw SchemaError(where + ": expected 6 columns, found " + std::to_string(cols.size()));
    }
    fed::RoundRecord r;
    r.round = read_integer<int>(cols[0], where);
    try {
      r.phase = fed::phase_from_string(cols[1]);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(where + ": " + e.what());
    }
    r.a_t = read_real(cols[2], where);
    r.tau_p = read_integer<int>(cols[3], where);
    r.test_accuracy = read_real(cols[4], where);
    if (cols[5] != "-") r.cos_sim = read_real(cols[5], where);
    table.records.push_back(r);
  }

  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = summary.find(key);
    if (it == summary.end()) throw SchemaError("metrics CSV is missing summary key '" + key + "'");
    return it->second;
  };
  Summary& s = table.summary;
  s.method = need("method");
  s.seed = read_integer<std::uint64_t>(need("seed"), "seed");
  s.rounds = read_integer<int>(need("rounds"), "rounds");
  s.final_test_acc = read_real(need("final_test_acc"), "final_test_acc");
  s.best_test_acc = read_real(need("best_test_acc"), "best_test_acc");
  if (const auto& v = need("prestop_round"); v != "-") s.prestop_round = read_integer<int>(v, "prestop_round");
  if (const auto& v = need("prestop_A_t"); v != "-") s.prestop_a_t = read_real(v, "prestop_A_t");
  if (const auto& v = need("mean_cos_sim_phase2"); v != "-") {
    s.mean_cos_sim_phase2 = read_real(v, "mean_cos_sim_phase2");
  }
  s.singular_estimates = read_integer<std::size_t>(need("singular_estimates"), "singular_estimates");
  return table;
}

MetricsTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open metrics CSV " + path.string());
  try {
    return read_csv(in);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

namespace {

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};

Datasets load_datasets(const ExperimentConfig& c) {
  if (c.dataset == DatasetKind::mnist_idx) {
    return {data::load_idx(c.mnist_train_images, c.mnist_train_labels, c.mnist_train_limit),
            data::load_idx(c.mnist_test_images, c.mnist_test_labels, c.mnist_test_limit)};
  }
  return {data::gen_gaussian_mixture(c.num_classes, c.dim, c.per_class, c.separation,
                                     derive_seed(c.seed, {stream::kData})),
          data::gen_gaussian_mixture(c.num_classes, c.dim, c.test_per_class, c.separation,
                                     derive_seed(c.seed, {stream::kTestData}))};
}

fed::Phase2Policy policy_for(Method m) {
  switch (m) {
    case Method::fedavg:
    case Method::fedavg_clean: return fed::Phase2Policy::none;
    case Method::fedefc: return fed::Phase2Policy::forward_count;
    case Method::forward_percentile: return fed::Phase2Policy::forward_percentile;
    case Method::confident_pruning: return fed::Phase2Policy::confident_pruning;
  }
  return fed::Phase2Policy::none;
}

TransitionMatrix true_transition(const ExperimentConfig& c, std::size_t num_classes) {
  return noise::build_true_transition(
      noise::NoiseSpec{c.rho, c.zeta, derive_seed(c.seed, {stream::kTransition})}, num_classes);
}

}  // namespace

ExperimentRun run_experiment(const ExperimentConfig& config,
                             const std::optional<std::filesystem::path>& csv_out) {
  auto [train, test] = load_datasets(config);
  if (train.num_classes != test.num_classes) {
    const std::size_t c = std::max(train.num_classes, test.num_classes);
    train.num_classes = c;
    test.num_classes = c;
  }
  const TransitionMatrix t_true = true_transition(config, train.num_classes);
  if (config.method != Method::fedavg_clean) {
    train = noise::apply_noise(std::move(train), t_true, derive_seed(config.seed, {stream::kNoise}));
  }
  const auto part = data::partition(
      train, data::PartitionSpec{config.num_clients, config.alpha_dir, config.p,
                                 derive_seed(config.seed, {stream::kPartition})});
  const auto clients = fed::make_clients(part);

  nn::ModelSpec spec{train.dim(), config.hidden_dims, train.num_classes, nn::Activation::relu};
  auto init = nn::init_params(spec, derive_seed(config.seed, {stream::kInit}));

  fed::FederationConfig fc;
  fc.rounds = config.rounds;
  fc.client_fraction = config.client_fraction;
  fc.local_epochs = config.local_epochs;
  fc.optimizer = {config.learning_rate, config.momentum, config.batch_size};
  fc.gamma_thr = config.gamma_thr;
  fc.warmup_rounds = config.warmup_rounds;
  fc.policy = policy_for(config.method);
  fc.weighted_matrix = config.weighted_matrix;
  fc.percentile = config.percentile;
  fc.epsilon_clip = config.epsilon_clip;
  fc.workers = config.workers;
  fc.seed = config.seed;

  auto fr = fed::run_federation(fc, train, clients, test, std::move(init), &t_true);
  if (fr.singular_estimates > 0) {
    std::clog << "warning: " << fr.singular_estimates
              << " client transition estimates were near-singular (|det| <= 1e-8); used as-is\n";
  }

  ExperimentRun run;
  run.table.records = std::move(fr.records);
  Summary& s = run.table.summary;
  s.method = to_string(config.method);
  s.seed = config.seed;
  s.rounds = config.rounds;
  if (!run.table.records.empty()) {
    s.final_test_acc = run.table.records.back().test_accuracy;
    for (const auto& r : run.table.records) s.best_test_acc = std::max(s.best_test_acc, r.test_accuracy);
  }
  s.prestop_round = fr.prestop_round;
  s.prestop_a_t = fr.prestop_accuracy;
  double cos_sum = 0.0;
  std::size_t cos_n = 0;
  for (const auto& r : run.table.records) {
    if (r.phase == fed::Phase::phase2 && r.cos_sim) {
      cos_sum += *r.cos_sim;
      ++cos_n;
    }
  }
  if (cos_n > 0) s.mean_cos_sim_phase2 = cos_sum / static_cast<double>(cos_n);
  s.singular_estimates = fr.singular_estimates;
  run.final_params = std::move(fr.final_params);

  if (csv_out) {
    std::ofstream out(*csv_out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write metrics CSV " + csv_out->string());
    write_csv(run.table, out);
  }
  return run;
}

std::vector<ReportRow> compare_report(const std::vector<MetricsTable>& runs,
                                      std::optional<std::size_t> trials_per_method) {
  if (runs.empty()) throw std::invalid_argument("compare_report: no runs given");
  std::vector<ReportRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& run : runs) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const ReportRow& r) { return r.method == run.summary.method; });
    if (it == rows.end()) {
      rows.push_back(ReportRow{run.summary.method});
      values.emplace_back();
      it = rows.end() - 1;
    }
    values[static_cast<std::size_t>(it - rows.begin())].push_back(run.summary.final_test_acc);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& v = values[k];
    if (trials_per_method && v.size() != *trials_per_method) {
      throw SchemaError("method '" + rows[k].method + "' has " + std::to_string(v.size()) +
                        " trials, expected " + std::to_string(*trials_per_method));
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    rows[k].trials = v.size();
    rows[k].mean = mean;
    rows[k].std = std::sqrt(var);
  }
  return rows;
}

std::vector<ReportRow> compare_report(const std::vector<std::filesystem::path>& csv_paths,
                                      std::optional<std::size_t> trials_per_method) {
  if (csv_paths.empty()) throw std::invalid_argument("compare_report: no input files");
  std::vector<MetricsTable> runs;
  for (const auto& p : csv_paths) runs.push_back(read_csv(p));
  return compare_report(runs, trials_per_method);
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "method,trials,mean_final_test_acc,std_final_test_acc\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.trials << ',' << fmt_real(r.mean) << ',' << fmt_real(r.std) << '\n';
  }
  return out.str();
}

std::string report_text(const std::vector<ReportRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "method" << "  trials  "
      << "final test acc (%)\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.method << "  " << std::right
        << std::setw(6) << r.trials << "  " << std::fixed << std::setprecision(2) << std::setw(6)
        << 100.0 * r.mean << " +- " << std::setprecision(2) << 100.0 * r.std << '\n';
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

std::string noise_diagnostic(const ExperimentConfig& config) {
  auto [train, test] = load_datasets(config);
  const TransitionMatrix t = true_transition(config, train.num_classes);
  const auto noisy = noise::apply_noise(std::move(train), t, derive_seed(config.seed, {stream::kNoise}));
  const auto stats = noise::realized_stats(noisy.clean_labels, noisy.observed_labels, noisy.num_classes);
  const auto empirical = stats.column_normalized();

  std::ostringstream out;
  const std::size_t c = t.size();
  auto dump = [&](const char* title, const SquareMatrix<double>& m) {
    out << title << " (rows: observed label, columns: true label)\n";
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        out << (j == 0 ? "  " : " ") << std::fixed << std::setprecision(4) << m(i, j);
      }
      out << '\n';
    }
  };
  out << "rho=" << config.rho << " zeta=" << config.zeta << " classes=" << c
      << " flip_targets_per_column=" << (t == TransitionMatrix::identity(c) ? 0 : noise::flip_target_count(config.zeta, c))
      << " n=" << noisy.size() << '\n';
  dump("true transition T", t);
  dump("realized p(observed | true)", empirical);
  double worst = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) worst = std::max(worst, std::abs(empirical(i, j) - t(i, j)));
  }
  out << std::fixed << std::setprecision(4) << "realized flip rate " << stats.flip_rate
      << " (target " << config.rho << ")\n"
      << "max |realized - T| " << worst << '\n';
  return out.str();
}

}  // namespace fedefc::harness
