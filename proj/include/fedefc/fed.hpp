#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedefc/datagen.hpp"
#include "fedefc/matrix.hpp"
#include "fedefc/nn.hpp"
#include "fedefc/rng.hpp"

namespace fedefc::fed {

struct ClientState {
  int id = 0;
  std::vector<std::size_t> indices;

  std::size_t n_k() const { return indices.size(); }
};

/// One client per partition entry; clients that received no data are left out
/// of the pool for the whole run.
std::vector<ClientState> make_clients(const data::Partition& partition);

enum class Phase { phase1, phase2 };
std::string to_string(Phase phase);
Phase phase_from_string(const std::string& text);

struct RoundRecord {
  int round = 0;
  double a_t = 0.0;
  int tau_p = 0;
  Phase phase = Phase::phase1;
  double test_accuracy = 0.0;
  std::optional<double> cos_sim;

  bool operator==(const RoundRecord&) const = default;
};

struct PrestopDecision {
  bool triggered = false;
  int prestop_round = -1;
};

/// Patience monitor over the estimated global accuracy A(t). Rounds before
/// `warmup_rounds` are ignored. Only a strict improvement over A_max resets
/// the patience counter; the monitor fires once, when patience reaches
/// gamma_thr, and is inert afterwards.
class PrestopMonitor {
 public:
  PrestopMonitor(int gamma_thr, int warmup_rounds);

  PrestopDecision step(double a_t, int t);

  double a_max() const { return a_max_; }
  int patience() const { return tau_p_; }
  int gamma_thr() const { return gamma_thr_; }
  bool triggered() const { return prestop_round_.has_value(); }
  std::optional<int> prestop_round() const { return prestop_round_; }

 private:
  int gamma_thr_;
  int warmup_rounds_;
  double a_max_ = 0.0;
  int tau_p_ = 0;
  std::optional<int> prestop_round_;
};

/// Positions into a pool of `pool_size` clients: a uniform subset of size
/// max(1, round(fraction * pool_size)) drawn without replacement, in
/// ascending order.
std::vector<std::size_t> sample_clients(std::size_t pool_size, double fraction, Rng& rng);

/// FedAvg weights for the picked pool positions: n_k normalized to sum to 1.
std::vector<double> aggregation_weights(const std::vector<ClientState>& clients,
                                        std::span<const std::size_t> picked);

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.5;
  std::size_t batch_size = 32;
};

/// Fraction of `rows` whose argmax prediction equals labels[row].
double accuracy(const nn::ModelParams& params, const RowMatrix& features,
                std::span<const int> labels, std::span<const std::size_t> rows);

struct LocalResult {
  nn::ModelParams params;
  double train_accuracy = 0.0;
};

/// Measures the incoming model's accuracy on the client's observed labels,
/// then runs `local_epochs` shuffled passes of mini-batch SGD with `loss`.
LocalResult local_update(const data::Dataset& dataset, std::span<const std::size_t> rows,
                         const nn::ModelParams& global, const nn::LogitLoss& loss,
                         int local_epochs, const OptimizerConfig& opt, std::uint64_t seed);

/// Unweighted mean of the participating clients' accuracies.
double estimate_accuracy(std::span<const double> accuracies);

/// What participating clients do once the prestopping point is reached.
enum class Phase2Policy {
  none,                // keep plain cross-entropy, never leave phase 1
  forward_count,       // per-round count-matrix Q + forward-corrected loss
  forward_percentile,  // percentile-anchor Q fixed at T_e + forward-corrected loss
  confident_pruning,   // per-round count matrix, drop off-diagonal examples, plain loss
};

struct FederationConfig {
  int rounds = 60;
  double client_fraction = 0.25;
  int local_epochs = 1;
  OptimizerConfig optimizer;
  int gamma_thr = 3;
  int warmup_rounds = 10;
  Phase2Policy policy = Phase2Policy::forward_count;
  bool weighted_matrix = false;
  double percentile = 97.0;
  double epsilon_clip = 1e-8;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

struct FederationResult {
  std::vector<RoundRecord> records;
  nn::ModelParams final_params;
  std::optional<int> prestop_round;
  std::optional<double> prestop_accuracy;
  std::size_t singular_estimates = 0;
};

/// Runs the two-phase federation. Phase 1 trains with plain cross-entropy and
/// FedAvg aggregation while the prestop monitor watches A(t). When it fires at
/// T_e the round's aggregation is dropped and phase 2 restarts round T_e from
/// the last aggregated model under `policy`. `true_transition`, when given,
/// is used for the per-round cosine-similarity diagnostic only.
FederationResult run_federation(const FederationConfig& config, const data::Dataset& train,
                                const std::vector<ClientState>& clients,
                                const data::Dataset& test, nn::ModelParams initial,
                                const TransitionMatrix* true_transition = nullptr);

}  // namespace fedefc::fed
