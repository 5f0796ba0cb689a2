#include "fedefc/fed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "fedefc/loss_correction.hpp"
#include "fedefc/noise_estimation.hpp"

namespace fedefc::fed {

std::vector<ClientState> make_clients(const data::Partition& partition) {
  std::vector<ClientState> clients;
  for (std::size_t k = 0; k < partition.assignments.size(); ++k) {
    if (partition.assignments[k].empty()) continue;
    clients.push_back(ClientState{static_cast<int>(k), partition.assignments[k]});
  }
  return clients;
}

std::string to_string(Phase phase) { return phase == Phase::phase1 ? "phase1" : "phase2"; }

Phase phase_from_string(const std::string& text) {
  if (text == "phase1") return Phase::phase1;
  if (text == "phase2") return Phase::phase2;
  throw std::invalid_argument("unknown phase '" + text + "'");
}

PrestopMonitor::PrestopMonitor(int gamma_thr, int warmup_rounds)
    : gamma_thr_(gamma_thr), warmup_rounds_(warmup_rounds) {
  if (gamma_thr_ < 1) throw std::invalid_argument("PrestopMonitor: gamma_thr must be positive");
  if (warmup_rounds_ < 0) throw std::invalid_argument("PrestopMonitor: warmup_rounds must be >= 0");
}

PrestopDecision PrestopMonitor::step(double a_t, int t) {
  if (t < 0) throw std::invalid_argument("PrestopMonitor: negative round");
  if (prestop_round_) return {};
  if (t < warmup_rounds_) return {};
  if (a_t > a_max_) {
    tau_p_ = 0;
    a_max_ = a_t;
    return {};
  }
  ++tau_p_;
  if (tau_p_ == gamma_thr_) {
    prestop_round_ = t;
    return {true, t};
  }
  return {};
}

std::vector<std::size_t> sample_clients(std::size_t pool_size, double fraction, Rng& rng) {
  if (pool_size == 0) throw std::invalid_argument("sample_clients: empty client pool");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
  }
  const auto want = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(fraction * static_cast<double>(pool_size))), 1, pool_size);
  std::vector<std::size_t> pool(pool_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(want);
  std::sample(pool.begin(), pool.end(), std::back_inserter(picked), want, rng);
  return picked;
}

std::vector<double> aggregation_weights(const std::vector<ClientState>& clients,
                                        std::span<const std::size_t> picked) {
  if (picked.empty()) throw std::invalid_argument("aggregation_weights: no clients picked");
  double total = 0.0;
  for (auto pos : picked) total += static_cast<double>(clients.at(pos).n_k());
  if (!(total > 0.0)) throw std::invalid_argument("aggregation_weights: picked clients hold no data");
  std::vector<double> w;
  w.reserve(picked.size());
  for (auto pos : picked) w.push_back(static_cast<double>(clients[pos].n_k()) / total);
  return w;
}

double accuracy(const nn::ModelParams& params, const RowMatrix& features,
                std::span<const int> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("accuracy: no rows");
  const RowMatrix probs = nn::predict_proba(params, features, rows);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(nn::argmax(probs.row(r))) == labels[rows[r]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

LocalResult local_update(const data::Dataset& dataset, std::span<const std::size_t> rows,
                         const nn::ModelParams& global, const nn::LogitLoss& loss,
                         int local_epochs, const OptimizerConfig& opt, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("local_update: client has no samples");
  if (local_epochs < 0) throw std::invalid_argument("local_update: negative epoch count");
  if (opt.batch_size == 0) throw std::invalid_argument("local_update: batch_size must be positive");

  LocalResult result{global, accuracy(global, dataset.features, dataset.observed_labels, rows)};
  auto state = nn::OptimizerState::fresh(global.size(), opt.learning_rate, opt.momentum);

  const std::size_t d = dataset.dim();
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::vector<double> xb;
  std::vector<int> yb;
  Rng rng(seed);
  for (int epoch = 0; epoch < local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      xb.resize((end - start) * d);
      yb.resize(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto src = dataset.features.row(order[b]);
        std::copy(src.begin(), src.end(), xb.begin() + static_cast<std::ptrdiff_t>((b - start) * d));
        yb[b - start] = dataset.observed_labels[order[b]];
      }
      const auto lg = nn::loss_and_grad(result.params, nn::Batch{xb, yb}, loss);
      nn::sgd_step(result.params, lg.grad, state);
    }
  }
  return result;
}

double estimate_accuracy(std::span<const double> accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("estimate_accuracy: no client accuracies");
  return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
         static_cast<double>(accuracies.size());
}

namespace {

// Runs job(i) for i in [0, count) on up to `workers` threads. The first
// failure by job index is rethrown.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      job(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t threads = std::min(workers, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) guarded(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct ClientOutcome {
  nn::ModelParams params;
  double train_accuracy = 0.0;
  std::optional<double> cos_sim;
  bool singular = false;
};

std::optional<TransitionMatrix> estimate_from_counts(const nn::ModelParams& global,
                                                     const data::Dataset& train,
                                                     const ClientState& client, bool weighted,
                                                     std::vector<int>* assignments) {
  const estimation::ClientView view{train.features, client.indices, train.observed_labels};
  const RowMatrix probs = estimation::client_probs(global, view);
  const std::vector<int> observed = estimation::client_observed(view);
  const auto thresholds = estimation::class_thresholds(probs, observed);
  const auto assigned = estimation::confident_assignments(probs, observed, thresholds);
  CountMatrix counts(train.num_classes, 0);
  for (std::size_t r = 0; r < assigned.size(); ++r) {
    if (assigned[r] >= 0) {
      counts(static_cast<std::size_t>(observed[r]), static_cast<std::size_t>(assigned[r])) += 1;
    }
  }
  if (assignments != nullptr) *assignments = assigned;
  if (counts.total() == 0) return std::nullopt;
  if (weighted) {
    return estimation::weighted_transition(counts,
                                           estimation::class_priors(observed, train.num_classes));
  }
  return estimation::transition_from_counts(counts);
}

}  // namespace

FederationResult run_federation(const FederationConfig& config, const data::Dataset& train,
                                const std::vector<ClientState>& clients,
                                const data::Dataset& test, nn::ModelParams initial,
                                const TransitionMatrix* true_transition) {
  if (clients.empty()) throw std::invalid_argument("run_federation: no clients with data");
  if (config.rounds < 0) throw std::invalid_argument("run_federation: negative round count");
  for (const auto& c : clients) {
    if (c.indices.empty()) throw std::invalid_argument("run_federation: client without samples");
  }
  if (initial.spec.num_classes != train.num_classes) {
    throw std::invalid_argument("run_federation: model class count differs from dataset");
  }

  const nn::CrossEntropyLoss plain;
  PrestopMonitor monitor(config.gamma_thr, config.warmup_rounds);
  FederationResult result;
  nn::ModelParams global = std::move(initial);
  Phase phase = Phase::phase1;
  // percentile baseline: per-client Q frozen at T_e, indexed like `clients`
  std::vector<std::optional<TransitionMatrix>> frozen_q;

  auto cosine_to_truth = [&](const TransitionMatrix& q) -> std::optional<double> {
    if (true_transition == nullptr) return std::nullopt;
    return estimation::cosine_similarity(q, *true_transition);
  };

  auto train_corrected = [&](const ClientState& client, TransitionMatrix q, std::uint64_t seed,
                             ClientOutcome& out) {
    out.cos_sim = cosine_to_truth(q);
    const correction::ForwardCorrectedLoss loss(std::move(q), config.epsilon_clip);
    out.singular = !loss.is_nonsingular();
    auto local = local_update(train, client.indices, global, loss, config.local_epochs,
                              config.optimizer, seed);
    out.params = std::move(local.params);
    out.train_accuracy = local.train_accuracy;
  };

  auto run_client = [&](const ClientState& client, std::size_t pool_pos, std::uint64_t seed,
                        ClientOutcome& out) {
    if (phase == Phase::phase1 || config.policy == Phase2Policy::none) {
      auto local = local_update(train, client.indices, global, plain, config.local_epochs,
                                config.optimizer, seed);
      out.params = std::move(local.params);
      out.train_accuracy = local.train_accuracy;
      return;
    }
    switch (config.policy) {
      case Phase2Policy::forward_count: {
        auto q = estimate_from_counts(global, train, client, config.weighted_matrix, nullptr);
        if (q) {
          train_corrected(client, std::move(*q), seed, out);
          return;
        }
        // no confident examples this round: plain loss
        auto local = local_update(train, client.indices, global, plain, config.local_epochs,
                                  config.optimizer, seed);
        out.params = std::move(local.params);
        out.train_accuracy = local.train_accuracy;
        return;
      }
      case Phase2Policy::forward_percentile:
        train_corrected(client, *frozen_q[pool_pos], seed, out);
        return;
      case Phase2Policy::confident_pruning: {
        std::vector<int> assigned;
        auto q = estimate_from_counts(global, train, client, config.weighted_matrix, &assigned);
        if (q) out.cos_sim = cosine_to_truth(*q);
        std::vector<std::size_t> kept;
        for (std::size_t r = 0; r < client.indices.size(); ++r) {
          const std::size_t row = client.indices[r];
          if (assigned[r] < 0 || assigned[r] == train.observed_labels[row]) kept.push_back(row);
        }
        out.train_accuracy = accuracy(global, train.features, train.observed_labels, client.indices);
        if (kept.empty()) {
          out.params = global;
          return;
        }
        out.params = local_update(train, kept, global, plain, config.local_epochs,
                                  config.optimizer, seed)
                         .params;
        return;
      }
      case Phase2Policy::none:
        break;
    }
  };

  std::vector<std::size_t> all_test_rows(test.size());
  std::iota(all_test_rows.begin(), all_test_rows.end(), std::size_t{0});

  int t = 0;
  while (t < config.rounds) {
    const auto phase_tag = static_cast<std::uint64_t>(phase);
    Rng round_rng(derive_seed(config.seed, {stream::kRound, static_cast<std::uint64_t>(t), phase_tag}));
    const auto picked = sample_clients(clients.size(), config.client_fraction, round_rng);

    std::vector<ClientOutcome> outcomes(picked.size());
    parallel_for(picked.size(), config.workers, [&](std::size_t slot) {
      const std::size_t pos = picked[slot];
      const ClientState& client = clients[pos];
      const auto seed = derive_seed(config.seed, {stream::kClient, static_cast<std::uint64_t>(t),
                                                  phase_tag, static_cast<std::uint64_t>(client.id)});
      run_client(client, pos, seed, outcomes[slot]);
    });

    std::vector<double> accs;
    std::vector<double> cos;
    for (const auto& o : outcomes) {
      accs.push_back(o.train_accuracy);
      if (o.cos_sim) cos.push_back(*o.cos_sim);
      if (o.singular) ++result.singular_estimates;
    }
    const double a_t = estimate_accuracy(accs);

    if (phase == Phase::phase1) {
      const auto decision = monitor.step(a_t, t);
      if (decision.triggered) {
        result.prestop_round = decision.prestop_round;
        result.prestop_accuracy = a_t;
        if (config.policy != Phase2Policy::none) {
          phase = Phase::phase2;
          if (config.policy == Phase2Policy::forward_percentile) {
            frozen_q.assign(clients.size(), std::nullopt);
            parallel_for(clients.size(), config.workers, [&](std::size_t pos) {
              const estimation::ClientView view{train.features, clients[pos].indices,
                                                train.observed_labels};
              frozen_q[pos] = estimation::percentile_transition(
                  estimation::client_probs(global, view), config.percentile);
            });
          }
          continue;  // aggregation of the triggering round is skipped
        }
      }
    }

    std::vector<nn::ModelParams> models;
    models.reserve(outcomes.size());
    for (auto& o : outcomes) models.push_back(std::move(o.params));
    global = nn::weighted_average(models, aggregation_weights(clients, picked));
    if (!global.all_finite()) {
      throw std::runtime_error("run_federation: non-finite global parameters at round " +
                               std::to_string(t));
    }

    RoundRecord rec;
    rec.round = t;
    rec.a_t = a_t;
    rec.tau_p = monitor.patience();
    rec.phase = phase;
    rec.test_accuracy = accuracy(global, test.features, test.clean_labels, all_test_rows);
    if (!cos.empty()) {
      rec.cos_sim = std::accumulate(cos.begin(), cos.end(), 0.0) / static_cast<double>(cos.size());
    }
    result.records.push_back(rec);
    ++t;
  }

  result.final_params = std::move(global);
  return result;
}

}  // namespace fedefc::fed
