#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedefc/datagen.hpp"
#include "fedefc/fed.hpp"
#include "fedefc/label_noise.hpp"

using namespace fedefc;
using fed::PrestopMonitor;

namespace {

std::optional<int> first_trigger(PrestopMonitor m, const std::vector<double>& seq) {
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto d = m.step(seq[t], static_cast<int>(t));
    if (d.triggered) return d.prestop_round;
  }
  return std::nullopt;
}

struct Setup {
  data::Dataset train;
  data::Dataset test;
  std::vector<fed::ClientState> clients;
  nn::ModelParams init;
  TransitionMatrix truth;
};

Setup make_setup(double rho, std::uint64_t seed) {
  Setup s;
  s.train = data::gen_gaussian_mixture(3, 4, 120, 2.5, seed);
  s.test = data::gen_gaussian_mixture(3, 4, 100, 2.5, seed + 1000);
  s.truth = noise::build_true_transition({rho, 0.0, seed}, 3);
  s.train = noise::apply_noise(s.train, s.truth, seed + 1);
  s.clients = fed::make_clients(data::partition(s.train, {8, 10.0, 0.5, seed}));
  s.init = nn::init_params(nn::ModelSpec{4, {8}, 3}, seed);
  return s;
}

fed::FederationConfig small_config() {
  fed::FederationConfig c;
  c.rounds = 25;
  c.client_fraction = 0.5;
  c.local_epochs = 2;
  c.optimizer = {0.05, 0.5, 16};
  c.warmup_rounds = 3;
  c.gamma_thr = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("sample_clients") {
  Rng rng(1);
  const auto all = fed::sample_clients(7, 1.0, rng);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});

  const auto ten = fed::sample_clients(100, 0.1, rng);
  CHECK(ten.size() == 10);
  CHECK(std::set<std::size_t>(ten.begin(), ten.end()).size() == 10);
  for (auto v : ten) CHECK(v < 100);

  Rng a(99), b(99);
  CHECK(fed::sample_clients(50, 0.3, a) == fed::sample_clients(50, 0.3, b));
  Rng c(3);
  CHECK(fed::sample_clients(3, 0.01, c).size() == 1);
  CHECK_THROWS(fed::sample_clients(0, 0.5, c));
  CHECK_THROWS(fed::sample_clients(5, 0.0, c));
  CHECK_THROWS(fed::sample_clients(5, 1.5, c));
}

TEST_CASE("aggregation weights are normalized sample counts") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> size(1, 80);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<fed::ClientState> clients(12);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      clients[k].id = static_cast<int>(k);
      clients[k].indices.resize(size(rng));
    }
    Rng r(static_cast<std::uint64_t>(trial));
    const auto picked = fed::sample_clients(clients.size(), 0.4, r);
    const auto w = fed::aggregation_weights(clients, picked);
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t a = 0; a < picked.size(); ++a) {
      for (std::size_t b = 0; b < picked.size(); ++b) {
        const double lhs = w[a] * static_cast<double>(clients[picked[b]].n_k());
        const double rhs = w[b] * static_cast<double>(clients[picked[a]].n_k());
        CHECK(std::abs(lhs - rhs) < 1e-12);
      }
    }
  }
}

TEST_CASE("make_clients drops empty assignments") {
  data::Partition p;
  p.assignments = {{0, 1}, {}, {2}};
  const auto c = fed::make_clients(p);
  REQUIRE(c.size() == 2);
  CHECK(c[0].id == 0);
  CHECK(c[1].id == 2);
  CHECK(c[1].n_k() == 1);
}

TEST_CASE("estimate_accuracy") {
  CHECK(fed::estimate_accuracy(std::vector<double>{0.5, 0.7}) == doctest::Approx(0.6));
  CHECK(fed::estimate_accuracy(std::vector<double>{0.42}) == 0.42);
  CHECK(fed::estimate_accuracy(std::vector<double>(10, 1.0)) == 1.0);
  CHECK_THROWS(fed::estimate_accuracy(std::vector<double>{}));
}

TEST_CASE("local_update") {
  SUBCASE("zero epochs is a no-op") {
    const auto d = data::gen_gaussian_mixture(3, 2, 20, 3.0, 1);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto g = nn::init_params({2, {4}, 3}, 2);
    const auto r = fed::local_update(d, rows, g, nn::CrossEntropyLoss{}, 0, {}, 3);
    CHECK(r.params.values == g.values);
  }
  SUBCASE("separable two-class client is fit") {
    const auto d = data::gen_gaussian_mixture(2, 2, 50, 5.0, 4);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto g = nn::init_params({2, {}, 2}, 5);
    const auto r = fed::local_update(d, rows, g, nn::CrossEntropyLoss{}, 30, {0.1, 0.5, 10}, 6);
    CHECK(fed::accuracy(r.params, d.features, d.observed_labels, rows) >= 0.99);
  }
  SUBCASE("accuracy is measured on the incoming model") {
    const auto d = data::gen_gaussian_mixture(4, 3, 25, 2.0, 7);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    const nn::ModelSpec spec{3, {}, 4};
    const nn::ModelParams uniform{spec, std::vector<double>(spec.param_count(), 0.0)};
    const auto r = fed::local_update(d, rows, uniform, nn::CrossEntropyLoss{}, 3, {}, 8);
    CHECK(std::abs(r.train_accuracy - 0.25) <= 0.05);
    CHECK(r.params.values != uniform.values);
  }
}

TEST_CASE("prestop fixtures") {
  CHECK(first_trigger(PrestopMonitor(3, 0), {0.50, 0.60, 0.59, 0.58, 0.57}) == 4);
  CHECK(first_trigger(PrestopMonitor(3, 0), {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) == std::nullopt);
  CHECK(first_trigger(PrestopMonitor(3, 0), {0.5, 0.5, 0.5, 0.5}) == 3);
}

TEST_CASE("prestop warm-up and single firing") {
  PrestopMonitor m(2, 3);
  for (int t = 0; t < 3; ++t) {
    CHECK_FALSE(m.step(0.9, t).triggered);
    CHECK(m.a_max() == 0.0);
    CHECK(m.patience() == 0);
  }
  CHECK_FALSE(m.step(0.4, 3).triggered);
  CHECK_FALSE(m.step(0.3, 4).triggered);
  const auto d = m.step(0.3, 5);
  CHECK(d.triggered);
  CHECK(d.prestop_round == 5);
  CHECK(m.prestop_round() == 5);
  CHECK_FALSE(m.step(0.1, 6).triggered);
  CHECK_FALSE(m.step(0.05, 7).triggered);
  CHECK(m.prestop_round() == 5);
}

TEST_CASE("monitor invariants on random sequences") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int gamma = 1 + trial % 5;
    PrestopMonitor m(gamma, trial % 4);
    double prev_max = m.a_max();
    for (int t = 0; t < 60; ++t) {
      m.step(u(rng), t);
      CHECK(m.a_max() >= prev_max);
      CHECK(m.patience() <= gamma);
      CHECK(m.patience() >= 0);
      prev_max = m.a_max();
    }
  }
}

TEST_CASE("federation: determinism and record structure") {
  const auto s = make_setup(0.3, 11);
  const auto cfg = small_config();
  const auto a = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  const auto b = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  CHECK(a.records == b.records);
  CHECK(a.final_params.values == b.final_params.values);

  REQUIRE(a.records.size() == static_cast<std::size_t>(cfg.rounds));
  bool seen_phase2 = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& r = a.records[i];
    CHECK(r.round == static_cast<int>(i));
    CHECK(r.a_t >= 0.0);
    CHECK(r.a_t <= 1.0);
    CHECK(r.tau_p <= cfg.gamma_thr);
    if (seen_phase2) CHECK(r.phase == fed::Phase::phase2);
    if (r.phase == fed::Phase::phase2) {
      seen_phase2 = true;
      REQUIRE(a.prestop_round.has_value());
      CHECK(r.round >= *a.prestop_round);
    } else {
      CHECK_FALSE(r.cos_sim.has_value());
    }
  }
  if (a.prestop_round) {
    CHECK(seen_phase2);
    CHECK(a.records[static_cast<std::size_t>(*a.prestop_round)].phase == fed::Phase::phase2);
  }
}

TEST_CASE("federation: worker count does not change results") {
  const auto s = make_setup(0.3, 12);
  auto cfg = small_config();
  for (auto policy : {fed::Phase2Policy::forward_count, fed::Phase2Policy::forward_percentile,
                      fed::Phase2Policy::confident_pruning}) {
    cfg.policy = policy;
    cfg.workers = 1;
    const auto one = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
    cfg.workers = 4;
    const auto four = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
    CHECK(one.records == four.records);
    CHECK(one.final_params.values == four.final_params.values);
  }
}

TEST_CASE("federation: zero local epochs keep the global model fixed") {
  const auto s = make_setup(0.2, 13);
  auto cfg = small_config();
  cfg.local_epochs = 0;
  const auto r = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  CHECK(r.final_params.values == s.init.values);
  for (const auto& rec : r.records) CHECK(rec.test_accuracy == r.records.front().test_accuracy);
}

TEST_CASE("federation: a monitor that never fires keeps phase 1") {
  const auto s = make_setup(0.2, 14);
  auto cfg = small_config();
  cfg.gamma_thr = 1000;
  const auto r = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  CHECK_FALSE(r.prestop_round.has_value());
  for (const auto& rec : r.records) CHECK(rec.phase == fed::Phase::phase1);
}

TEST_CASE("federation: policy none never leaves phase 1") {
  const auto s = make_setup(0.4, 15);
  auto cfg = small_config();
  cfg.policy = fed::Phase2Policy::none;
  cfg.gamma_thr = 1;
  const auto r = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  CHECK(r.records.size() == static_cast<std::size_t>(cfg.rounds));
  for (const auto& rec : r.records) CHECK(rec.phase == fed::Phase::phase1);
}

TEST_CASE("federation: phase 2 reports cosine similarity to the truth") {
  const auto s = make_setup(0.3, 16);
  auto cfg = small_config();
  cfg.gamma_thr = 1;
  cfg.warmup_rounds = 2;
  const auto r = fed::run_federation(cfg, s.train, s.clients, s.test, s.init, &s.truth);
  REQUIRE(r.prestop_round.has_value());
  std::size_t with_cos = 0;
  for (const auto& rec : r.records) {
    if (rec.phase == fed::Phase::phase2 && rec.cos_sim) {
      ++with_cos;
      CHECK(*rec.cos_sim <= 1.0);
      CHECK(*rec.cos_sim >= -1.0);
    }
  }
  CHECK(with_cos > 0);
}

TEST_CASE("federation: input validation") {
  const auto s = make_setup(0.2, 17);
  auto cfg = small_config();
  CHECK_THROWS(fed::run_federation(cfg, s.train, {}, s.test, s.init));
  const auto wrong = nn::init_params({4, {8}, 4}, 1);
  CHECK_THROWS(fed::run_federation(cfg, s.train, s.clients, s.test, wrong));
}
