#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "fedefc/loss_correction.hpp"
#include "fedefc/nn.hpp"
#include "oracles.hpp"

using namespace fedefc;
using correction::ForwardCorrectedLoss;

namespace {

const TransitionMatrix kQ2(2, std::vector<double>{0.8, 0.1, 0.2, 0.9});

}  // namespace

TEST_CASE("corrected probabilities") {
  const std::vector<double> half{0.5, 0.5};
  const auto out = correction::corrected_probs(kQ2, half);
  CHECK(out[0] == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.55).epsilon(1e-15));

  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(correction::corrected_probs(TransitionMatrix::identity(3), p) == p);
  CHECK_THROWS(correction::corrected_probs(kQ2, p));

  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 2 + static_cast<std::size_t>(t % 9);
    const auto q = oracle::random_transition(c, rng);
    const auto probs = oracle::random_probs(1, c, rng)[0];
    const auto o = correction::corrected_probs(q, probs);
    CHECK(std::abs(std::accumulate(o.begin(), o.end(), 0.0) - 1.0) < 1e-9);
  }
}

TEST_CASE("forward loss values") {
  const ForwardCorrectedLoss loss(kQ2);
  CHECK(loss.forward_loss(std::vector<double>{0.5, 0.5}, 0) ==
        doctest::Approx(-std::log(0.45)).epsilon(1e-15));
  CHECK(loss.forward_loss(std::vector<double>{0.5, 0.5}, 0) == doctest::Approx(0.7985).epsilon(1e-4));

  const ForwardCorrectedLoss plain(TransitionMatrix::identity(3));
  const std::vector<double> p{0.2, 0.3, 0.5};
  for (std::size_t i = 0; i < 3; ++i) CHECK(plain.forward_loss(p, i) == -std::log(p[i]));

  const TransitionMatrix hard(2, std::vector<double>{1.0, 1.0, 0.0, 0.0});
  const ForwardCorrectedLoss clipped(hard, 1e-8);
  const double v = clipped.forward_loss(std::vector<double>{0.3, 0.7}, 1);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(1e-8)));
}

TEST_CASE("constructor validation and singularity guard") {
  CHECK_THROWS_AS(ForwardCorrectedLoss(TransitionMatrix(2, std::vector<double>{0.5, 0.5, 0.6, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(ForwardCorrectedLoss(kQ2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ForwardCorrectedLoss(kQ2, 1e-2), std::invalid_argument);
  CHECK_NOTHROW(ForwardCorrectedLoss(kQ2, 1e-3));

  CHECK(ForwardCorrectedLoss(kQ2).is_nonsingular());
  const TransitionMatrix singular(2, std::vector<double>{0.5, 0.5, 0.5, 0.5});
  const ForwardCorrectedLoss s(singular);
  CHECK_FALSE(s.is_nonsingular());
  CHECK(std::isfinite(s.forward_loss(std::vector<double>{0.1, 0.9}, 0)));
}

TEST_CASE("identity correction reduces to softmax cross-entropy") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t c = 2 + static_cast<std::size_t>(t % 6);
    std::vector<double> z(c);
    for (auto& v : z) v = g(rng);
    const std::size_t label = static_cast<std::size_t>(t) % c;
    const ForwardCorrectedLoss fc(TransitionMatrix::identity(c));
    const nn::CrossEntropyLoss ce;
    std::vector<double> g1(c), g2(c);
    CHECK(fc.evaluate(z, label, g1) == ce.evaluate(z, label, g2));
    CHECK(g1 == g2);
    const auto p = nn::softmax(z);
    for (std::size_t k = 0; k < c; ++k) {
      CHECK(g1[k] == doctest::Approx(p[k] - (k == label ? 1.0 : 0.0)).epsilon(1e-14));
    }
  }
}

TEST_CASE("corrected gradient matches finite differences on random triples") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + static_cast<std::size_t>(t % 9);
    const auto q = oracle::random_transition(c, rng);
    std::vector<double> z(c);
    for (auto& v : z) v = g(rng);
    const std::size_t label = static_cast<std::size_t>(t * 5) % c;
    const ForwardCorrectedLoss loss(q);

    const auto grad = loss.forward_loss_grad(z, label);
    const auto fd = oracle::central_difference(
        [&](const std::vector<double>& zz) {
          const auto p = oracle::naive_softmax(zz);
          double mixed = 0.0;
          for (std::size_t j = 0; j < c; ++j) mixed += q(label, j) * p[j];
          return -std::log(mixed);
        },
        z);
    CHECK(oracle::max_relative_error(grad, fd) < 1e-5);
    CHECK(std::abs(std::accumulate(grad.begin(), grad.end(), 0.0)) < 1e-12);
  }
}

TEST_CASE("clipped branch has zero gradient") {
  const TransitionMatrix hard(2, std::vector<double>{1.0, 1.0, 0.0, 0.0});
  const ForwardCorrectedLoss loss(hard);
  for (double v : loss.forward_loss_grad(std::vector<double>{0.3, -1.0}, 1)) CHECK(v == 0.0);
}

TEST_CASE("identity-corrected training is bit-identical to plain training") {
  const nn::ModelSpec spec{4, {6}, 3};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(32 * 4);
  for (auto& v : x) v = g(rng);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);

  auto train = [&](const nn::LogitLoss& loss) {
    auto p = nn::init_params(spec, 3);
    auto st = nn::OptimizerState::fresh(p.size(), 0.1, 0.5);
    for (int step = 0; step < 100; ++step) {
      const std::size_t s = static_cast<std::size_t>(step % 4) * 8;
      const nn::Batch b{std::span<const double>(x).subspan(s * 4, 32),
                        std::span<const int>(y).subspan(s, 8)};
      nn::sgd_step(p, nn::loss_and_grad(p, b, loss).grad, st);
    }
    return p.values;
  };
  CHECK(train(ForwardCorrectedLoss(TransitionMatrix::identity(3))) == train(nn::CrossEntropyLoss{}));
}
