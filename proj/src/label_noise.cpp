#include "fedefc/label_noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "fedefc/rng.hpp"

namespace fedefc::noise {

void NoiseSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("NoiseSpec: rho must be in [0,1]");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("NoiseSpec: zeta must be in [0,1]");
}

std::size_t flip_target_count(double zeta, std::size_t num_classes) {
  const double raw = std::round((1.0 - zeta) * static_cast<double>(num_classes - 1));
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

TransitionMatrix build_true_transition(const NoiseSpec& spec, std::size_t num_classes) {
  spec.validate();
  if (num_classes < 2) throw std::invalid_argument("build_true_transition: need >= 2 classes");
  if (spec.zeta == 1.0 || spec.rho == 0.0) return TransitionMatrix::identity(num_classes);

  const std::size_t m = flip_target_count(spec.zeta, num_classes);
  TransitionMatrix t(num_classes, 0.0);
  Rng rng(spec.seed);
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < num_classes; ++j) {
    t(j, j) = 1.0 - spec.rho;
    others.clear();
    for (std::size_t i = 0; i < num_classes; ++i) {
      if (i != j) others.push_back(i);
    }
    std::shuffle(others.begin(), others.end(), rng);
    const double share = spec.rho / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) t(others[k], j) = share;
  }
  return t;
}

data::Dataset apply_noise(data::Dataset dataset, const TransitionMatrix& transition,
                          std::uint64_t seed) {
  const std::size_t c = dataset.num_classes;
  if (transition.size() != c) {
    throw std::invalid_argument("apply_noise: transition size does not match class count");
  }
  if (!transition.is_column_stochastic()) {
    throw std::invalid_argument("apply_noise: transition is not column-stochastic");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  dataset.observed_labels.resize(dataset.size());
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    const auto j = static_cast<std::size_t>(dataset.clean_labels[s]);
    const double u = unit(rng);
    double acc = 0.0;
    std::size_t chosen = j;
    // Fall through to the last nonzero row when rounding leaves u above the cumulative sum.
    for (std::size_t i = 0; i < c; ++i) {
      const double pij = transition(i, j);
      if (pij <= 0.0) continue;
      chosen = i;
      acc += pij;
      if (u < acc) break;
    }
    dataset.observed_labels[s] = static_cast<int>(chosen);
  }
  return dataset;
}

TransitionMatrix NoiseStats::column_normalized() const {
  const std::size_t c = empirical_joint.size();
  TransitionMatrix out(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < c; ++i) col += empirical_joint(i, j);
    for (std::size_t i = 0; i < c; ++i) {
      out(i, j) = col > 0.0 ? empirical_joint(i, j) / col : (i == j ? 1.0 : 0.0);
    }
  }
  return out;
}

NoiseStats realized_stats(std::span<const int> clean, std::span<const int> observed,
                          std::size_t num_classes) {
  if (clean.empty()) throw std::invalid_argument("realized_stats: empty input");
  if (clean.size() != observed.size()) throw std::invalid_argument("realized_stats: length mismatch");
  NoiseStats stats{0.0, SquareMatrix<double>(num_classes, 0.0)};
  std::size_t flips = 0;
  for (std::size_t s = 0; s < clean.size(); ++s) {
    if (clean[s] < 0 || observed[s] < 0 || static_cast<std::size_t>(clean[s]) >= num_classes ||
        static_cast<std::size_t>(observed[s]) >= num_classes) {
      throw std::out_of_range("realized_stats: label out of range");
    }
    if (clean[s] != observed[s]) ++flips;
    stats.empirical_joint(static_cast<std::size_t>(observed[s]), static_cast<std::size_t>(clean[s])) += 1.0;
  }
  const double n = static_cast<double>(clean.size());
  stats.flip_rate = static_cast<double>(flips) / n;
  SquareMatrix<double> joint(num_classes, 0.0);
  for (std::size_t i = 0; i < num_classes; ++i) {
    for (std::size_t j = 0; j < num_classes; ++j) joint(i, j) = stats.empirical_joint(i, j) / n;
  }
  stats.empirical_joint = std::move(joint);
  return stats;
}

}  // namespace fedefc::noise
