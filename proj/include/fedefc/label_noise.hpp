#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fedefc/datagen.hpp"
#include "fedefc/matrix.hpp"

namespace fedefc::noise {

/// rho: fraction of flipped labels. zeta: sparsity, the fraction of
/// off-diagonal targets in each column that receive no flip mass.
struct NoiseSpec {
  double rho = 0.0;
  double zeta = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of flip targets per column: max(1, round((1 - zeta) * (C - 1))).
std::size_t flip_target_count(double zeta, std::size_t num_classes);

/// Diagonal 1 - rho; rho split evenly over flip_target_count() randomly chosen
/// off-diagonal rows. zeta == 1 or rho == 0 gives the identity.
TransitionMatrix build_true_transition(const NoiseSpec& spec, std::size_t num_classes);

/// Redraws every observed label from column clean_label of `transition`.
data::Dataset apply_noise(data::Dataset dataset, const TransitionMatrix& transition,
                          std::uint64_t seed);

struct NoiseStats {
  double flip_rate = 0.0;
  /// joint(i, j) = count(observed = i, clean = j) / n
  SquareMatrix<double> empirical_joint;

  /// joint normalized per column: an empirical estimate of p(observed | clean).
  TransitionMatrix column_normalized() const;
};

NoiseStats realized_stats(std::span<const int> clean, std::span<const int> observed,
                          std::size_t num_classes);

}  // namespace fedefc::noise
