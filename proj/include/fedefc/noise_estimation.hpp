#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedefc/matrix.hpp"
#include "fedefc/nn.hpp"

namespace fedefc::estimation {

/// Raised when a client's count matrix holds no examples at all.
class EmptyCountMatrixError : public std::runtime_error {
 public:
  EmptyCountMatrixError() : std::runtime_error("count matrix is empty: no confident examples") {}
};

/// Per-class confidence thresholds. tau[j] is only meaningful where
/// defined[j] is set, i.e. the client holds at least one example labeled j.
struct ThresholdVector {
  std::vector<double> tau;
  std::vector<bool> defined;
};

// Every routine below takes the model's predicted probabilities for the
// client's examples (row r = p(. | x_r)) alongside the observed labels, so
// estimation can be driven by a real model or by a stub probability table.

/// tau[j] = mean of p(j | x) over examples observed as j.
ThresholdVector class_thresholds(const RowMatrix& probs, std::span<const int> observed);

/// For each example: the true class it is confidently attributed to, or -1.
/// A class j qualifies when p(j | x) >= tau[j]; among several qualifying
/// classes the one with the largest probability wins (lowest index on ties).
std::vector<int> confident_assignments(const RowMatrix& probs, std::span<const int> observed,
                                       const ThresholdVector& thresholds);

/// counts(i, j) = number of examples observed as i and assigned to j.
CountMatrix count_matrix(const RowMatrix& probs, std::span<const int> observed,
                         const ThresholdVector& thresholds);

/// Column normalization: Q(i, j) = C(i, j) / sum_i C(i, j). Empty columns fall
/// back to e_j. Throws EmptyCountMatrixError if every column is empty.
TransitionMatrix transition_from_counts(const CountMatrix& counts);

/// p_i = fraction of the client's examples observed as i.
std::vector<double> class_priors(std::span<const int> observed, std::size_t num_classes);

/// Prior-weighted variant for label-imbalanced clients:
///   W(i, j) = p_i C(i, j) / sum_j' p_j' C(i, j'),
/// then columns renormalized (empty columns fall back to e_j).
TransitionMatrix weighted_transition(const CountMatrix& counts, std::span<const double> priors);

/// Anchor-point estimate: for each class j, take the example at the given
/// percentile of p(j | x) (nearest rank over the client's data) and use its
/// full probability vector as column j.
TransitionMatrix percentile_transition(const RowMatrix& probs, double percentile);

/// Index of the anchor example selected for class j.
std::size_t percentile_anchor(const RowMatrix& probs, std::size_t j, double percentile);

/// <a, b> / (|a| |b|) over the flattened matrices.
double cosine_similarity(const TransitionMatrix& a, const TransitionMatrix& b);

// Model-driven conveniences: evaluate `params` on the listed rows of
// `features` and forward to the routines above.
struct ClientView {
  const RowMatrix& features;
  std::span<const std::size_t> rows;
  std::span<const int> observed;  // indexed by global row
};

RowMatrix client_probs(const nn::ModelParams& params, const ClientView& client);
std::vector<int> client_observed(const ClientView& client);

}  // namespace fedefc::estimation
