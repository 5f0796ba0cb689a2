#include "fedefc/noise_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedefc::estimation {

namespace {

void check_inputs(const RowMatrix& probs, std::span<const int> observed) {
  if (probs.rows() == 0) throw std::invalid_argument("noise estimation: no client data");
  if (probs.rows() != observed.size()) {
    throw std::invalid_argument("noise estimation: probability rows do not match label count");
  }
  for (int y : observed) {
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols()) {
      throw std::out_of_range("noise estimation: observed label out of range");
    }
  }
}

}  // namespace

ThresholdVector class_thresholds(const RowMatrix& probs, std::span<const int> observed) {
  check_inputs(probs, observed);
  const std::size_t c = probs.cols();
  std::vector<double> sum(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto j = static_cast<std::size_t>(observed[r]);
    sum[j] += probs(r, j);
    ++count[j];
  }
  ThresholdVector out{std::vector<double>(c, 0.0), std::vector<bool>(c, false)};
  for (std::size_t j = 0; j < c; ++j) {
    if (count[j] == 0) continue;
    out.tau[j] = sum[j] / static_cast<double>(count[j]);
    out.defined[j] = true;
  }
  return out;
}

std::vector<int> confident_assignments(const RowMatrix& probs, std::span<const int> observed,
                                       const ThresholdVector& thresholds) {
  check_inputs(probs, observed);
  const std::size_t c = probs.cols();
  if (thresholds.tau.size() != c || thresholds.defined.size() != c) {
    throw std::invalid_argument("confident_assignments: threshold size mismatch");
  }
  std::vector<int> assigned(probs.rows(), -1);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    int best = -1;
    double best_p = -1.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!thresholds.defined[j]) continue;
      const double pj = probs(r, j);
      if (pj >= thresholds.tau[j] && pj > best_p) {
        best = static_cast<int>(j);
        best_p = pj;
      }
    }
    assigned[r] = best;
  }
  return assigned;
}

CountMatrix count_matrix(const RowMatrix& probs, std::span<const int> observed,
                         const ThresholdVector& thresholds) {
  const auto assigned = confident_assignments(probs, observed, thresholds);
  CountMatrix counts(probs.cols(), 0);
  for (std::size_t r = 0; r < assigned.size(); ++r) {
    if (assigned[r] < 0) continue;
    counts(static_cast<std::size_t>(observed[r]), static_cast<std::size_t>(assigned[r])) += 1;
  }
  return counts;
}

TransitionMatrix transition_from_counts(const CountMatrix& counts) {
  // The printed formula divides by the row sum (over true labels). That does
  // not give p(observed = i | true = j), which forward correction needs, so the
  // normalization here runs over observed labels within each true-label column.
  const std::size_t c = counts.size();
  TransitionMatrix q(c, 0.0);
  bool any = false;
  for (std::size_t j = 0; j < c; ++j) {
    const std::int64_t col = counts.column_total(j);
    if (col == 0) {
      q(j, j) = 1.0;
      continue;
    }
    any = true;
    for (std::size_t i = 0; i < c; ++i) {
      q(i, j) = static_cast<double>(counts(i, j)) / static_cast<double>(col);
    }
  }
  if (!any) throw EmptyCountMatrixError();
  return q;
}

std::vector<double> class_priors(std::span<const int> observed, std::size_t num_classes) {
  if (observed.empty()) throw std::invalid_argument("class_priors: no labels");
  std::vector<double> p(num_classes, 0.0);
  for (int y : observed) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::out_of_range("class_priors: label out of range");
    }
    p[static_cast<std::size_t>(y)] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(observed.size());
  return p;
}

TransitionMatrix weighted_transition(const CountMatrix& counts, std::span<const double> priors) {
  const std::size_t c = counts.size();
  if (priors.size() != c) throw std::invalid_argument("weighted_transition: prior size mismatch");
  if (counts.total() == 0) throw EmptyCountMatrixError();

  SquareMatrix<double> w(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += priors[j] * static_cast<double>(counts(i, j));
    if (!(denom > 0.0)) continue;
    for (std::size_t j = 0; j < c; ++j) {
      w(i, j) = priors[i] * static_cast<double>(counts(i, j)) / denom;
    }
  }

  TransitionMatrix q(c, 0.0);
  bool any = false;
  for (std::size_t j = 0; j < c; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < c; ++i) col += w(i, j);
    if (!(col > 0.0)) {
      q(j, j) = 1.0;
      continue;
    }
    any = true;
    for (std::size_t i = 0; i < c; ++i) q(i, j) = w(i, j) / col;
  }
  if (!any) throw EmptyCountMatrixError();
  return q;
}

std::size_t percentile_anchor(const RowMatrix& probs, std::size_t j, double percentile) {
  if (probs.rows() == 0) throw std::invalid_argument("percentile_transition: no client data");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw std::invalid_argument("percentile_transition: percentile must be in (0, 100]");
  }
  const std::size_t n = probs.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs(a, j) < probs(b, j); });
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return order[rank - 1];
}

TransitionMatrix percentile_transition(const RowMatrix& probs, double percentile) {
  const std::size_t c = probs.cols();
  TransitionMatrix q(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    const std::size_t anchor = percentile_anchor(probs, j, percentile);
    for (std::size_t i = 0; i < c; ++i) q(i, j) = probs(anchor, i);
  }
  return q;
}

double cosine_similarity(const TransitionMatrix& a, const TransitionMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: shape mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t k = 0; k < va.size(); ++k) {
    dot += va[k] * vb[k];
    na += va[k] * va[k];
    nb += vb[k] * vb[k];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero matrix");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RowMatrix client_probs(const nn::ModelParams& params, const ClientView& client) {
  return nn::predict_proba(params, client.features, client.rows);
}

std::vector<int> client_observed(const ClientView& client) {
  std::vector<int> out(client.rows.size());
  for (std::size_t r = 0; r < client.rows.size(); ++r) out[r] = client.observed[client.rows[r]];
  return out;
}

}  // namespace fedefc::estimation
