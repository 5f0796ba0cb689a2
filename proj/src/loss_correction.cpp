#include "fedefc/loss_correction.hpp"

#include <cmath>
#include <stdexcept>

namespace fedefc::correction {

std::vector<double> corrected_probs(const TransitionMatrix& q, std::span<const double> clean_probs) {
  const std::size_t c = q.size();
  if (clean_probs.size() != c) throw std::invalid_argument("corrected_probs: shape mismatch");
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += q(i, j) * clean_probs[j];
    out[i] = s;
  }
  return out;
}

ForwardCorrectedLoss::ForwardCorrectedLoss(TransitionMatrix transition, double epsilon_clip)
    : transition_(std::move(transition)), epsilon_clip_(epsilon_clip) {
  if (!transition_.is_column_stochastic()) {
    throw std::invalid_argument("ForwardCorrectedLoss: transition is not column-stochastic");
  }
  if (!(epsilon_clip_ > 0.0 && epsilon_clip_ <= 1e-3)) {
    throw std::invalid_argument("ForwardCorrectedLoss: epsilon_clip must be in (0, 1e-3]");
  }
}

bool ForwardCorrectedLoss::is_nonsingular() const {
  return std::abs(transition_.determinant()) > kSingularDeterminant;
}

double ForwardCorrectedLoss::forward_loss(std::span<const double> clean_probs,
                                          std::size_t observed_label) const {
  if (observed_label >= transition_.size()) {
    throw std::out_of_range("forward_loss: label out of range");
  }
  const auto noisy = corrected_probs(transition_, clean_probs);
  return -std::log(std::max(noisy[observed_label], epsilon_clip_));
}

std::vector<double> ForwardCorrectedLoss::forward_loss_grad(std::span<const double> logits,
                                                            std::size_t observed_label) const {
  std::vector<double> grad(logits.size());
  evaluate(logits, observed_label, grad);
  return grad;
}

double ForwardCorrectedLoss::evaluate(std::span<const double> logits, std::size_t label,
                                      std::span<double> grad_logits) const {
  const std::size_t c = transition_.size();
  if (logits.size() != c || grad_logits.size() != c) {
    throw std::invalid_argument("ForwardCorrectedLoss: logit size does not match transition");
  }
  if (label >= c) throw std::out_of_range("ForwardCorrectedLoss: label out of range");

  // grad_logits holds softmax(h) until it is overwritten below
  nn::softmax_into(logits, grad_logits);
  double q_label = 0.0;
  for (std::size_t j = 0; j < c; ++j) q_label += transition_(label, j) * grad_logits[j];

  if (!(q_label >= epsilon_clip_)) {
    // clipped branch is constant in the logits
    for (double& g : grad_logits) g = 0.0;
    return -std::log(epsilon_clip_);
  }
  // d/dh_k [-log sum_j Q_ij p_j] = p_k - Q_ik p_k / q_i
  for (std::size_t k = 0; k < c; ++k) {
    const double pk = grad_logits[k];
    grad_logits[k] = pk - (transition_(label, k) * pk) / q_label;
  }
  return -std::log(q_label);
}

}  // namespace fedefc::correction
