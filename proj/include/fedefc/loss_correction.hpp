#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedefc/matrix.hpp"
#include "fedefc/nn.hpp"

namespace fedefc::correction {

/// out_i = sum_j Q(i, j) * clean_probs[j]: the model's clean-class
/// probabilities pushed through the noise channel onto observed labels.
std::vector<double> corrected_probs(const TransitionMatrix& q, std::span<const double> clean_probs);

inline constexpr double kDefaultEpsilonClip = 1e-8;
inline constexpr double kSingularDeterminant = 1e-8;

/// Forward-corrected cross-entropy: -log(max((Q softmax(h))_i, eps)) for an
/// example observed as i. Plugs into nn::loss_and_grad.
class ForwardCorrectedLoss final : public nn::LogitLoss {
 public:
  /// Throws std::invalid_argument unless `transition` is column-stochastic and
  /// epsilon_clip is in (0, 1e-3]. A near-singular transition is accepted;
  /// check is_nonsingular() to report it.
  explicit ForwardCorrectedLoss(TransitionMatrix transition,
                                double epsilon_clip = kDefaultEpsilonClip);

  const TransitionMatrix& transition() const { return transition_; }
  double epsilon_clip() const { return epsilon_clip_; }
  /// |det Q| > 1e-8
  bool is_nonsingular() const;

  double forward_loss(std::span<const double> clean_probs, std::size_t observed_label) const;
  std::vector<double> forward_loss_grad(std::span<const double> logits,
                                        std::size_t observed_label) const;

  double evaluate(std::span<const double> logits, std::size_t label,
                  std::span<double> grad_logits) const override;

 private:
  TransitionMatrix transition_;
  double epsilon_clip_;
};

}  // namespace fedefc::correction
