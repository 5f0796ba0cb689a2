#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedefc/matrix.hpp"

namespace fedefc::nn {

enum class Activation { relu };

/// Dense feed-forward classifier shape: input_dim -> hidden_dims... -> num_classes.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  /// Throws std::invalid_argument on a zero dimension or num_classes < 2.
  void validate() const;
  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  /// Offset of a layer's block in the flat vector. Each block stores the
  /// fan_out x fan_in weights row-major followed by fan_out biases.
  std::size_t layer_offset(std::size_t layer) const;
  std::size_t param_count() const;

  bool operator==(const ModelSpec&) const = default;
};

struct ModelParams {
  ModelSpec spec;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool all_finite() const;
};

struct OptimizerState {
  std::vector<double> momentum_buffer;
  double learning_rate = 0.01;
  double momentum = 0.0;

  static OptimizerState fresh(std::size_t num_params, double learning_rate, double momentum);
};

/// Loss on a single sample expressed over the output logits. Implementations
/// write dloss/dlogits into `grad_logits` and return the loss value.
class LogitLoss {
 public:
  virtual ~LogitLoss() = default;
  virtual double evaluate(std::span<const double> logits, std::size_t label,
                          std::span<double> grad_logits) const = 0;
};

/// -log softmax(logits)[label]
class CrossEntropyLoss final : public LogitLoss {
 public:
  double evaluate(std::span<const double> logits, std::size_t label,
                  std::span<double> grad_logits) const override;
};

/// Contiguous mini-batch: `features` is row-major with input_dim columns.
struct Batch {
  std::span<const double> features;
  std::span<const int> labels;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

/// Stable softmax (max logit subtracted before exponentiation).
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

std::vector<double> logits(const ModelParams& params, std::span<const double> x);
std::vector<double> forward(const ModelParams& params, std::span<const double> x);

/// Class probabilities for every row of `features`.
RowMatrix predict_proba(const ModelParams& params, const RowMatrix& features);
/// Same, restricted to the listed rows (output row r corresponds to rows[r]).
RowMatrix predict_proba(const ModelParams& params, const RowMatrix& features,
                        std::span<const std::size_t> rows);

std::size_t argmax(std::span<const double> v);

/// Mean loss over the batch and its exact gradient w.r.t. every parameter.
LossAndGrad loss_and_grad(const ModelParams& params, const Batch& batch, const LogitLoss& loss);

/// buffer <- momentum * buffer + grads; params <- params - lr * buffer.
void sgd_step(ModelParams& params, std::span<const double> grads, OptimizerState& state);

ModelParams weighted_average(std::span<const ModelParams> params, std::span<const double> weights);

}  // namespace fedefc::nn
