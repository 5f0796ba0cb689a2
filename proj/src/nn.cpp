#include "fedefc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fedefc/rng.hpp"

namespace fedefc::nn {

void ModelSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("ModelSpec: input_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("ModelSpec: num_classes must be >= 2");
  for (auto h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("ModelSpec: hidden layer width must be positive");
  }
}

std::size_t ModelSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t ModelSpec::fan_out(std::size_t layer) const {
  return layer == hidden_dims.size() ? num_classes : hidden_dims[layer];
}

std::size_t ModelSpec::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += (fan_in(l) + 1) * fan_out(l);
  return off;
}

std::size_t ModelSpec::param_count() const { return layer_offset(num_layers()); }

bool ModelParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

OptimizerState OptimizerState::fresh(std::size_t num_params, double learning_rate,
                                     double momentum) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0,1)");
  return OptimizerState{std::vector<double>(num_params, 0.0), learning_rate, momentum};
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p{spec, std::vector<double>(spec.param_count(), 0.0)};
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.fan_in(l);
    const std::size_t out = spec.fan_out(l);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-scale, scale);
    double* w = p.values.data() + spec.layer_offset(l);
    for (std::size_t k = 0; k < in * out; ++k) w[k] = dist(rng);
    // biases stay zero
  }
  return p;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  // keep every entry strictly inside (0, 1) even when the gap between logits
  // exceeds what a double can resolve
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::clamp(out[i] / sum, lo, hi);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace {

void check_params(const ModelParams& params) {
  if (params.values.size() != params.spec.param_count()) {
    throw std::invalid_argument("ModelParams: length does not match spec");
  }
}

// Forward pass keeping every layer's pre-activation for backprop.
// acts[0] = x, acts[l+1] = relu(pre[l]) for hidden layers, pre.back() = logits.
struct Trace {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
};

void run_forward(const ModelParams& params, std::span<const double> x, Trace& trace) {
  const ModelSpec& spec = params.spec;
  const std::size_t layers = spec.num_layers();
  trace.acts.resize(layers);
  trace.pre.resize(layers);
  trace.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.fan_in(l);
    const std::size_t out = spec.fan_out(l);
    const double* w = params.values.data() + spec.layer_offset(l);
    const double* b = w + in * out;
    const std::vector<double>& a = trace.acts[l];
    std::vector<double>& z = trace.pre[l];
    z.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    if (l + 1 < layers) {
      std::vector<double>& next = trace.acts[l + 1];
      next.resize(out);
      for (std::size_t o = 0; o < out; ++o) next[o] = z[o] > 0.0 ? z[o] : 0.0;
    }
  }
}

}  // namespace

std::vector<double> logits(const ModelParams& params, std::span<const double> x) {
  check_params(params);
  if (x.size() != params.spec.input_dim) {
    throw std::invalid_argument("forward: expected " + std::to_string(params.spec.input_dim) +
                                " features, got " + std::to_string(x.size()));
  }
  Trace trace;
  run_forward(params, x, trace);
  return std::move(trace.pre.back());
}

std::vector<double> forward(const ModelParams& params, std::span<const double> x) {
  return softmax(logits(params, x));
}

RowMatrix predict_proba(const ModelParams& params, const RowMatrix& features) {
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return predict_proba(params, features, rows);
}

RowMatrix predict_proba(const ModelParams& params, const RowMatrix& features,
                        std::span<const std::size_t> rows) {
  check_params(params);
  if (features.cols() != params.spec.input_dim) {
    throw std::invalid_argument("predict_proba: feature width does not match model input_dim");
  }
  RowMatrix out(rows.size(), params.spec.num_classes);
  Trace trace;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    run_forward(params, features.row(rows[r]), trace);
    softmax_into(trace.pre.back(), out.row(r));
  }
  return out;
}

double CrossEntropyLoss::evaluate(std::span<const double> logits, std::size_t label,
                                  std::span<double> grad_logits) const {
  softmax_into(logits, grad_logits);
  const double loss = -std::log(grad_logits[label]);
  grad_logits[label] -= 1.0;
  return loss;
}

LossAndGrad loss_and_grad(const ModelParams& params, const Batch& batch, const LogitLoss& loss) {
  check_params(params);
  const ModelSpec& spec = params.spec;
  const std::size_t d = spec.input_dim;
  const std::size_t n = batch.labels.size();
  if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (batch.features.size() != n * d) {
    throw std::invalid_argument("loss_and_grad: feature block does not match batch size");
  }

  LossAndGrad result{0.0, std::vector<double>(params.size(), 0.0)};
  const std::size_t layers = spec.num_layers();
  Trace trace;
  std::vector<double> delta(spec.num_classes);
  std::vector<double> prev_delta;

  for (std::size_t s = 0; s < n; ++s) {
    const int label = batch.labels[s];
    if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes) {
      throw std::out_of_range("loss_and_grad: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(spec.num_classes) + ")");
    }
    run_forward(params, batch.features.subspan(s * d, d), trace);
    delta.resize(spec.num_classes);
    result.loss += loss.evaluate(trace.pre.back(), static_cast<std::size_t>(label), delta);

    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = spec.fan_in(l);
      const std::size_t out = spec.fan_out(l);
      const std::size_t off = spec.layer_offset(l);
      double* gw = result.grad.data() + off;
      double* gb = gw + in * out;
      const std::vector<double>& a = trace.acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = delta[o];
        if (g == 0.0) continue;
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * a[i];
        gb[o] += g;
      }
      if (l == 0) break;
      const double* w = params.values.data() + off;
      const std::vector<double>& z_prev = trace.pre[l - 1];
      prev_delta.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = delta[o];
        if (g == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * g;
      }
      for (std::size_t i = 0; i < in; ++i) {
        if (!(z_prev[i] > 0.0)) prev_delta[i] = 0.0;
      }
      delta.swap(prev_delta);
    }
  }

  const double inv = 1.0 / static_cast<double>(n);
  result.loss *= inv;
  for (double& g : result.grad) g *= inv;
  return result;
}

void sgd_step(ModelParams& params, std::span<const double> grads, OptimizerState& state) {
  if (grads.size() != params.size() || state.momentum_buffer.size() != params.size()) {
    throw std::invalid_argument("sgd_step: length mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::domain_error("sgd_step: non-finite gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& buf = state.momentum_buffer[i];
    buf = state.momentum * buf + grads[i];
    params.values[i] -= state.learning_rate * buf;
  }
}

ModelParams weighted_average(std::span<const ModelParams> params, std::span<const double> weights) {
  if (params.empty()) throw std::invalid_argument("weighted_average: no models");
  if (weights.size() != params.size()) {
    throw std::invalid_argument("weighted_average: weight count does not match model count");
  }
  const ModelParams& anchor = params.front();
  double total = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].values.size() != anchor.values.size() || !(params[k].spec == anchor.spec)) {
      throw std::invalid_argument("weighted_average: parameter length mismatch");
    }
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k])) {
      throw std::invalid_argument("weighted_average: weights must be finite and nonnegative");
    }
    total += weights[k];
  }
  if (!(total > 0.0)) throw std::invalid_argument("weighted_average: weight sum is zero");

  // Accumulate offsets from the first model so identical inputs reproduce
  // the input exactly.
  ModelParams out = anchor;
  for (std::size_t k = 1; k < params.size(); ++k) {
    const double share = weights[k] / total;
    if (share == 0.0) continue;
    const auto& v = params[k].values;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] += share * (v[i] - anchor.values[i]);
    }
  }
  return out;
}

}  // namespace fedefc::nn
