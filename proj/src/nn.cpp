#include "masafl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "masafl/error.hpp"
#include "masafl/random.hpp"

namespace masafl {
namespace {

void check_batch(const ModelState& model, std::span<const LabeledExample> batch) {
  if (model.layers().empty()) {
    throw ConfigError("model has no layers");
  }
  for (const auto& ex : batch) {
    if (ex.pixels.size() != model.input_dim()) {
      throw ConfigError("example has " + std::to_string(ex.pixels.size()) +
                        " pixels but the model expects " + std::to_string(model.input_dim()));
    }
  }
}

Matrix input_matrix(std::span<const LabeledExample> batch, std::size_t dim) {
  Matrix x(batch.size(), dim);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    std::copy(batch[r].pixels.begin(), batch[r].pixels.end(), x.data.begin() + r * dim);
  }
  return x;
}

// z = a W^T + b
Matrix affine(const Matrix& a, const DenseLayer& layer) {
  Matrix z(a.rows, layer.outputs);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* in = a.data.data() + r * a.cols;
    double* out = z.data.data() + r * z.cols;
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = layer.weights.data() + o * layer.inputs;
      double s = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) s += w[i] * in[i];
      out[o] = s;
    }
  }
  return z;
}

void relu_inplace(Matrix& m) {
  for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

}  // namespace

ModelState::ModelState(std::vector<std::size_t> shape_signature) : shape_(std::move(shape_signature)) {
  if (shape_.size() < 2) {
    throw ConfigError("an MLP needs at least input and output widths");
  }
  for (std::size_t w : shape_) {
    if (w == 0) throw ConfigError("layer width must be positive");
  }
  layers_.reserve(shape_.size() - 1);
  for (std::size_t l = 0; l + 1 < shape_.size(); ++l) {
    DenseLayer layer;
    layer.inputs = shape_[l];
    layer.outputs = shape_[l + 1];
    layer.weights.assign(layer.inputs * layer.outputs, 0.0);
    layer.bias.assign(layer.outputs, 0.0);
    layers_.push_back(std::move(layer));
  }
}

std::size_t ModelState::parameter_count() const noexcept { return masafl::parameter_count(shape_); }

std::size_t parameter_count(std::span<const std::size_t> shape_signature) {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < shape_signature.size(); ++l) {
    d += shape_signature[l] * shape_signature[l + 1] + shape_signature[l + 1];
  }
  return d;
}

ModelState make_mlp(std::vector<std::size_t> shape_signature, std::uint64_t seed) {
  ModelState model(std::move(shape_signature));
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::kModelInit)}));
  for (auto& layer : model.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs));
    for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
  }
  return model;
}

ParamVector flatten(const ModelState& model) {
  ParamVector out(model.parameter_count());
  std::size_t k = 0;
  for (const auto& layer : model.layers()) {
    for (double w : layer.weights) out[k++] = w;
    for (double b : layer.bias) out[k++] = b;
  }
  return out;
}

ModelState unflatten(const ParamVector& values, std::span<const std::size_t> shape_signature) {
  ModelState model(std::vector<std::size_t>(shape_signature.begin(), shape_signature.end()));
  if (values.size() != model.parameter_count()) {
    throw ConfigError("cannot unflatten " + std::to_string(values.size()) +
                      " values into a model with " + std::to_string(model.parameter_count()) +
                      " parameters");
  }
  std::size_t k = 0;
  for (auto& layer : model.layers()) {
    for (auto& w : layer.weights) w = values[k++];
    for (auto& b : layer.bias) b = values[k++];
  }
  return model;
}

void apply_delta(ModelState& model, const ParamVector& delta) {
  if (delta.size() != model.parameter_count()) {
    throw ConfigError("delta length " + std::to_string(delta.size()) +
                      " does not match model parameter count " +
                      std::to_string(model.parameter_count()));
  }
  std::size_t k = 0;
  for (auto& layer : model.layers()) {
    for (auto& w : layer.weights) w += delta[k++];
    for (auto& b : layer.bias) b += delta[k++];
  }
}

Matrix forward(const ModelState& model, std::span<const LabeledExample> batch) {
  check_batch(model, batch);
  Matrix a = input_matrix(batch, model.input_dim());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    a = affine(a, layers[l]);
    if (l + 1 < layers.size()) relu_inplace(a);
  }
  return a;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      const double e = std::exp(row[c] - mx);
      p(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < logits.cols; ++c) p(r, c) /= z;
  }
  return p;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows == 0) {
    throw ArgumentError("cross_entropy of an empty batch");
  }
  if (labels.size() != logits.rows) {
    throw ArgumentError("cross_entropy: label count does not match batch size");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
      throw ArgumentError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(logits.cols) + ")");
    }
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) - (row[static_cast<std::size_t>(y)] - mx);
  }
  return total / static_cast<double>(logits.rows);
}

std::vector<int> labels_of(std::span<const LabeledExample> batch) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& ex : batch) labels.push_back(ex.label);
  return labels;
}

std::vector<int> predict(const ModelState& model, std::span<const LabeledExample> batch) {
  const Matrix logits = forward(model, batch);
  std::vector<int> out(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

LossAndGradient loss_and_gradient(const ModelState& model, std::span<const LabeledExample> batch) {
  check_batch(model, batch);
  if (batch.empty()) {
    throw ArgumentError("gradient of an empty batch");
  }
  const auto& layers = model.layers();
  const std::size_t n_layers = layers.size();

  // activations[l] is the input to layer l; activations[n_layers] the logits.
  std::vector<Matrix> activations;
  activations.reserve(n_layers + 1);
  activations.push_back(input_matrix(batch, model.input_dim()));
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix z = affine(activations.back(), layers[l]);
    if (l + 1 < n_layers) relu_inplace(z);
    activations.push_back(std::move(z));
  }

  const std::vector<int> labels = labels_of(batch);
  LossAndGradient result;
  result.loss = cross_entropy(activations.back(), labels);

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Matrix delta = softmax(activations.back());
  for (std::size_t r = 0; r < delta.rows; ++r) {
    delta(r, static_cast<std::size_t>(labels[r])) -= 1.0;
  }
  for (auto& v : delta.data) v *= inv_batch;

  // Per-layer gradients, assembled into flatten order afterwards.
  std::vector<std::vector<double>> grad_w(n_layers);
  std::vector<std::vector<double>> grad_b(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const Matrix& a_prev = activations[l];
    auto& gw = grad_w[l];
    auto& gb = grad_b[l];
    gw.assign(layer.outputs * layer.inputs, 0.0);
    gb.assign(layer.outputs, 0.0);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* a = a_prev.data.data() + r * a_prev.cols;
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        gb[o] += d;
        double* g = gw.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) g[i] += d * a[i];
      }
    }
    if (l == 0) break;
    Matrix prev(delta.rows, layer.inputs);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      double* p = prev.data.data() + r * layer.inputs;
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        const double* w = layer.weights.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) p[i] += d * w[i];
      }
      // ReLU derivative, taken as 0 at the kink.
      const double* a = a_prev.data.data() + r * a_prev.cols;
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        if (a[i] <= 0.0) p[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }

  result.gradient = ParamVector(model.parameter_count());
  std::size_t k = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (double g : grad_w[l]) result.gradient[k++] = g;
    for (double g : grad_b[l]) result.gradient[k++] = g;
  }
  return result;
}

ParamVector backward(const ModelState& model, std::span<const LabeledExample> batch) {
  return loss_and_gradient(model, batch).gradient;
}

OptimizerState OptimizerState::for_model(const ModelState& model, double learning_rate,
                                         double momentum) {
  if (!(learning_rate >= 0.0)) {
    throw ConfigError("learning rate must be non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  OptimizerState opt;
  opt.momentum_buffer = ParamVector(model.parameter_count());
  opt.learning_rate = learning_rate;
  opt.momentum = momentum;
  return opt;
}

void sgd_step(ModelState& model, const ParamVector& grad, OptimizerState& opt,
              StepDirection direction) {
  if (grad.size() != model.parameter_count()) {
    throw ConfigError("gradient length does not match model parameter count");
  }
  if (opt.momentum_buffer.size() != grad.size()) {
    throw ConfigError("momentum buffer length does not match model parameter count");
  }
  if (!grad.all_finite()) {
    throw NumericError("non-finite gradient passed to sgd_step");
  }
  auto& buf = opt.momentum_buffer;
  for (std::size_t i = 0; i < grad.size(); ++i) buf[i] = opt.momentum * buf[i] + grad[i];
  const double step = direction == StepDirection::kDescend ? -opt.learning_rate : opt.learning_rate;
  std::size_t k = 0;
  for (auto& layer : model.layers()) {
    for (auto& w : layer.weights) w += step * buf[k++];
    for (auto& b : layer.bias) b += step * buf[k++];
  }
}

}  // namespace masafl
