#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "masafl/dataset.hpp"
#include "masafl/param_vector.hpp"

namespace masafl {

// Row-major dense matrix, used for activations and logits.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Fully connected layer y = W x + b, W stored out x in, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Multilayer perceptron. Hidden layers use ReLU; the last layer emits logits.
class ModelState {
 public:
  ModelState() = default;
  // Zero-initialized network for the given layer widths {in, h1, ..., out}.
  explicit ModelState(std::vector<std::size_t> shape_signature);

  const std::vector<std::size_t>& shape_signature() const noexcept { return shape_; }
  std::size_t parameter_count() const noexcept;
  std::size_t input_dim() const noexcept { return shape_.empty() ? 0 : shape_.front(); }
  std::size_t output_dim() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  friend bool operator==(const ModelState&, const ModelState&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<DenseLayer> layers_;
};

// Number of parameters (weights + biases) of an MLP with these widths.
std::size_t parameter_count(std::span<const std::size_t> shape_signature);

// He-uniform weights, zero biases.
ModelState make_mlp(std::vector<std::size_t> shape_signature, std::uint64_t seed);

// Weights layer by layer (row-major), each layer followed by its bias.
ParamVector flatten(const ModelState& model);
ModelState unflatten(const ParamVector& values, std::span<const std::size_t> shape_signature);
// model += delta, in flatten order.
void apply_delta(ModelState& model, const ParamVector& delta);

Matrix forward(const ModelState& model, std::span<const LabeledExample> batch);

// Mean over the batch of -log softmax(logits)[label], max-subtracted.
double cross_entropy(const Matrix& logits, std::span<const int> labels);
Matrix softmax(const Matrix& logits);

std::vector<int> labels_of(std::span<const LabeledExample> batch);
std::vector<int> predict(const ModelState& model, std::span<const LabeledExample> batch);

struct LossAndGradient {
  double loss = 0.0;
  ParamVector gradient;
};

// Cross-entropy of forward() and its exact gradient in flatten order.
LossAndGradient loss_and_gradient(const ModelState& model, std::span<const LabeledExample> batch);
ParamVector backward(const ModelState& model, std::span<const LabeledExample> batch);

struct OptimizerState {
  ParamVector momentum_buffer;
  double learning_rate = 0.1;
  double momentum = 0.0;

  static OptimizerState for_model(const ModelState& model, double learning_rate, double momentum);
};

enum class StepDirection { kDescend, kAscend };

// buffer <- momentum * buffer + grad; theta <- theta -/+ lr * buffer.
// Throws NumericError on a non-finite gradient.
void sgd_step(ModelState& model, const ParamVector& grad, OptimizerState& opt,
              StepDirection direction = StepDirection::kDescend);

}  // namespace masafl
