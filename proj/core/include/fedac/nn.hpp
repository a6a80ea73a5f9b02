#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fedac/matrix.hpp"
#include "fedac/rng.hpp"

namespace fedac {

enum class Activation { kRelu, kTanh };

/// Architecture of a fully connected classifier. The parameter vector splits
/// into an embedding part (all layers except the last) and a decision part
/// (the final fully connected layer).
struct MlpSpec {
  std::vector<int> layer_sizes;  // input dim, hidden dims..., class count
  Activation activation = Activation::kRelu;

  int input_dim() const { return layer_sizes.front(); }
  int class_count() const { return layer_sizes.back(); }
  int weight_layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }

  /// Parameters of weight layer l: (out x in) weights followed by out biases.
  std::size_t layer_param_count(int l) const;
  std::size_t layer_offset(int l) const;
  std::size_t total_params() const;
  /// Offset separating embedding parameters from the decision layer.
  std::size_t split_index() const;

  /// Throws config_error unless there is at least one hidden layer and every
  /// size is positive.
  void validate() const;
};

/// A model (client or cluster center) as a flat parameter vector.
struct ParamVector {
  std::vector<double> values;
  std::size_t split_index = 0;

  ParamVector() = default;
  ParamVector(std::vector<double> v, std::size_t split) : values(std::move(v)), split_index(split) {}

  std::size_t size() const { return values.size(); }

  std::span<const double> embedding() const { return {values.data(), split_index}; }
  std::span<const double> decision() const {
    return {values.data() + split_index, values.size() - split_index};
  }

  /// Throws shape_error on an out-of-range split, numeric_error on
  /// non-finite entries.
  void validate() const;

  bool operator==(const ParamVector&) const = default;
};

struct Batch {
  RealMatrix features;      // batch x input dim
  std::vector<int> labels;  // class indices

  int size() const { return features.rows; }
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Seeded uniform initialization, each layer in [-s, s] with s = 1/sqrt(fan_in);
/// biases start at zero.
ParamVector init_params(const MlpSpec& spec, Rng& rng);

/// Class probabilities, one row per input row. Hidden layers apply the
/// configured activation, the head is a softmax.
RealMatrix forward(const MlpSpec& spec, const ParamVector& params, const RealMatrix& features);

/// Mean cross-entropy over the batch and its exact gradient.
LossAndGrad loss_and_grad(const MlpSpec& spec, const ParamVector& params, const Batch& batch);

/// One explicit regularized descent step:
///   w' = w - eta*grad - eta*mu*(w - center)          on every coordinate,
///   additionally - eta*lambda*(phi - global_embedding) on the embedding slice.
ParamVector regularized_step(const ParamVector& params, const ParamVector& grad,
                             const ParamVector& center, std::span<const double> global_embedding,
                             double eta, double mu, double lambda);

/// Copies of the embedding and decision slices; concatenating them recovers
/// the input exactly.
std::pair<std::vector<double>, std::vector<double>> split_params(const ParamVector& params);

}  // namespace fedac
