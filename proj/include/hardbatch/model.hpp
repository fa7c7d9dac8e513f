#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

struct DenseLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out

  bool operator==(const DenseLayer&) const = default;
};

/// One named parameter array. `decays` is false for biases.
struct ParamTensor {
  std::string name;
  std::span<double> values;
  bool decays;
};

struct ConstParamTensor {
  std::string name;
  std::span<const double> values;
  bool decays;
};

/// MLP feature extractor (ReLU between layers, linear last layer) plus two
/// heads on the embedding x:
///   id head     id_logits = x W^T          (no bias; rows of W are class centers)
///   scene head  scene_logits = x S^T + s   (sits behind gradient reversal)
struct ModelParams {
  std::vector<DenseLayer> layers;
  Matrix class_weights;  // C x L
  Matrix scene_weights;  // T x L
  std::vector<double> scene_bias;

  std::size_t input_dim() const;
  std::size_t embedding_dim() const;
  std::size_t num_classes() const { return class_weights.rows(); }
  std::size_t num_scenes() const { return scene_weights.rows(); }
  std::vector<std::size_t> hidden_sizes() const;

  /// Fixed traversal order: layer weights/biases, class weights, scene
  /// weights, scene bias. Used by SGD, checkpoints and gradient checks.
  std::vector<ParamTensor> tensors();
  std::vector<ConstParamTensor> tensors() const;
  std::size_t parameter_count() const;

  /// Same shapes, all zeros.
  ModelParams zeros_like() const;

  /// Throws std::invalid_argument if the layer chain or heads are inconsistent.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

using ParamGrads = ModelParams;

struct ModelDims {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t embedding_dim = 0;
  std::size_t num_classes = 0;
  std::size_t num_scenes = 0;
};

/// Glorot-uniform weights, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
/// for every weight matrix including both heads. Biases start at zero.
ModelParams init_params(Rng& rng, const ModelDims& dims);

struct ForwardTrace {
  Matrix inputs;
  std::vector<Matrix> pre_activations;  // one per layer
  std::vector<Matrix> activations;      // post-ReLU for hidden layers; last == embeddings
  Matrix embeddings;                    // batch x L
  Matrix id_logits;                     // batch x C
  Matrix scene_logits;                  // batch x T
};

ForwardTrace forward(const ModelParams& params, const Matrix& inputs);

/// Embeddings only (no caches kept).
Matrix embed(const ModelParams& params, const Matrix& inputs);

/// Scale on the scene branch's gradient as it enters the extractor: the
/// extractor sees -lambda * dL_adv/dx while the scene head itself gets the
/// plain +dL_adv gradient.
struct GradReversalCoeff {
  explicit GradReversalCoeff(double lambda);
  double lambda;
};

/// Exact gradients given upstream gradients w.r.t. embeddings, id_logits and
/// scene_logits. An empty grad_scene_logits matrix means the scene branch is
/// absent.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const Matrix& grad_embeddings, const Matrix& grad_id_logits,
                    const Matrix& grad_scene_logits, GradReversalCoeff grl);

struct SgdOptions {
  double lr = 0.008;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Classic momentum with L2 added to the gradient (weights only):
///   v <- momentum * v + g + weight_decay * p
///   p <- p - lr * v
void sgd_step(ModelParams& params, const ParamGrads& grads, ModelParams& velocity,
              const SgdOptions& options);

/// base_lr * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// Row-wise x / |x| and its backward pass, for the optional normalized
/// embedding mode.
Matrix l2_normalize_rows(const Matrix& x);
Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& grad_normalized);

}  // namespace hardbatch
