#include "hardbatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hardbatch {

namespace {

constexpr double kNormFloor = 1e-12;

void fill_glorot(Matrix& w, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double& v : w.values()) v = (2.0 * rng.next_uniform() - 1.0) * a;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("backward: shape mismatch for ") + what +
                                " (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

std::size_t ModelParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t ModelParams::embedding_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::vector<std::size_t> ModelParams::hidden_sizes() const {
  std::vector<std::size_t> h;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) h.push_back(layers[i].weight.rows());
  return h;
}

std::vector<ParamTensor> ModelParams::tensors() {
  std::vector<ParamTensor> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({"layer" + std::to_string(i) + ".weight", layers[i].weight.values(), true});
    out.push_back({"layer" + std::to_string(i) + ".bias", layers[i].bias, false});
  }
  out.push_back({"class_weights", class_weights.values(), true});
  out.push_back({"scene_weights", scene_weights.values(), true});
  out.push_back({"scene_bias", scene_bias, false});
  return out;
}

std::vector<ConstParamTensor> ModelParams::tensors() const {
  std::vector<ConstParamTensor> out;
  for (auto& t : const_cast<ModelParams*>(this)->tensors()) {
    out.push_back({std::move(t.name), t.values, t.decays});
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& t : z.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
  return z;
}

void ModelParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("model: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0) {
      throw std::invalid_argument("model: layer " + std::to_string(i) + " has a zero dimension");
    }
    if (l.bias.size() != l.weight.rows()) {
      throw std::invalid_argument("model: layer " + std::to_string(i) + " bias length mismatch");
    }
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
      throw std::invalid_argument("model: layer " + std::to_string(i) +
                                  " input width does not chain from previous layer");
    }
  }
  const std::size_t emb = embedding_dim();
  if (class_weights.cols() != emb || scene_weights.cols() != emb) {
    throw std::invalid_argument("model: head width != embedding dim");
  }
  if (class_weights.rows() < 2) throw std::invalid_argument("model: need C >= 2 classes");
  if (scene_weights.rows() < 2) throw std::invalid_argument("model: need T >= 2 scenes");
  if (scene_bias.size() != scene_weights.rows()) {
    throw std::invalid_argument("model: scene bias length mismatch");
  }
}

ModelParams init_params(Rng& rng, const ModelDims& dims) {
  if (dims.input_dim == 0 || dims.embedding_dim == 0 || dims.num_classes == 0 ||
      dims.num_scenes == 0 ||
      std::any_of(dims.hidden.begin(), dims.hidden.end(), [](std::size_t h) { return h == 0; })) {
    throw std::invalid_argument("init_params: all dimensions must be >= 1");
  }
  ModelParams p;
  std::size_t in = dims.input_dim;
  std::vector<std::size_t> widths = dims.hidden;
  widths.push_back(dims.embedding_dim);
  for (std::size_t out : widths) {
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    fill_glorot(layer.weight, rng);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  p.class_weights = Matrix(dims.num_classes, dims.embedding_dim);
  fill_glorot(p.class_weights, rng);
  p.scene_weights = Matrix(dims.num_scenes, dims.embedding_dim);
  fill_glorot(p.scene_weights, rng);
  p.scene_bias.assign(dims.num_scenes, 0.0);
  return p;
}

ForwardTrace forward(const ModelParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim()) {
    throw std::invalid_argument("forward: input width " + std::to_string(inputs.cols()) +
                                " != model input dim " + std::to_string(params.input_dim()));
  }
  if (!all_finite(inputs.values())) {
    throw std::invalid_argument("forward: non-finite input");
  }
  ForwardTrace t;
  t.inputs = inputs;
  const Matrix* current = &t.inputs;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    Matrix pre = matmul_transposed(*current, layer.weight);
    for (std::size_t r = 0; r < pre.rows(); ++r)
      for (std::size_t c = 0; c < pre.cols(); ++c) pre(r, c) += layer.bias[c];
    Matrix post = pre;
    if (li + 1 < params.layers.size()) {
      for (double& v : post.values()) v = std::max(0.0, v);
    }
    t.pre_activations.push_back(std::move(pre));
    t.activations.push_back(std::move(post));
    current = &t.activations.back();
  }
  t.embeddings = t.activations.back();
  t.id_logits = matmul_transposed(t.embeddings, params.class_weights);
  t.scene_logits = matmul_transposed(t.embeddings, params.scene_weights);
  for (std::size_t r = 0; r < t.scene_logits.rows(); ++r)
    for (std::size_t c = 0; c < t.scene_logits.cols(); ++c)
      t.scene_logits(r, c) += params.scene_bias[c];
  return t;
}

Matrix embed(const ModelParams& params, const Matrix& inputs) {
  return forward(params, inputs).embeddings;
}

GradReversalCoeff::GradReversalCoeff(double lambda_) : lambda(lambda_) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("GradReversalCoeff: lambda must be finite and >= 0");
  }
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const Matrix& grad_embeddings, const Matrix& grad_id_logits,
                    const Matrix& grad_scene_logits, GradReversalCoeff grl) {
  const std::size_t batch = trace.embeddings.rows();
  const std::size_t emb = params.embedding_dim();
  if (trace.pre_activations.size() != params.layers.size()) {
    throw std::invalid_argument("backward: trace does not match model depth");
  }
  require_same_shape(grad_embeddings, trace.embeddings, "grad_embeddings");
  require_same_shape(grad_id_logits, trace.id_logits, "grad_id_logits");
  const bool scene_branch = !grad_scene_logits.empty();
  if (scene_branch) require_same_shape(grad_scene_logits, trace.scene_logits, "grad_scene_logits");

  ParamGrads g = params.zeros_like();

  // Heads. dW = G^T X for a head computing X W^T.
  Matrix dx = grad_embeddings;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto x = trace.embeddings.row(i);
    for (std::size_t c = 0; c < params.num_classes(); ++c) {
      const double gl = grad_id_logits(i, c);
      if (gl == 0.0) continue;
      auto wrow = params.class_weights.row(c);
      auto grow = g.class_weights.row(c);
      for (std::size_t k = 0; k < emb; ++k) {
        grow[k] += gl * x[k];
        dx(i, k) += gl * wrow[k];
      }
    }
    if (!scene_branch) continue;
    for (std::size_t t = 0; t < params.num_scenes(); ++t) {
      const double gs = grad_scene_logits(i, t);
      if (gs == 0.0) continue;
      auto srow = params.scene_weights.row(t);
      auto grow = g.scene_weights.row(t);
      g.scene_bias[t] += gs;
      for (std::size_t k = 0; k < emb; ++k) {
        grow[k] += gs * x[k];
        dx(i, k) -= grl.lambda * gs * srow[k];
      }
    }
  }

  // Extractor, last layer first.
  Matrix upstream = std::move(dx);
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    auto& gl = g.layers[li];
    const Matrix& pre = trace.pre_activations[li];
    const Matrix& layer_in = li == 0 ? trace.inputs : trace.activations[li - 1];
    Matrix dpre = upstream;
    if (li + 1 < params.layers.size()) {
      for (std::size_t n = 0; n < dpre.size(); ++n) {
        if (pre.values()[n] <= 0.0) dpre.values()[n] = 0.0;
      }
    }
    Matrix din(batch, layer.weight.cols());
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t o = 0; o < layer.weight.rows(); ++o) {
        const double d = dpre(i, o);
        if (d == 0.0) continue;
        gl.bias[o] += d;
        auto wrow = layer.weight.row(o);
        auto grow = gl.weight.row(o);
        for (std::size_t k = 0; k < wrow.size(); ++k) {
          grow[k] += d * layer_in(i, k);
          din(i, k) += d * wrow[k];
        }
      }
    }
    upstream = std::move(din);
  }
  return g;
}

void sgd_step(ModelParams& params, const ParamGrads& grads, ModelParams& velocity,
              const SgdOptions& options) {
  if (options.lr < 0.0) throw std::invalid_argument("sgd_step: negative learning rate");
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto v = velocity.tensors();
  if (g.size() != p.size() || v.size() != p.size()) {
    throw std::invalid_argument("sgd_step: gradient/velocity structure mismatch");
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].values.size() != p[t].values.size() || v[t].values.size() != p[t].values.size()) {
      throw std::invalid_argument("sgd_step: shape mismatch in " + p[t].name);
    }
    const double wd = p[t].decays ? options.weight_decay : 0.0;
    for (std::size_t i = 0; i < p[t].values.size(); ++i) {
      double& param = p[t].values[i];
      double& vel = v[t].values[i];
      vel = options.momentum * vel + g[t].values[i] + wd * param;
      param -= options.lr * vel;
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  if (step > total_steps) throw std::invalid_argument("cosine_lr: step > total_steps");
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = std::max(norm(x.row(i)), kNormFloor);
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& grad_normalized) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = std::max(norm(x.row(i)), kNormFloor);
    const double proj = dot(x.row(i), grad_normalized.row(i)) / (n * n);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      out(i, k) = (grad_normalized(i, k) - x(i, k) * proj) / n;
    }
  }
  return out;
}

}  // namespace hardbatch
