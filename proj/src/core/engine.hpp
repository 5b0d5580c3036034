#pragma once

// Fixed-vocabulary forward/backward kernels, templated on the arithmetic type.
// Layout is channels-last; conv weights are [kh][kw][ci][co], dense weights
// [in][out].

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "amcuq/common.hpp"
#include "amcuq/nncore.hpp"

namespace amcuq::nn::kernels {

// Aligned storage keeps Eigen's vectorized loops on the same split no matter
// which thread allocated the buffer, so sums are bitwise reproducible.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct LayerBuffers {
  Buffer<T> weights;
  Buffer<T> bias;
};

template <class T>
class Engine {
 public:
  explicit Engine(const ModelParams& model) : specs_(model.specs) {
    model.validate();
    layers_.resize(specs_.size());
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      layers_[l].weights.assign(model.params[l].weights.begin(), model.params[l].weights.end());
      layers_[l].bias.assign(model.params[l].bias.begin(), model.params[l].bias.end());
    }
    input_.resize(specs_.front().input_size());
    pre_.resize(specs_.size());
    out_.resize(specs_.size());
    mask_.resize(specs_.size());
    grad_in_.resize(specs_.size());
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      pre_[l].resize(specs_[l].output_size());
      out_[l].resize(specs_[l].output_size());
      grad_in_[l].resize(specs_[l].input_size());
    }
    grad_out_.resize(max_output());
    probs_.resize(specs_.back().output_size());
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::vector<LayerBuffers<T>>& layers() { return layers_; }
  const std::vector<LayerBuffers<T>>& layers() const { return layers_; }
  std::size_t input_size() const { return input_.size(); }
  std::size_t num_classes() const { return probs_.size(); }

  std::vector<LayerBuffers<T>> zero_gradients() const {
    std::vector<LayerBuffers<T>> g(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      g[l].weights.assign(layers_[l].weights.size(), T(0));
      g[l].bias.assign(layers_[l].bias.size(), T(0));
    }
    return g;
  }

  template <class In>
  const std::vector<double>& forward(std::span<const In> x, Mode mode, std::uint64_t dropout_seed) {
    if (x.size() != input_.size()) {
      fail(ErrorCode::shape_mismatch, "input has " + std::to_string(x.size()) + " values, model expects " +
                                          std::to_string(input_.size()));
    }
    std::transform(x.begin(), x.end(), input_.begin(), [](In v) { return static_cast<T>(v); });
    run_forward(mode, dropout_seed);
    return probs_;
  }

  /// Backpropagates the loss of the most recent forward pass. Parameter
  /// gradients are accumulated into `grads` when non-null; the input gradient
  /// is written to `input_grad` when non-null.
  void backward(const OneHotLabel& label, std::vector<LayerBuffers<T>>* grads, Buffer<T>* input_grad) {
    const std::size_t c = probs_.size();
    if (label.num_classes() != c) fail(ErrorCode::shape_mismatch, "label class count differs from model output");
    const std::size_t last = specs_.size() - 1;
    if (input_grad) input_grad->assign(input_.size(), T(0));
    // Inside the clipped region the loss is constant, so every gradient is 0.
    if (probs_[label.index()] < kProbClip) return;

    Buffer<T>& g = grad_out_;
    for (std::size_t j = 0; j < c; ++j) g[j] = static_cast<T>(probs_[j] - label[j]);

    for (std::size_t l = last + 1; l-- > 0;) {
      const LayerSpec& s = specs_[l];
      const std::size_t n_out = s.output_size();
      const bool need_input_grad = l > 0 || input_grad != nullptr;
      if (s.kind != LayerKind::softmax_output && s.kind != LayerKind::flatten) {
        apply_activation_grad(l, g.data(), n_out);
      }
      const T* in = l == 0 ? input_.data() : out_[l - 1].data();
      T* gin = grad_in_[l].data();
      LayerBuffers<T>* gl = grads ? &(*grads)[l] : nullptr;
      switch (s.kind) {
        case LayerKind::conv:
          conv_backward(s, layers_[l], in, g.data(), gl, need_input_grad ? gin : nullptr);
          break;
        case LayerKind::dense:
        case LayerKind::softmax_output:
          dense_backward(s, layers_[l], in, g.data(), gl, need_input_grad ? gin : nullptr);
          break;
        case LayerKind::flatten:
          std::copy_n(g.data(), n_out, gin);
          break;
      }
      if (l > 0) {
        std::copy_n(gin, s.input_size(), g.data());
      } else if (input_grad) {
        std::copy_n(gin, s.input_size(), input_grad->data());
      }
    }
  }

  void sgd_step(const std::vector<LayerBuffers<T>>& grads, T step) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& w = layers_[l].weights;
      auto& b = layers_[l].bias;
      const auto& gw = grads[l].weights;
      const auto& gb = grads[l].bias;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
    }
  }

  void write_back(ModelParams& model) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      model.params[l].weights.assign(layers_[l].weights.begin(), layers_[l].weights.end());
      model.params[l].bias.assign(layers_[l].bias.begin(), layers_[l].bias.end());
    }
  }

  /// Output of layer l after activation and dropout (for tests/diagnostics).
  const Buffer<T>& layer_output(std::size_t l) const { return out_[l]; }
  const Buffer<T>& layer_preactivation(std::size_t l) const { return pre_[l]; }

 private:
  std::size_t max_output() const {
    std::size_t m = 0;
    for (const auto& s : specs_) m = std::max({m, s.output_size(), s.input_size()});
    return m;
  }

  void run_forward(Mode mode, std::uint64_t dropout_seed) {
    Rng rng(dropout_seed);
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      const LayerSpec& s = specs_[l];
      const T* in = l == 0 ? input_.data() : out_[l - 1].data();
      T* z = pre_[l].data();
      T* a = out_[l].data();
      const std::size_t n = s.output_size();
      switch (s.kind) {
        case LayerKind::conv: conv_forward(s, layers_[l], in, z); break;
        case LayerKind::dense:
        case LayerKind::softmax_output: dense_forward(s, layers_[l], in, z); break;
        case LayerKind::flatten: std::copy_n(in, n, z); break;
      }
      if (s.kind == LayerKind::softmax_output) {
        softmax(z, n);
        std::copy_n(z, n, a);
        continue;
      }
      if (s.activation == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) a[i] = z[i] > T(0) ? z[i] : T(0);
      } else {
        std::copy_n(z, n, a);
      }
      auto& mask = mask_[l];
      if (mode == Mode::train && s.dropout_rate > 0.0) {
        mask.resize(n);
        const double rate = s.dropout_rate;
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        // Each 64-bit draw yields two 32-bit uniforms.
        const auto threshold = static_cast<std::uint64_t>(std::ldexp(rate, 32));
        for (std::size_t i = 0; i < n; i += 2) {
          const std::uint64_t bits = rng.bits();
          mask[i] = (bits & 0xffffffffULL) < threshold ? T(0) : keep_scale;
          if (i + 1 < n) mask[i + 1] = (bits >> 32) < threshold ? T(0) : keep_scale;
        }
        for (std::size_t i = 0; i < n; ++i) a[i] *= mask[i];
      } else {
        mask.clear();
      }
    }
  }

  void softmax(const T* logits, std::size_t n) {
    double peak = static_cast<double>(logits[0]);
    for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, static_cast<double>(logits[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs_[j] = std::exp(static_cast<double>(logits[j]) - peak);
      sum += probs_[j];
    }
    for (std::size_t j = 0; j < n; ++j) probs_[j] /= sum;
  }

  void apply_activation_grad(std::size_t l, T* g, std::size_t n) const {
    const auto& mask = mask_[l];
    if (!mask.empty()) {
      for (std::size_t i = 0; i < n; ++i) g[i] *= mask[i];
    }
    if (specs_[l].activation == Activation::relu) {
      const T* z = pre_[l].data();
      for (std::size_t i = 0; i < n; ++i) g[i] = z[i] > T(0) ? g[i] : T(0);
    }
  }

  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using PatchMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

  // A conv layer is a product of its patch matrix (positions x kh*kw*ci)
  // with the weights viewed as (kh*kw*ci) x co. When the kernel spans the
  // full width the patches are overlapping rows of the input itself.
  static bool patches_are_rows(const LayerSpec& s) { return s.out_w == 1 && s.kernel_w == s.in_w; }

  PatchMap patches(const LayerSpec& s, const T* in) {
    const auto positions = static_cast<Eigen::Index>(s.out_h * s.out_w);
    const auto depth = static_cast<Eigen::Index>(s.kernel_h * s.kernel_w * s.in_channels);
    if (patches_are_rows(s)) {
      return PatchMap(in, positions, depth, Eigen::OuterStride<>(static_cast<Eigen::Index>(s.in_w * s.in_channels)));
    }
    patch_buf_.resize(static_cast<std::size_t>(positions * depth));
    const std::size_t run = s.kernel_w * s.in_channels;
    T* dst = patch_buf_.data();
    for (std::size_t oh = 0; oh < s.out_h; ++oh) {
      for (std::size_t ow = 0; ow < s.out_w; ++ow) {
        for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
          dst = std::copy_n(in + ((oh + kh) * s.in_w + ow) * s.in_channels, run, dst);
        }
      }
    }
    return PatchMap(patch_buf_.data(), positions, depth, Eigen::OuterStride<>(depth));
  }

  void conv_forward(const LayerSpec& s, const LayerBuffers<T>& p, const T* in, T* out) {
    const auto positions = static_cast<Eigen::Index>(s.out_h * s.out_w);
    const auto depth = static_cast<Eigen::Index>(s.kernel_h * s.kernel_w * s.in_channels);
    const auto co = static_cast<Eigen::Index>(s.out_channels);
    Eigen::Map<const RowMat> w(p.weights.data(), depth, co);
    Eigen::Map<const RowVec> bias(p.bias.data(), co);
    Eigen::Map<RowMat> z(out, positions, co);
    z.noalias() = patches(s, in) * w;
    z.rowwise() += bias;
  }

  void conv_backward(const LayerSpec& s, const LayerBuffers<T>& p, const T* in, const T* gout, LayerBuffers<T>* gp,
                     T* gin) {
    const auto positions = static_cast<Eigen::Index>(s.out_h * s.out_w);
    const auto depth = static_cast<Eigen::Index>(s.kernel_h * s.kernel_w * s.in_channels);
    const auto co = static_cast<Eigen::Index>(s.out_channels);
    Eigen::Map<const RowMat> g(gout, positions, co);
    if (gp) {
      Eigen::Map<RowVec>(gp->bias.data(), co) += g.colwise().sum();
      Eigen::Map<RowMat>(gp->weights.data(), depth, co).noalias() += patches(s, in).transpose() * g;
    }
    if (gin) {
      Eigen::Map<const RowMat> w(p.weights.data(), depth, co);
      patch_grad_.resize(static_cast<std::size_t>(positions * depth));
      Eigen::Map<RowMat> gcol(patch_grad_.data(), positions, depth);
      gcol.noalias() = g * w.transpose();
      std::fill_n(gin, s.input_size(), T(0));
      const std::size_t run = s.kernel_w * s.in_channels;
      const T* src = patch_grad_.data();
      for (std::size_t oh = 0; oh < s.out_h; ++oh) {
        for (std::size_t ow = 0; ow < s.out_w; ++ow) {
          for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
            T* dst = gin + ((oh + kh) * s.in_w + ow) * s.in_channels;
            for (std::size_t k = 0; k < run; ++k) dst[k] += src[k];
            src += run;
          }
        }
      }
    }
  }

  static void dense_forward(const LayerSpec& s, const LayerBuffers<T>& p, const T* in, T* out) {
    const auto n_in = static_cast<Eigen::Index>(s.in_channels);
    const auto n_out = static_cast<Eigen::Index>(s.out_channels);
    Eigen::Map<const RowMat> w(p.weights.data(), n_in, n_out);
    Eigen::Map<RowVec> z(out, n_out);
    z.noalias() = Eigen::Map<const RowVec>(in, n_in) * w;
    z += Eigen::Map<const RowVec>(p.bias.data(), n_out);
  }

  static void dense_backward(const LayerSpec& s, const LayerBuffers<T>& p, const T* in, const T* gout,
                             LayerBuffers<T>* gp, T* gin) {
    const auto n_in = static_cast<Eigen::Index>(s.in_channels);
    const auto n_out = static_cast<Eigen::Index>(s.out_channels);
    Eigen::Map<const RowVec> g(gout, n_out);
    if (gp) {
      Eigen::Map<RowVec>(gp->bias.data(), n_out) += g;
      // Rank-one update; ReLU inputs are sparse, so zero rows are skipped.
      for (Eigen::Index i = 0; i < n_in; ++i) {
        if (in[i] == T(0)) continue;
        Eigen::Map<RowVec>(gp->weights.data() + i * n_out, n_out) += in[i] * g;
      }
    }
    if (gin) {
      Eigen::Map<const RowMat> w(p.weights.data(), n_in, n_out);
      Eigen::Map<ColVec>(gin, n_in).noalias() = w * g.transpose();
    }
  }

  std::vector<LayerSpec> specs_;
  std::vector<LayerBuffers<T>> layers_;
  Buffer<T> input_;
  std::vector<Buffer<T>> pre_;
  std::vector<Buffer<T>> out_;
  std::vector<Buffer<T>> mask_;
  std::vector<Buffer<T>> grad_in_;
  Buffer<T> grad_out_;
  std::vector<double> probs_;
  Buffer<T> patch_buf_;
  Buffer<T> patch_grad_;
};

}  // namespace amcuq::nn::kernels
