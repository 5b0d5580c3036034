#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "amcuq/common.hpp"
#include "amcuq/frame.hpp"

namespace amcuq::nn {

enum class LayerKind { conv, dense, flatten, softmax_output };
enum class Activation { none, relu, softmax };

/// Shape record of one layer. Tensors are channels-last: a conv layer maps an
/// (in_h x in_w x in_channels) input to (out_h x out_w x out_channels) with
/// "valid" padding and stride 1. kernel_h runs along time, kernel_w along the
/// I/Q axis. Dense and softmax_output layers use in_channels -> out_channels.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_w = 1;
  std::size_t kernel_h = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_h = 1;
  std::size_t out_w = 1;
  double dropout_rate = 0.0;
  Activation activation = Activation::none;

  std::size_t input_size() const noexcept { return in_h * in_w * in_channels; }
  std::size_t output_size() const noexcept { return out_h * out_w * out_channels; }
  std::size_t weight_count() const noexcept;
  std::size_t bias_count() const noexcept;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Checks per-layer invariants and that consecutive layers chain.
void validate(const std::vector<LayerSpec>& specs);

/// Sum over conv layers of C_in * C_out * K_w * K_h * H * W plus in * out for
/// dense and softmax_output layers.
std::uint64_t flop_count(const std::vector<LayerSpec>& specs);

struct ConvBlock {
  std::size_t filters = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 1;
  double dropout_rate = 0.0;
};

/// Compact description of the conv -> flatten -> dense -> softmax topology.
struct Architecture {
  std::size_t frame_length = 128;
  std::vector<ConvBlock> conv;
  std::size_t dense_units = 64;
  double dense_dropout = 0.0;
  std::size_t num_classes = 8;

  /// Desk-scale default: 32/16/8/8 filters, kernels (3,2),(3,1)x3,
  /// dropout 0.2, dense 64.
  static Architecture desk(std::size_t num_classes, std::size_t frame_length = 128);
  /// Full-width table topology: 256/128/64/64 filters, kernels (3,1),(3,2),
  /// (3,1),(3,1), dropout 0.2, dense 128.
  static Architecture full(std::size_t num_classes, std::size_t frame_length = 128);

  std::vector<LayerSpec> layer_specs() const;
};

struct LayerParams {
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using Gradients = std::vector<LayerParams>;

struct ModelParams {
  std::vector<LayerSpec> specs;
  std::vector<LayerParams> params;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  /// Arithmetic precision of forward/backward. In f32 mode every stored
  /// value is exactly representable as float.
  Precision precision = Precision::f64;

  std::size_t num_classes() const;
  std::size_t frame_length() const;
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams initialize(const std::vector<LayerSpec>& specs, std::uint64_t init_seed,
                       Precision precision = Precision::f64);

enum class Mode { train, eval };

/// Clipped categorical cross-entropy, -sum_j y_j log(max(p_j, 1e-12)).
double loss(std::span<const double> probs, const OneHotLabel& label);

/// Reusable evaluator bound to one model. Holds per-call workspace, so a
/// Network is not safe for concurrent use; build one per thread.
class Network {
 public:
  explicit Network(const ModelParams& model);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  std::size_t num_classes() const;
  std::size_t input_size() const;

  /// Softmax probabilities for an l x 2 frame (row-major). Train mode applies
  /// inverted dropout with masks drawn from dropout_seed.
  std::vector<double> forward(std::span<const double> frame, Mode mode = Mode::eval,
                              std::uint64_t dropout_seed = 0);
  /// Gradients of the clipped cross-entropy w.r.t. every weight and bias,
  /// under the dropout mask fixed by dropout_seed (train mode).
  Gradients param_gradients(std::span<const double> frame, const OneHotLabel& label, std::uint64_t dropout_seed);
  /// Same as param_gradients but in eval mode (no dropout).
  Gradients param_gradients_eval(std::span<const double> frame, const OneHotLabel& label);
  /// Gradient of the loss w.r.t. the input samples, eval mode.
  std::vector<double> input_gradient(std::span<const double> frame, const OneHotLabel& label);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<double> forward(const ModelParams& model, std::span<const double> frame, Mode mode = Mode::eval,
                            std::uint64_t dropout_seed = 0);
Gradients param_gradients(const ModelParams& model, std::span<const double> frame, const OneHotLabel& label,
                          std::uint64_t dropout_seed);
std::vector<double> input_gradient(const ModelParams& model, std::span<const double> frame,
                                   const OneHotLabel& label);

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

struct TrainResult {
  ModelParams model;
  std::vector<double> epoch_loss;
};

/// Optional per-epoch callback (epoch index, mean loss).
using EpochObserver = std::function<void(std::size_t, double)>;

/// Plain mini-batch SGD on the clipped cross-entropy. Throws divergence when
/// an epoch's mean loss is not finite.
TrainResult train(const ModelParams& model, const SignalDataset& train_set, const TrainConfig& cfg,
                  const EpochObserver& observer = {});

/// Weight file: same container layout as .sigset with magic AMCMODEL; the
/// payload stores parameters in the model's precision.
void save_model(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace amcuq::nn
