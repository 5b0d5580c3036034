#include "amcuq/nncore.hpp"

#include <cmath>
#include <numeric>
#include <nlohmann/json.hpp>
#include <variant>

#include "container.hpp"
#include "engine.hpp"

namespace amcuq::nn {
namespace {

using nlohmann::json;

std::string layer_name(std::size_t l) { return "layer " + std::to_string(l); }

std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::dense: return "dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax_output: return "softmax_output";
  }
  return "?";
}

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "dense") return LayerKind::dense;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "softmax_output") return LayerKind::softmax_output;
  fail(ErrorCode::corrupt_header, "unknown layer kind '" + s + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "softmax") return Activation::softmax;
  fail(ErrorCode::corrupt_header, "unknown activation '" + s + "'");
}

template <class T>
Gradients widen(const std::vector<kernels::LayerBuffers<T>>& g) {
  Gradients out(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    out[l].weights.assign(g[l].weights.begin(), g[l].weights.end());
    out[l].bias.assign(g[l].bias.begin(), g[l].bias.end());
  }
  return out;
}

constexpr detail::Magic kModelMagic{'A', 'M', 'C', 'M', 'O', 'D', 'E', 'L'};
constexpr int kModelVersion = 1;

}  // namespace

std::size_t LayerSpec::weight_count() const noexcept {
  switch (kind) {
    case LayerKind::conv: return kernel_h * kernel_w * in_channels * out_channels;
    case LayerKind::dense:
    case LayerKind::softmax_output: return in_channels * out_channels;
    case LayerKind::flatten: return 0;
  }
  return 0;
}

std::size_t LayerSpec::bias_count() const noexcept { return kind == LayerKind::flatten ? 0 : out_channels; }

void validate(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) fail(ErrorCode::invalid_argument, "model has no layers");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& s = specs[l];
    const bool is_last = l + 1 == specs.size();
    if ((s.kind == LayerKind::softmax_output) != is_last) {
      fail(ErrorCode::invalid_argument, "exactly one softmax_output layer is required, and it must be last");
    }
    if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0)) {
      fail(ErrorCode::invalid_argument, layer_name(l) + ": dropout rate must lie in [0, 1)");
    }
    switch (s.kind) {
      case LayerKind::conv:
        if (s.in_channels == 0 || s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": conv needs positive kernel and channel dims");
        }
        if (s.in_h < s.kernel_h || s.in_w < s.kernel_w || s.out_h != s.in_h - s.kernel_h + 1 ||
            s.out_w != s.in_w - s.kernel_w + 1) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": conv output size inconsistent with valid padding");
        }
        if (s.activation == Activation::softmax) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": softmax only allowed on the output layer");
        }
        break;
      case LayerKind::flatten:
        if (s.out_h != 1 || s.out_w != 1 || s.out_channels != s.input_size() || s.activation != Activation::none ||
            s.dropout_rate != 0.0) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": flatten must map h x w x c onto 1 x 1 x (h*w*c)");
        }
        break;
      case LayerKind::dense:
      case LayerKind::softmax_output:
        if (s.in_h != 1 || s.in_w != 1 || s.out_h != 1 || s.out_w != 1 || s.in_channels == 0 || s.out_channels == 0) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": dense layers take a flat 1 x 1 x n input");
        }
        if ((s.kind == LayerKind::softmax_output) != (s.activation == Activation::softmax)) {
          fail(ErrorCode::invalid_argument, layer_name(l) + ": softmax activation belongs to the output layer only");
        }
        break;
    }
    if (l > 0) {
      const LayerSpec& p = specs[l - 1];
      if (s.in_h != p.out_h || s.in_w != p.out_w || s.in_channels != p.out_channels) {
        fail(ErrorCode::invalid_argument, layer_name(l) + ": input shape does not match previous layer output");
      }
    }
  }
}

std::uint64_t flop_count(const std::vector<LayerSpec>& specs) {
  std::uint64_t total = 0;
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::conv:
        total += std::uint64_t{s.in_channels} * s.out_channels * s.kernel_w * s.kernel_h * s.out_h * s.out_w;
        break;
      case LayerKind::dense:
      case LayerKind::softmax_output: total += std::uint64_t{s.in_channels} * s.out_channels; break;
      case LayerKind::flatten: break;
    }
  }
  return total;
}

Architecture Architecture::desk(std::size_t num_classes, std::size_t frame_length) {
  Architecture a;
  a.frame_length = frame_length;
  a.conv = {{32, 3, 2, 0.2}, {16, 3, 1, 0.2}, {8, 3, 1, 0.2}, {8, 3, 1, 0.2}};
  a.dense_units = 64;
  a.num_classes = num_classes;
  return a;
}

Architecture Architecture::full(std::size_t num_classes, std::size_t frame_length) {
  Architecture a;
  a.frame_length = frame_length;
  a.conv = {{256, 3, 1, 0.2}, {128, 3, 2, 0.2}, {64, 3, 1, 0.2}, {64, 3, 1, 0.2}};
  a.dense_units = 128;
  a.num_classes = num_classes;
  return a;
}

std::vector<LayerSpec> Architecture::layer_specs() const {
  if (num_classes < 2) fail(ErrorCode::invalid_argument, "architecture needs at least 2 classes");
  std::vector<LayerSpec> specs;
  std::size_t h = frame_length, w = 2, c = 1;
  for (const auto& block : conv) {
    if (block.kernel_h > h || block.kernel_w > w) {
      fail(ErrorCode::invalid_argument, "conv kernel larger than its input; frame too short for the architecture");
    }
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in_channels = c;
    s.out_channels = block.filters;
    s.kernel_h = block.kernel_h;
    s.kernel_w = block.kernel_w;
    s.in_h = h;
    s.in_w = w;
    s.out_h = h - block.kernel_h + 1;
    s.out_w = w - block.kernel_w + 1;
    s.dropout_rate = block.dropout_rate;
    s.activation = Activation::relu;
    specs.push_back(s);
    h = s.out_h;
    w = s.out_w;
    c = s.out_channels;
  }
  LayerSpec flat;
  flat.kind = LayerKind::flatten;
  flat.in_h = h;
  flat.in_w = w;
  flat.in_channels = c;
  flat.out_channels = h * w * c;
  specs.push_back(flat);
  std::size_t n = flat.out_channels;
  if (dense_units > 0) {
    LayerSpec d;
    d.kind = LayerKind::dense;
    d.in_channels = n;
    d.out_channels = dense_units;
    d.dropout_rate = dense_dropout;
    d.activation = Activation::relu;
    specs.push_back(d);
    n = dense_units;
  }
  LayerSpec out;
  out.kind = LayerKind::softmax_output;
  out.in_channels = n;
  out.out_channels = num_classes;
  out.activation = Activation::softmax;
  specs.push_back(out);
  validate(specs);
  return specs;
}

std::size_t ModelParams::num_classes() const { return specs.back().out_channels; }
std::size_t ModelParams::frame_length() const { return specs.front().input_size() / 2; }

void ModelParams::validate() const {
  nn::validate(specs);
  if (specs.front().input_size() % 2 != 0) fail(ErrorCode::invalid_argument, "model input must be l x 2");
  if (params.size() != specs.size()) fail(ErrorCode::shape_mismatch, "parameter list does not match layer specs");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (params[l].weights.size() != specs[l].weight_count() || params[l].bias.size() != specs[l].bias_count()) {
      fail(ErrorCode::shape_mismatch, layer_name(l) + ": tensor shapes inconsistent with spec");
    }
    for (double v : params[l].weights) {
      if (!std::isfinite(v)) fail(ErrorCode::divergence, layer_name(l) + ": non-finite weight");
    }
    for (double v : params[l].bias) {
      if (!std::isfinite(v)) fail(ErrorCode::divergence, layer_name(l) + ": non-finite bias");
    }
  }
}

ModelParams initialize(const std::vector<LayerSpec>& specs, std::uint64_t init_seed, Precision precision) {
  validate(specs);
  ModelParams m;
  m.specs = specs;
  m.init_seed = init_seed;
  m.precision = precision;
  m.params.resize(specs.size());
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& s = specs[l];
    const std::size_t receptive = s.kind == LayerKind::conv ? s.kernel_h * s.kernel_w : 1;
    const double fan_in = static_cast<double>(receptive * s.in_channels);
    const double fan_out = static_cast<double>(receptive * s.out_channels);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(derive_seed(init_seed, l));
    m.params[l].weights.resize(s.weight_count());
    for (auto& w : m.params[l].weights) {
      w = rng.uniform(-limit, limit);
      if (precision == Precision::f32) w = static_cast<float>(w);
    }
    m.params[l].bias.assign(s.bias_count(), 0.0);
  }
  return m;
}

double loss(std::span<const double> probs, const OneHotLabel& label) {
  if (probs.size() != label.num_classes()) fail(ErrorCode::shape_mismatch, "loss: class count mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (label[j] != 0.0) total -= label[j] * std::log(std::max(probs[j], kProbClip));
  }
  return total;
}

struct Network::Impl {
  std::variant<kernels::Engine<float>, kernels::Engine<double>> engine;

  static decltype(engine) make(const ModelParams& m) {
    if (m.precision == Precision::f32) return kernels::Engine<float>(m);
    return kernels::Engine<double>(m);
  }
  explicit Impl(const ModelParams& m) : engine(make(m)) {}
};

Network::Network(const ModelParams& model) : impl_(std::make_unique<Impl>(model)) {}
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

std::size_t Network::num_classes() const {
  return std::visit([](auto& e) { return e.num_classes(); }, impl_->engine);
}

std::size_t Network::input_size() const {
  return std::visit([](auto& e) { return e.input_size(); }, impl_->engine);
}

std::vector<double> Network::forward(std::span<const double> frame, Mode mode, std::uint64_t dropout_seed) {
  return std::visit([&](auto& e) { return e.forward(frame, mode, dropout_seed); }, impl_->engine);
}

Gradients Network::param_gradients(std::span<const double> frame, const OneHotLabel& label,
                                   std::uint64_t dropout_seed) {
  return std::visit(
      [&](auto& e) {
        e.forward(frame, Mode::train, dropout_seed);
        auto g = e.zero_gradients();
        e.backward(label, &g, nullptr);
        return widen(g);
      },
      impl_->engine);
}

Gradients Network::param_gradients_eval(std::span<const double> frame, const OneHotLabel& label) {
  return std::visit(
      [&](auto& e) {
        e.forward(frame, Mode::eval, 0);
        auto g = e.zero_gradients();
        e.backward(label, &g, nullptr);
        return widen(g);
      },
      impl_->engine);
}

std::vector<double> Network::input_gradient(std::span<const double> frame, const OneHotLabel& label) {
  return std::visit(
      [&](auto& e) {
        using T = typename std::decay_t<decltype(e.layers().front().weights)>::value_type;
        e.forward(frame, Mode::eval, 0);
        kernels::Buffer<T> g;
        e.backward(label, nullptr, &g);
        return std::vector<double>(g.begin(), g.end());
      },
      impl_->engine);
}

std::vector<double> forward(const ModelParams& model, std::span<const double> frame, Mode mode,
                            std::uint64_t dropout_seed) {
  return Network(model).forward(frame, mode, dropout_seed);
}

Gradients param_gradients(const ModelParams& model, std::span<const double> frame, const OneHotLabel& label,
                          std::uint64_t dropout_seed) {
  return Network(model).param_gradients(frame, label, dropout_seed);
}

std::vector<double> input_gradient(const ModelParams& model, std::span<const double> frame,
                                   const OneHotLabel& label) {
  return Network(model).input_gradient(frame, label);
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::invalid_argument, "train: epochs must be >= 1");
  if (batch_size < 1) fail(ErrorCode::invalid_argument, "train: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::invalid_argument, "train: learning_rate must be finite and positive");
  }
}

namespace {

template <class T>
TrainResult train_impl(const ModelParams& model, const SignalDataset& train_set, const TrainConfig& cfg,
                       const EpochObserver& observer) {
  kernels::Engine<T> engine(model);
  auto grads = engine.zero_gradients();
  const std::size_t n = train_set.size();
  const std::size_t classes = engine.num_classes();

  std::vector<std::size_t> order(n);
  TrainResult result;
  result.model = model;
  result.model.shuffle_seed = cfg.shuffle_seed;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.shuffle_seed, epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      for (auto& g : grads) {
        std::fill(g.weights.begin(), g.weights.end(), T(0));
        std::fill(g.bias.begin(), g.bias.end(), T(0));
      }
      for (std::size_t pos = start; pos < stop; ++pos) {
        const IQFrame& frame = train_set.frames[order[pos]];
        const OneHotLabel label(frame.scheme_index, classes);
        const auto& probs =
            engine.forward(std::span<const float>(frame.samples), Mode::train, derive_seed(cfg.shuffle_seed, epoch, pos + 1));
        epoch_loss += loss(probs, label);
        engine.backward(label, &grads, nullptr);
      }
      engine.sgd_step(grads, static_cast<T>(cfg.learning_rate / static_cast<double>(stop - start)));
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorCode::divergence, "training diverged: epoch " + std::to_string(epoch) + " mean loss is not finite");
    }
    result.epoch_loss.push_back(epoch_loss);
    if (observer) observer(epoch, epoch_loss);
  }
  engine.write_back(result.model);
  for (const auto& p : result.model.params) {
    for (double v : p.weights) {
      if (!std::isfinite(v)) fail(ErrorCode::divergence, "training diverged: non-finite weights");
    }
  }
  return result;
}

}  // namespace

TrainResult train(const ModelParams& model, const SignalDataset& train_set, const TrainConfig& cfg,
                  const EpochObserver& observer) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorCode::invalid_argument, "train: empty training set");
  train_set.validate();
  if (train_set.frame_length * 2 != model.specs.front().input_size()) {
    fail(ErrorCode::shape_mismatch, "train: frame length does not match model input");
  }
  if (train_set.num_classes() != model.num_classes()) {
    fail(ErrorCode::shape_mismatch, "train: dataset class count does not match model output");
  }
  if (model.precision == Precision::f32) return train_impl<float>(model, train_set, cfg, observer);
  return train_impl<double>(model, train_set, cfg, observer);
}

void save_model(const ModelParams& model, const std::filesystem::path& path) {
  model.validate();
  json layers = json::array();
  for (const auto& s : model.specs) {
    layers.push_back({{"kind", kind_name(s.kind)},
                      {"in_channels", s.in_channels},
                      {"out_channels", s.out_channels},
                      {"kernel_h", s.kernel_h},
                      {"kernel_w", s.kernel_w},
                      {"in_h", s.in_h},
                      {"in_w", s.in_w},
                      {"out_h", s.out_h},
                      {"out_w", s.out_w},
                      {"dropout_rate", s.dropout_rate},
                      {"activation", activation_name(s.activation)}});
  }
  json manifest{{"format", "amcuq.model"},
                {"schema_version", kModelVersion},
                {"precision", to_string(model.precision)},
                {"init_seed", model.init_seed},
                {"shuffle_seed", model.shuffle_seed},
                {"flops", flop_count(model.specs)},
                {"layers", std::move(layers)}};
  std::vector<std::uint8_t> payload;
  for (const auto& p : model.params) {
    for (const auto* tensor : {&p.weights, &p.bias}) {
      for (double v : *tensor) {
        if (model.precision == Precision::f32) {
          detail::append_le_f32(payload, static_cast<float>(v));
        } else {
          detail::append_le_f64(payload, v);
        }
      }
    }
  }
  detail::write_container(path, kModelMagic, manifest.dump(), payload);
}

ModelParams load_model(const std::filesystem::path& path) {
  const auto c = detail::read_container(path, kModelMagic);
  ModelParams m;
  try {
    const json j = json::parse(c.manifest);
    if (j.at("format").get<std::string>() != "amcuq.model") fail(ErrorCode::corrupt_header, "not a model file");
    const int version = j.at("schema_version").get<int>();
    if (version != kModelVersion) {
      fail(ErrorCode::version_mismatch, path.string() + ": model schema version " + std::to_string(version));
    }
    m.precision = parse_precision(j.at("precision").get<std::string>());
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    m.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      s.kind = parse_kind(l.at("kind").get<std::string>());
      s.in_channels = l.at("in_channels").get<std::size_t>();
      s.out_channels = l.at("out_channels").get<std::size_t>();
      s.kernel_h = l.at("kernel_h").get<std::size_t>();
      s.kernel_w = l.at("kernel_w").get<std::size_t>();
      s.in_h = l.at("in_h").get<std::size_t>();
      s.in_w = l.at("in_w").get<std::size_t>();
      s.out_h = l.at("out_h").get<std::size_t>();
      s.out_w = l.at("out_w").get<std::size_t>();
      s.dropout_rate = l.at("dropout_rate").get<double>();
      s.activation = parse_activation(l.at("activation").get<std::string>());
      m.specs.push_back(s);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_header, path.string() + ": malformed model manifest: " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::version_mismatch) throw;
    fail(ErrorCode::corrupt_header, path.string() + ": " + e.what());
  }
  try {
    validate(m.specs);
  } catch (const Error& e) {
    fail(ErrorCode::corrupt_header, path.string() + ": " + e.what());
  }

  const std::size_t width = m.precision == Precision::f32 ? 4 : 8;
  std::size_t needed = 0;
  for (const auto& s : m.specs) needed += (s.weight_count() + s.bias_count()) * width;
  if (c.payload.size() < needed) fail(ErrorCode::truncated_payload, path.string() + ": weight payload truncated");
  if (c.payload.size() > needed) fail(ErrorCode::corrupt_header, path.string() + ": trailing bytes after weights");

  const std::uint8_t* p = c.payload.data();
  auto read = [&](std::vector<double>& dst, std::size_t count) {
    dst.resize(count);
    for (auto& v : dst) {
      v = width == 4 ? static_cast<double>(detail::read_le_f32(p)) : detail::read_le_f64(p);
      p += width;
    }
  };
  m.params.resize(m.specs.size());
  for (std::size_t l = 0; l < m.specs.size(); ++l) {
    read(m.params[l].weights, m.specs[l].weight_count());
    read(m.params[l].bias, m.specs[l].bias_count());
  }
  return m;
}

}  // namespace amcuq::nn
