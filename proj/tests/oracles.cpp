#include "oracles.hpp"

#include <algorithm>
#include <numeric>

namespace oracle {

using amcuq::nn::LayerKind;

std::vector<double> forward(const amcuq::nn::ModelParams& m, const std::vector<double>& frame) {
  std::vector<double> x = frame;
  for (std::size_t l = 0; l < m.specs.size(); ++l) {
    const auto& s = m.specs[l];
    const auto& w = m.params[l].weights;
    const auto& b = m.params[l].bias;
    std::vector<double> y;
    if (s.kind == LayerKind::conv) {
      y.assign(s.out_h * s.out_w * s.out_channels, 0.0);
      for (std::size_t oh = 0; oh < s.out_h; ++oh)
        for (std::size_t ow = 0; ow < s.out_w; ++ow)
          for (std::size_t co = 0; co < s.out_channels; ++co) {
            double acc = b[co];
            for (std::size_t kh = 0; kh < s.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < s.kernel_w; ++kw)
                for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                  const double in = x[((oh + kh) * s.in_w + (ow + kw)) * s.in_channels + ci];
                  const double wt = w[((kh * s.kernel_w + kw) * s.in_channels + ci) * s.out_channels + co];
                  acc += in * wt;
                }
            y[(oh * s.out_w + ow) * s.out_channels + co] = acc;
          }
    } else if (s.kind == LayerKind::flatten) {
      y = x;
    } else {
      y.assign(s.out_channels, 0.0);
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < s.in_channels; ++i) acc += x[i] * w[i * s.out_channels + o];
        y[o] = acc;
      }
    }
    if (s.kind == LayerKind::softmax_output) {
      const double peak = *std::max_element(y.begin(), y.end());
      double sum = 0.0;
      for (auto& v : y) sum += (v = std::exp(v - peak));
      for (auto& v : y) v /= sum;
    } else if (s.activation == amcuq::nn::Activation::relu) {
      for (auto& v : y) v = std::max(v, 0.0);
    }
    x = std::move(y);
  }
  return x;
}

double loss(const std::vector<double>& probs, std::size_t label) { return -std::log(std::max(probs[label], 1e-12)); }

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

double normal_quantile(double p) {
  // Phi(x) = erfc(-x / sqrt 2) / 2 is increasing in x.
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<Item> items(const amcuq::uq::ScoredBatch& b) {
  std::vector<Item> out;
  for (std::size_t t = 0; t < b.size(); ++t) {
    out.push_back({b.predictions[t].mean_probs, b.predictions[t].per_class_variance, b.predictions[t].members(),
                   b.labels[t].index()});
  }
  return out;
}

namespace {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t k = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[k]) k = j;
  }
  return k;
}

double clip(double p) { return std::min(std::max(p, 1e-12), 1.0); }

}  // namespace

double nll(const std::vector<Item>& batch) {
  double s = 0.0;
  for (const auto& it : batch) {
    for (std::size_t j = 0; j < it.mean.size(); ++j) {
      const double y = j == it.label ? 1.0 : 0.0;
      s += -y * std::log(clip(it.mean[j]));
    }
  }
  return s / static_cast<double>(batch.size());
}

double brier(const std::vector<Item>& batch) {
  double s = 0.0;
  for (const auto& it : batch) {
    for (std::size_t j = 0; j < it.mean.size(); ++j) {
      const double y = j == it.label ? 1.0 : 0.0;
      s += std::pow(y - it.mean[j], 2);
    }
  }
  return s / static_cast<double>(batch.size());
}

double ece(const std::vector<Item>& batch, std::size_t bins) {
  double total = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double lo = static_cast<double>(k) / static_cast<double>(bins);
    const double hi = static_cast<double>(k + 1) / static_cast<double>(bins);
    const bool last = k + 1 == bins;
    std::vector<double> conf;
    std::vector<double> acc;
    for (const auto& it : batch) {
      const double c = *std::max_element(it.mean.begin(), it.mean.end());
      if (c >= lo && (c < hi || (last && c <= 1.0))) {
        conf.push_back(c);
        acc.push_back(argmax(it.mean) == it.label ? 1.0 : 0.0);
      }
    }
    if (conf.empty()) continue;
    const double n = static_cast<double>(conf.size());
    const double mc = std::accumulate(conf.begin(), conf.end(), 0.0) / n;
    const double ma = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
    total += n / static_cast<double>(batch.size()) * std::abs(ma - mc);
  }
  return total;
}

double mean_kl(const std::vector<Item>& batch) {
  double s = 0.0;
  for (const auto& it : batch) {
    for (std::size_t j = 0; j < it.mean.size(); ++j) {
      const double y = j == it.label ? 1.0 : 0.0;
      if (y == 0.0) continue;  // 0 log 0 = 0
      s += y * std::log(y / clip(it.mean[j]));
    }
  }
  return s / static_cast<double>(batch.size());
}

std::vector<double> ci_widths(const std::vector<Item>& batch, double z, bool correct) {
  std::vector<double> out;
  for (const auto& it : batch) {
    const auto k = argmax(it.mean);
    if ((k == it.label) != correct) continue;
    out.push_back(2.0 * z * std::sqrt(it.variance[k] / static_cast<double>(it.members)));
  }
  return out;
}

double coverage(const std::vector<Item>& batch, double z, bool strict) {
  double hit = 0.0;
  for (const auto& it : batch) {
    bool ok = true;
    for (std::size_t j = 0; j < it.mean.size(); ++j) {
      const double h = z * std::sqrt(it.variance[j] / static_cast<double>(it.members));
      const double lo = it.mean[j] - h;
      const double hi = it.mean[j] + h;
      const double target = j == it.label ? 1.0 : 0.0;
      if (j == it.label || strict) ok = ok && lo <= target && target <= hi;
    }
    hit += ok ? 1.0 : 0.0;
  }
  return hit / static_cast<double>(batch.size());
}

double high_confidence(const std::vector<Item>& batch, double threshold) {
  double n = 0.0;
  for (const auto& it : batch) n += *std::max_element(it.mean.begin(), it.mean.end()) > threshold ? 1.0 : 0.0;
  return n / static_cast<double>(batch.size());
}

double accuracy(const std::vector<Item>& batch) {
  double n = 0.0;
  for (const auto& it : batch) n += argmax(it.mean) == it.label ? 1.0 : 0.0;
  return n / static_cast<double>(batch.size());
}

amcuq::uq::ScoredBatch random_batch(std::mt19937_64& rng, std::size_t classes, std::size_t count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> members_dist(1, 6);
  std::uniform_int_distribution<std::size_t> class_dist(0, classes - 1);
  amcuq::uq::ScoredBatch batch;
  for (std::size_t t = 0; t < count; ++t) {
    const auto b = members_dist(rng);
    const auto label = class_dist(rng);
    const double kind = u(rng);
    amcuq::ensemble::EnsemblePrediction p;
    if (kind < 0.1) {
      // Every member one-hot on the same class.
      std::vector<double> row(classes, 0.0);
      row[u(rng) < 0.7 ? label : class_dist(rng)] = 1.0;
      p.mean_probs = row;
      p.per_class_variance.assign(classes, 0.0);
      p.member_probs.assign(b, row);
    } else if (kind < 0.2) {
      // Confidence exactly on a 15-bin edge, or exactly 0.8.
      const std::size_t edge_k = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
      double top = u(rng) < 0.3 ? 0.8 : static_cast<double>(edge_k) / 15.0;
      top = std::max(top, 1.0 / static_cast<double>(classes));
      std::vector<double> row(classes, (1.0 - top) / static_cast<double>(classes - 1));
      row[class_dist(rng)] = top;
      p.mean_probs = row;
      p.per_class_variance.resize(classes);
      for (auto& v : p.per_class_variance) v = u(rng) < 0.5 ? 0.0 : 0.05 * u(rng);
      p.member_probs.assign(b, row);
    } else {
      std::vector<std::vector<double>> rows(b, std::vector<double>(classes));
      const double sharp = 0.2 + 8.0 * u(rng);
      for (auto& row : rows) {
        double sum = 0.0;
        for (auto& v : row) sum += (v = std::pow(u(rng), sharp));
        for (auto& v : row) v /= sum;
      }
      if (b > 1 && u(rng) < 0.2) rows.assign(b, rows.front());
      p = amcuq::ensemble::aggregate(rows, std::vector<double>(b, 1.0 / static_cast<double>(b)));
    }
    batch.add(std::move(p), amcuq::OneHotLabel(label, classes), static_cast<double>(t % 3) * 4.0);
  }
  return batch;
}

amcuq::nn::ModelParams tiny_model(std::mt19937_64& rng, bool with_dropout) {
  auto pick = [&rng](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  amcuq::nn::Architecture a;
  a.frame_length = pick(6, 9);
  a.num_classes = pick(2, 4);
  std::size_t width = 2;
  const auto layers = pick(1, 2);
  for (std::size_t l = 0; l < layers; ++l) {
    amcuq::nn::ConvBlock c;
    c.filters = pick(1, 3);
    c.kernel_h = pick(1, 3);
    c.kernel_w = pick(1, width);
    c.dropout_rate = with_dropout ? 0.3 : 0.0;
    width = width - c.kernel_w + 1;
    a.conv.push_back(c);
  }
  a.dense_units = pick(0, 1) ? pick(2, 5) : 0;
  a.dense_dropout = with_dropout ? 0.25 : 0.0;
  auto m = amcuq::nn::initialize(a.layer_specs(), rng(), amcuq::Precision::f64);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (auto& p : m.params) {
    for (auto& w : p.weights) w = u(rng);
    for (auto& b : p.bias) b = 0.3 * u(rng);
  }
  return m;
}

std::vector<double> random_frame(std::mt19937_64& rng, std::size_t length) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> f(2 * length);
  for (auto& v : f) v = n(rng);
  return f;
}

}  // namespace oracle
