#include "amcuq/siggen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "amcuq/common.hpp"

namespace amcuq::siggen {
namespace {

constexpr unsigned gray(unsigned m) { return m ^ (m >> 1); }

ModulationScheme make_psk(const std::string& name, unsigned bits) {
  const unsigned m_count = 1u << bits;
  ModulationScheme s{name, std::vector<Complex>(m_count), bits};
  for (unsigned m = 0; m < m_count; ++m) {
    const double angle = 2.0 * std::numbers::pi * m / m_count;
    s.constellation[gray(m)] = std::polar(1.0, angle);
  }
  return s;
}

ModulationScheme make_ask(const std::string& name, unsigned bits) {
  const unsigned m_count = 1u << bits;
  // Mean of (2m - (M-1))^2 over m is (M^2 - 1) / 3.
  const double scale = std::sqrt((static_cast<double>(m_count) * m_count - 1.0) / 3.0);
  ModulationScheme s{name, std::vector<Complex>(m_count), bits};
  for (unsigned m = 0; m < m_count; ++m) {
    s.constellation[gray(m)] = Complex((2.0 * m - (m_count - 1.0)) / scale, 0.0);
  }
  return s;
}

ModulationScheme make_square_qam(const std::string& name, unsigned bits) {
  const unsigned half = bits / 2;
  const unsigned side = 1u << half;
  const unsigned m_count = 1u << bits;
  const double scale = std::sqrt(2.0 * (m_count - 1.0) / 3.0);
  ModulationScheme s{name, std::vector<Complex>(m_count), bits};
  for (unsigned mi = 0; mi < side; ++mi) {
    for (unsigned mq = 0; mq < side; ++mq) {
      const unsigned value = (gray(mi) << half) | gray(mq);
      s.constellation[value] = Complex((2.0 * mi - (side - 1.0)) / scale, (2.0 * mq - (side - 1.0)) / scale);
    }
  }
  return s;
}

}  // namespace

void ModulationScheme::validate() const {
  if (bits_per_symbol == 0 || bits_per_symbol > 16) {
    fail(ErrorCode::invalid_argument, "scheme '" + name + "': bits_per_symbol must be in [1, 16]");
  }
  if (constellation.size() != (std::size_t{1} << bits_per_symbol)) {
    fail(ErrorCode::invalid_argument, "scheme '" + name + "': constellation size must be 2^bits_per_symbol");
  }
  double energy = 0.0;
  for (const auto& c : constellation) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
      fail(ErrorCode::invalid_argument, "scheme '" + name + "': non-finite point");
    }
    energy += std::norm(c);
  }
  energy /= static_cast<double>(constellation.size());
  if (std::abs(energy - 1.0) > 1e-9) {
    fail(ErrorCode::invalid_argument, "scheme '" + name + "': mean symbol energy is not 1");
  }
  for (std::size_t i = 0; i < constellation.size(); ++i) {
    for (std::size_t j = i + 1; j < constellation.size(); ++j) {
      if (constellation[i] == constellation[j]) {
        fail(ErrorCode::invalid_argument, "scheme '" + name + "': duplicate constellation point");
      }
    }
  }
}

ModulationScheme scheme_by_name(const std::string& name) {
  if (name == "OOK") return ModulationScheme{"OOK", {Complex(0.0, 0.0), Complex(std::numbers::sqrt2, 0.0)}, 1};
  if (name == "BPSK") return ModulationScheme{"BPSK", {Complex(1.0, 0.0), Complex(-1.0, 0.0)}, 1};
  if (name == "QPSK") {
    const double a = 1.0 / std::numbers::sqrt2;
    // bit0 selects the sign of I, bit1 the sign of Q.
    return ModulationScheme{"QPSK", {Complex(a, a), Complex(a, -a), Complex(-a, a), Complex(-a, -a)}, 2};
  }
  if (name == "8PSK") return make_psk(name, 3);
  if (name == "16PSK") return make_psk(name, 4);
  if (name == "4ASK") return make_ask(name, 2);
  if (name == "16QAM") return make_square_qam(name, 4);
  if (name == "64QAM") return make_square_qam(name, 6);
  fail(ErrorCode::invalid_argument, "unknown modulation scheme '" + name + "'");
}

std::vector<std::string> builtin_scheme_names() {
  return {"OOK", "BPSK", "QPSK", "8PSK", "16PSK", "4ASK", "16QAM", "64QAM"};
}

std::vector<ModulationScheme> default_schemes() {
  std::vector<ModulationScheme> out;
  for (const auto& n : builtin_scheme_names()) out.push_back(scheme_by_name(n));
  return out;
}

Fading parse_fading(const std::string& name) {
  if (name == "identity") return Fading::identity;
  if (name == "rayleigh_iid") return Fading::rayleigh_iid;
  fail(ErrorCode::invalid_argument, "unknown fading model '" + name + "'");
}

std::string to_string(Fading f) { return f == Fading::identity ? "identity" : "rayleigh_iid"; }

std::vector<Complex> modulate(std::span<const std::uint8_t> bits, const ModulationScheme& scheme) {
  const unsigned b = scheme.bits_per_symbol;
  if (b == 0 || bits.size() % b != 0) {
    fail(ErrorCode::length_mismatch, "bit count " + std::to_string(bits.size()) + " is not a multiple of " +
                                         std::to_string(b) + " for " + scheme.name);
  }
  std::vector<Complex> out;
  out.reserve(bits.size() / b);
  for (std::size_t i = 0; i < bits.size(); i += b) {
    unsigned value = 0;
    for (unsigned k = 0; k < b; ++k) value = (value << 1) | (bits[i + k] & 1u);
    out.push_back(scheme.constellation[value]);
  }
  return out;
}

std::vector<Complex> apply_channel(std::span<const Complex> symbols, const ChannelConfig& cfg) {
  if (symbols.empty()) fail(ErrorCode::invalid_argument, "apply_channel: empty symbol sequence");
  if (!std::isfinite(cfg.snr_db)) fail(ErrorCode::invalid_argument, "apply_channel: snr_db must be finite");
  const double amplitude = std::sqrt(std::pow(10.0, cfg.snr_db / 10.0));
  const double component_sigma = std::sqrt(0.5);
  Rng noise_rng(derive_seed(cfg.seed, 1));
  Rng fading_rng(derive_seed(cfg.seed, 2));

  std::vector<Complex> r(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const Complex& s = symbols[k];
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
      fail(ErrorCode::invalid_argument, "apply_channel: non-finite symbol");
    }
    Complex h(1.0, 0.0);
    if (cfg.fading == Fading::rayleigh_iid) {
      const double hr = fading_rng.normal();
      const double hi = fading_rng.normal();
      h = Complex(hr * component_sigma, hi * component_sigma);
    }
    const double nr = noise_rng.normal();
    const double ni = noise_rng.normal();
    r[k] = amplitude * h * s + Complex(nr * component_sigma, ni * component_sigma);
  }
  return r;
}

IqMatrix to_iq_matrix(std::span<const Complex> r) {
  IqMatrix m{r.size(), std::vector<double>(2 * r.size())};
  for (std::size_t k = 0; k < r.size(); ++k) {
    m.data[2 * k] = r[k].real();
    m.data[2 * k + 1] = r[k].imag();
  }
  return m;
}

std::vector<Complex> from_iq_matrix(const IqMatrix& m) {
  std::vector<Complex> r(m.rows);
  for (std::size_t k = 0; k < m.rows; ++k) r[k] = Complex(m.at(k, 0), m.at(k, 1));
  return r;
}

SignalDataset generate_frames(const std::vector<ModulationScheme>& schemes, const std::vector<double>& snr_grid,
                              std::size_t frames_per_cell, std::size_t frame_length, std::uint64_t seed,
                              Fading fading) {
  if (schemes.empty()) fail(ErrorCode::invalid_grid, "generate_frames: no modulation schemes");
  if (snr_grid.empty()) fail(ErrorCode::invalid_grid, "generate_frames: empty SNR grid");
  if (frames_per_cell == 0) fail(ErrorCode::invalid_argument, "generate_frames: frames_per_cell must be >= 1");
  if (frame_length == 0) fail(ErrorCode::invalid_argument, "generate_frames: frame length must be >= 1");
  for (double snr : snr_grid) {
    if (!std::isfinite(snr)) fail(ErrorCode::invalid_grid, "generate_frames: non-finite SNR in grid");
    if (std::count(snr_grid.begin(), snr_grid.end(), snr) > 1) {
      fail(ErrorCode::invalid_grid, "generate_frames: duplicate SNR in grid");
    }
  }
  for (const auto& s : schemes) s.validate();

  SignalDataset ds;
  ds.frame_length = frame_length;
  ds.seed = seed;
  for (const auto& s : schemes) ds.class_names.push_back(s.name);
  ds.frames.reserve(schemes.size() * snr_grid.size() * frames_per_cell);

  std::vector<std::uint8_t> bits;
  for (std::size_t si = 0; si < schemes.size(); ++si) {
    const auto& scheme = schemes[si];
    for (std::size_t ni = 0; ni < snr_grid.size(); ++ni) {
      const auto cell = static_cast<std::uint32_t>(si * snr_grid.size() + ni);
      for (std::size_t k = 0; k < frames_per_cell; ++k) {
        const std::uint64_t frame_seed = derive_seed(seed, cell, k);
        Rng bit_rng(derive_seed(frame_seed, 0));
        bits.resize(frame_length * scheme.bits_per_symbol);
        for (auto& b : bits) b = static_cast<std::uint8_t>(bit_rng.bits() >> 63);

        const auto symbols = modulate(bits, scheme);
        const auto received = apply_channel(symbols, ChannelConfig{snr_grid[ni], fading, derive_seed(frame_seed, 1)});
        const auto iq = to_iq_matrix(received);

        IQFrame frame;
        frame.samples.resize(iq.data.size());
        std::transform(iq.data.begin(), iq.data.end(), frame.samples.begin(),
                       [](double v) { return static_cast<float>(v); });
        frame.scheme_index = static_cast<std::uint32_t>(si);
        frame.snr_db = snr_grid[ni];
        frame.key = FrameKey{cell, static_cast<std::uint32_t>(k)};
        ds.frames.push_back(std::move(frame));
      }
    }
  }
  return ds;
}

}  // namespace amcuq::siggen
