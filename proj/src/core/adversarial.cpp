#include "amcuq/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "amcuq/dataset.hpp"

namespace amcuq::adv {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double squared_norm(const IQFrame& f) {
  double s = 0.0;
  for (float x : f.samples) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

}  // namespace

std::string Surrogate::to_string() const {
  return kind == Kind::standalone ? "standalone" : "member:" + std::to_string(member);
}

Surrogate Surrogate::parse(const std::string& s) {
  if (s == "standalone") return {Kind::standalone, 0};
  const std::string prefix = "member:";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
    const auto digits = s.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return {Kind::member, static_cast<std::size_t>(std::stoull(digits))};
    }
  }
  fail(ErrorCode::invalid_argument, "surrogate must be 'standalone' or 'member:<index>', got '" + s + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::invalid_argument, "epsilon must be >= 0");
  if (target_pnr_db && std::isnan(*target_pnr_db)) fail(ErrorCode::invalid_argument, "target PNR is NaN");
}

std::vector<double> PerturbedFrame::perturbed() const {
  std::vector<double> out(delta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(original.samples[i]) + delta[i];
  return out;
}

PerturbedFrame fgsm(nn::Network& surrogate, const IQFrame& frame, const OneHotLabel& label, double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::invalid_argument, "epsilon must be >= 0");
  if (frame.samples.size() != surrogate.input_size()) {
    fail(ErrorCode::shape_mismatch, "frame has " + std::to_string(frame.samples.size()) + " values, model expects " +
                                        std::to_string(surrogate.input_size()));
  }
  PerturbedFrame out;
  out.original = frame;
  out.delta = surrogate.input_gradient(to_input(frame), label);
  for (double& g : out.delta) g = g > 0.0 ? epsilon : (g < 0.0 ? -epsilon : 0.0);
  const double dn = squared_norm(out.delta);
  const double rn = squared_norm(frame);
  out.realized_pnr_db = dn == 0.0 ? kNoPerturbation : 10.0 * std::log10(dn / rn) + frame.snr_db;
  return out;
}

PerturbedFrame fgsm(const nn::ModelParams& surrogate, const IQFrame& frame, const OneHotLabel& label,
                    double epsilon) {
  nn::Network net(surrogate);
  return fgsm(net, frame, label, epsilon);
}

double mean_power(std::span<const IQFrame> frames) {
  if (frames.empty()) fail(ErrorCode::empty_batch, "no frames");
  double s = 0.0;
  for (const auto& f : frames) s += squared_norm(f);
  return s / static_cast<double>(frames.size());
}

double pnr_db(std::span<const std::vector<double>> deltas, std::span<const IQFrame> frames, double snr_db) {
  if (deltas.empty() || frames.empty()) fail(ErrorCode::empty_batch, "PNR needs a nonempty set");
  if (deltas.size() != frames.size()) fail(ErrorCode::length_mismatch, "deltas and frames differ in count");
  double dp = 0.0;
  for (const auto& d : deltas) dp += squared_norm(d);
  dp /= static_cast<double>(deltas.size());
  if (dp == 0.0) return kNoPerturbation;
  return 10.0 * std::log10(dp / mean_power(frames)) + snr_db;
}

double epsilon_for_pnr(double target_pnr_db, double snr_db, std::span<const IQFrame> frames) {
  if (target_pnr_db == kNoPerturbation) return 0.0;
  const double power = mean_power(frames);
  if (!(power > 0.0)) fail(ErrorCode::invalid_argument, "frames have nonpositive power");
  const double length = static_cast<double>(frames.front().samples.size());
  return std::sqrt(power * std::pow(10.0, (target_pnr_db - snr_db) / 10.0) / length);
}

const nn::ModelParams& surrogate_model(const ensemble::EnsembleModel& attacked, const Surrogate& s) {
  if (attacked.members.empty()) fail(ErrorCode::invalid_argument, "empty ensemble");
  if (s.kind == Surrogate::Kind::standalone) {
    if (attacked.size() != 1) fail(ErrorCode::invalid_argument, "standalone surrogate needs a single-model system");
    return attacked.members.front();
  }
  if (s.member >= attacked.size()) {
    fail(ErrorCode::invalid_argument, "surrogate member " + std::to_string(s.member) + " out of range");
  }
  return attacked.members[s.member];
}

AttackResult evaluate_under_attack(const ensemble::EnsembleModel& attacked, const SignalDataset& test_set,
                                   const AttackConfig& attack, const uq::ReportConfig& cfg,
                                   const std::string& name, std::size_t workers, bool keep_perturbed) {
  attack.validate();
  attacked.validate();
  if (test_set.empty()) fail(ErrorCode::empty_batch, "empty test set");
  const auto& surrogate = surrogate_model(attacked, attack.surrogate);
  const auto classes = attacked.num_classes();

  // Frame indices per SNR slice, ascending SNR.
  std::map<double, std::vector<std::size_t>> slices;
  for (std::size_t t = 0; t < test_set.size(); ++t) slices[test_set.frames[t].snr_db].push_back(t);

  std::map<double, double> epsilon;
  for (const auto& [snr, idx] : slices) {
    if (attack.target_pnr_db) {
      std::vector<IQFrame> frames;
      frames.reserve(idx.size());
      for (auto t : idx) frames.push_back(test_set.frames[t]);
      epsilon[snr] = epsilon_for_pnr(*attack.target_pnr_db, snr, frames);
    } else {
      epsilon[snr] = attack.epsilon;
    }
  }

  const auto n = test_set.size();
  std::vector<std::vector<double>> inputs(n);
  std::vector<std::vector<double>> deltas(n);
  const auto chunks = std::min<std::size_t>(std::max<std::size_t>(workers, 1), n);
  parallel_for(chunks, chunks, [&](std::size_t c) {
    nn::Network net(surrogate);
    for (std::size_t t = c * n / chunks; t < (c + 1) * n / chunks; ++t) {
      const auto& f = test_set.frames[t];
      auto pf = fgsm(net, f, OneHotLabel(f.scheme_index, classes), epsilon.at(f.snr_db));
      inputs[t] = pf.perturbed();
      deltas[t] = std::move(pf.delta);
    }
  });

  const auto batch = uq::score_inputs(attacked, inputs, test_set, workers);

  AttackResult result;
  for (const auto& [snr, idx] : slices) {
    std::vector<std::vector<double>> d;
    std::vector<IQFrame> frames;
    for (auto t : idx) {
      d.push_back(deltas[t]);
      frames.push_back(test_set.frames[t]);
    }
    const double pnr = pnr_db(d, frames, snr);
    result.slices.push_back({snr, epsilon[snr], pnr});
    result.rows.push_back({name, snr, pnr, epsilon[snr], uq::report(batch.slice(snr), cfg)});
  }

  if (keep_perturbed) {
    SignalDataset out = test_set;
    for (std::size_t t = 0; t < n; ++t) {
      auto& s = out.frames[t].samples;
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(inputs[t][i]);
    }
    double eps_max = 0.0;
    for (const auto& [snr, e] : epsilon) eps_max = std::max(eps_max, e);
    out.attack = AttackProvenance{eps_max, attack.target_pnr_db, attack.surrogate.to_string(), "true"};
    result.perturbed = std::move(out);
  }
  return result;
}

}  // namespace amcuq::adv
