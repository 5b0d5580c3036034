#include "amcuq/ensemble.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "amcuq/dataset.hpp"

namespace amcuq::ensemble {

namespace {

constexpr std::string_view kManifestFormat = "amcuq.ensemble";
constexpr int kManifestVersion = 1;

void check_weights(std::span<const double> weights, std::size_t members) {
  if (weights.size() != members) {
    fail(ErrorCode::shape_mismatch, "weight count " + std::to_string(weights.size()) + " != member count " +
                                        std::to_string(members));
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::invalid_argument, "ensemble weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, "ensemble weights must sum to 1");
}

}  // namespace

std::size_t EnsembleModel::num_classes() const {
  if (members.empty()) fail(ErrorCode::invalid_argument, "empty ensemble");
  return members.front().num_classes();
}

void EnsembleModel::validate() const {
  if (members.empty()) fail(ErrorCode::invalid_argument, "ensemble needs at least one member");
  check_weights(weights, members.size());
  const auto classes = members.front().num_classes();
  const auto length = members.front().frame_length();
  for (const auto& m : members) {
    m.validate();
    if (m.num_classes() != classes || m.frame_length() != length) {
      fail(ErrorCode::shape_mismatch, "ensemble members disagree on input or output shape");
    }
  }
}

EnsembleModel with_equal_weights(std::vector<nn::ModelParams> members) {
  if (members.empty()) fail(ErrorCode::invalid_argument, "ensemble needs at least one member");
  const auto b = members.size();
  return EnsembleModel{std::move(members), std::vector<double>(b, 1.0 / static_cast<double>(b))};
}

std::size_t EnsemblePrediction::predicted_class() const {
  // max_element returns the first maximum.
  return static_cast<std::size_t>(std::max_element(mean_probs.begin(), mean_probs.end()) - mean_probs.begin());
}

double EnsemblePrediction::confidence() const { return *std::max_element(mean_probs.begin(), mean_probs.end()); }

EnsemblePrediction aggregate(std::vector<std::vector<double>> member_probs, std::span<const double> weights) {
  if (member_probs.empty()) fail(ErrorCode::shape_mismatch, "no member predictions");
  const auto b = member_probs.size();
  const auto c = member_probs.front().size();
  if (c == 0) fail(ErrorCode::shape_mismatch, "empty probability row");
  for (const auto& row : member_probs) {
    if (row.size() != c) fail(ErrorCode::shape_mismatch, "member probability rows differ in length");
  }
  check_weights(weights, b);

  EnsemblePrediction out;
  out.mean_probs.assign(c, 0.0);
  out.per_class_variance.assign(c, 0.0);
  for (std::size_t m = 0; m < b; ++m) {
    for (std::size_t j = 0; j < c; ++j) out.mean_probs[j] += weights[m] * member_probs[m][j];
  }
  if (b > 1) {
    // Deviations are taken from member 0 so identical rows give exactly 0.
    for (std::size_t j = 0; j < c; ++j) {
      const double ref = member_probs[0][j];
      double sum = 0.0, ss = 0.0;
      for (std::size_t m = 1; m < b; ++m) {
        const double d = member_probs[m][j] - ref;
        sum += d;
        ss += d * d;
      }
      out.per_class_variance[j] = std::max(0.0, (ss - sum * sum / static_cast<double>(b)) / static_cast<double>(b - 1));
    }
  }
  out.member_probs = std::move(member_probs);
  return out;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::invalid_argument, "quantile probability must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

CIConfig CIConfig::from_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
  return CIConfig{alpha, normal_quantile(1.0 - alpha / 2.0)};
}

double ci_half_width(double variance, std::size_t members, double z_alpha) {
  if (members == 0) fail(ErrorCode::invalid_argument, "member count must be positive");
  return z_alpha * std::sqrt(variance / static_cast<double>(members));
}

std::vector<Interval> ci_bounds(const EnsemblePrediction& pred, const CIConfig& cfg) {
  std::vector<Interval> out(pred.num_classes());
  const auto b = std::max<std::size_t>(pred.members(), 1);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double h = ci_half_width(pred.per_class_variance[j], b, cfg.z_alpha);
    out[j] = {pred.mean_probs[j] - h, pred.mean_probs[j] + h};
  }
  return out;
}

Predictor::Predictor(const EnsembleModel& model) : weights_(model.weights) {
  model.validate();
  classes_ = model.num_classes();
  networks_.reserve(model.size());
  for (const auto& m : model.members) networks_.emplace_back(m);
}

EnsemblePrediction Predictor::predict(std::span<const double> frame) {
  std::vector<std::vector<double>> rows;
  rows.reserve(networks_.size());
  for (auto& net : networks_) rows.push_back(net.forward(frame));
  return aggregate(std::move(rows), weights_);
}

EnsemblePrediction predict(const EnsembleModel& model, std::span<const double> frame) {
  return Predictor(model).predict(frame);
}

EnsemblePrediction predict_single(const nn::ModelParams& model, std::span<const double> frame) {
  EnsemblePrediction out;
  out.mean_probs = nn::forward(model, frame);
  out.per_class_variance.assign(out.mean_probs.size(), 0.0);
  out.member_probs = {out.mean_probs};
  return out;
}

namespace {

std::vector<nn::ModelParams> train_members(const std::vector<const SignalDataset*>& sets,
                                           const std::vector<nn::LayerSpec>& specs, Precision precision,
                                           const nn::TrainConfig& cfg, std::uint64_t master_seed,
                                           std::size_t workers) {
  nn::validate(specs);
  cfg.validate();
  std::vector<nn::ModelParams> members(sets.size());
  parallel_for(sets.size(), workers, [&](std::size_t b) {
    auto init = nn::initialize(specs, derive_seed(master_seed, b, 0), precision);
    auto member_cfg = cfg;
    member_cfg.shuffle_seed = derive_seed(master_seed, b, 1);
    try {
      members[b] = nn::train(init, *sets[b], member_cfg).model;
    } catch (const Error& e) {
      throw Error(e.code(), "member " + std::to_string(b) + ": " + e.what());
    }
  });
  return members;
}

}  // namespace

EnsembleModel train_ensemble(const SignalDataset& train_set, std::size_t members,
                             const std::vector<nn::LayerSpec>& specs, Precision precision,
                             const nn::TrainConfig& cfg, std::uint64_t master_seed, std::size_t workers) {
  if (members == 0) fail(ErrorCode::invalid_argument, "ensemble size B must be >= 1");
  std::vector<const SignalDataset*> sets(members, &train_set);
  return with_equal_weights(train_members(sets, specs, precision, cfg, master_seed, workers));
}

std::vector<double> entropy_weights(const std::vector<nn::ModelParams>& members, const SignalDataset& calibration) {
  if (members.empty()) fail(ErrorCode::invalid_argument, "no members to weight");
  if (calibration.empty()) fail(ErrorCode::empty_batch, "calibration set is empty");
  const auto c = members.front().num_classes();
  const double max_entropy = std::log(static_cast<double>(c));

  std::vector<double> deficit(members.size());
  for (std::size_t b = 0; b < members.size(); ++b) {
    nn::Network net(members[b]);
    double total = 0.0;
    for (const auto& frame : calibration.frames) {
      const auto p = net.forward(to_input(frame));
      double h = 0.0;
      for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
      }
      total += h;
    }
    const double mean_h = total / static_cast<double>(calibration.size());
    deficit[b] = std::max(0.0, max_entropy - mean_h);
  }
  const double sum = std::accumulate(deficit.begin(), deficit.end(), 0.0);
  if (sum == 0.0) return std::vector<double>(members.size(), 1.0 / static_cast<double>(members.size()));
  for (auto& d : deficit) d /= sum;
  return deficit;
}

std::vector<std::vector<double>> snr_sub_bands(std::vector<double> snr_grid, std::size_t bands) {
  std::sort(snr_grid.begin(), snr_grid.end());
  snr_grid.erase(std::unique(snr_grid.begin(), snr_grid.end()), snr_grid.end());
  if (bands == 0 || bands > snr_grid.size()) {
    fail(ErrorCode::invalid_grid, "cannot split " + std::to_string(snr_grid.size()) + " SNR values into " +
                                      std::to_string(bands) + " sub-bands");
  }
  std::vector<std::vector<double>> out(bands);
  const auto base = snr_grid.size() / bands;
  const auto extra = snr_grid.size() % bands;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bands; ++b) {
    const auto n = base + (b < extra ? 1 : 0);
    out[b].assign(snr_grid.begin() + static_cast<std::ptrdiff_t>(pos),
                  snr_grid.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return out;
}

EnsembleModel train_snr_weighted(const SignalDataset& train_set, const SignalDataset& calibration,
                                 std::size_t members, const std::vector<nn::LayerSpec>& specs, Precision precision,
                                 const nn::TrainConfig& cfg, std::uint64_t master_seed, std::size_t workers) {
  const auto bands = snr_sub_bands(dataset::snr_values(train_set), members);
  std::vector<SignalDataset> subsets;
  subsets.reserve(bands.size());
  for (const auto& band : bands) subsets.push_back(dataset::select_snrs(train_set, band));
  std::vector<const SignalDataset*> sets;
  for (const auto& s : subsets) sets.push_back(&s);
  auto trained = train_members(sets, specs, precision, cfg, master_seed, workers);
  auto weights = entropy_weights(trained, calibration);
  return EnsembleModel{std::move(trained), std::move(weights)};
}

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& manifest_path) {
  model.validate();
  const auto dir = manifest_path.parent_path();
  auto stem = manifest_path.filename().string();
  if (auto dot = stem.find('.'); dot != std::string::npos) stem.resize(dot);

  nlohmann::json j;
  j["format"] = kManifestFormat;
  j["schema_version"] = kManifestVersion;
  j["weights"] = model.weights;
  j["members"] = nlohmann::json::array();
  for (std::size_t b = 0; b < model.size(); ++b) {
    const auto name = stem + "_member_" + std::to_string(b) + ".model";
    nn::save_model(model.members[b], dir / name);
    j["members"].push_back(name);
  }
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + manifest_path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::io, "failed writing " + manifest_path.string());
}

EnsembleModel load_ensemble(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_artifact, "cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, "ensemble manifest: " + std::string(e.what()));
  }
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      fail(ErrorCode::corrupt_header, "not an ensemble manifest");
    }
    if (j.at("schema_version").get<int>() != kManifestVersion) {
      fail(ErrorCode::version_mismatch, "unsupported ensemble manifest version");
    }
    EnsembleModel model;
    model.weights = j.at("weights").get<std::vector<double>>();
    const auto dir = manifest_path.parent_path();
    for (const auto& name : j.at("members")) model.members.push_back(nn::load_model(dir / name.get<std::string>()));
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, "ensemble manifest: " + std::string(e.what()));
  }
}

}  // namespace amcuq::ensemble
