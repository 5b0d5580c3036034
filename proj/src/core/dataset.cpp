#include "amcuq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <utility>

#include "amcuq/common.hpp"
#include "container.hpp"

namespace amcuq {

void SignalDataset::validate() const {
  for (const auto& f : frames) {
    if (f.samples.size() != 2 * frame_length) {
      fail(ErrorCode::shape_mismatch, "frame length " + std::to_string(f.length()) + " differs from dataset length " +
                                          std::to_string(frame_length));
    }
    if (f.scheme_index >= class_names.size()) {
      fail(ErrorCode::corrupt_header, "scheme index " + std::to_string(f.scheme_index) + " >= class count " +
                                          std::to_string(class_names.size()));
    }
  }
}

OneHotLabel::OneHotLabel(std::size_t index, std::size_t num_classes) : index_(index), num_classes_(num_classes) {
  if (index >= num_classes) fail(ErrorCode::invalid_argument, "one-hot index out of range");
}

std::vector<double> OneHotLabel::vector() const {
  std::vector<double> v(num_classes_, 0.0);
  v[index_] = 1.0;
  return v;
}

std::vector<double> to_input(const IQFrame& frame) { return {frame.samples.begin(), frame.samples.end()}; }

}  // namespace amcuq

namespace amcuq::dataset {
namespace {

using nlohmann::json;

constexpr detail::Magic kMagic{'A', 'M', 'C', 'S', 'I', 'G', 'S', 'T'};

SignalDataset empty_like(const SignalDataset& ds) {
  SignalDataset out;
  out.class_names = ds.class_names;
  out.frame_length = ds.frame_length;
  out.seed = ds.seed;
  out.attack = ds.attack;
  return out;
}

json attack_to_json(const std::optional<AttackProvenance>& a) {
  if (!a) return nullptr;
  json j{{"epsilon", a->epsilon}, {"surrogate", a->surrogate}, {"label_mode", a->label_mode}};
  j["target_pnr_db"] = a->target_pnr_db ? json(*a->target_pnr_db) : json(nullptr);
  return j;
}

std::optional<AttackProvenance> attack_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  AttackProvenance a;
  a.epsilon = j.at("epsilon").get<double>();
  a.surrogate = j.at("surrogate").get<std::string>();
  a.label_mode = j.at("label_mode").get<std::string>();
  if (!j.at("target_pnr_db").is_null()) a.target_pnr_db = j.at("target_pnr_db").get<double>();
  return a;
}

}  // namespace

SplitDataset split(const SignalDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    fail(ErrorCode::invalid_argument, "split: test_fraction must lie in (0, 1)");
  }
  std::map<std::pair<std::uint32_t, double>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    cells[{ds.frames[i].scheme_index, ds.frames[i].snr_db}].push_back(i);
  }

  std::vector<bool> is_test(ds.frames.size(), false);
  std::uint64_t ordinal = 0;
  for (auto& [cell, members] : cells) {
    const std::size_t n = members.size();
    if (n < 2) {
      fail(ErrorCode::insufficient_cell, "split: cell (scheme " + std::to_string(cell.first) + ", " +
                                             std::to_string(cell.second) + " dB) has fewer than 2 frames");
    }
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    Rng rng(derive_seed(seed, ordinal++));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(members[i], members[rng.below(i + 1)]);
    for (std::size_t i = 0; i < n_test; ++i) is_test[members[i]] = true;
  }

  SplitDataset out{empty_like(ds), empty_like(ds)};
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    (is_test[i] ? out.test : out.train).frames.push_back(ds.frames[i]);
  }
  return out;
}

void save(const SignalDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  const std::size_t frame_bytes = ds.frame_length * 2 * sizeof(float);

  json records = json::array();
  std::vector<std::uint8_t> payload;
  payload.reserve(ds.frames.size() * frame_bytes);
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& f = ds.frames[i];
    records.push_back({{"scheme_index", f.scheme_index},
                       {"snr_db", f.snr_db},
                       {"cell", f.key.cell},
                       {"index", f.key.index},
                       {"offset", i * frame_bytes}});
    for (float v : f.samples) detail::append_le_f32(payload, v);
  }
  json manifest{{"format", "amcuq.sigset"},
                {"schema_version", kSigsetVersion},
                {"num_classes", ds.class_names.size()},
                {"frame_length", ds.frame_length},
                {"class_names", ds.class_names},
                {"frame_count", ds.frames.size()},
                {"seed", ds.seed},
                {"sample_type", "f32le"},
                {"attack", attack_to_json(ds.attack)},
                {"frames", std::move(records)}};
  detail::write_container(path, kMagic, manifest.dump(), payload);
}

SignalDataset load(const std::filesystem::path& path) {
  const auto c = detail::read_container(path, kMagic);
  json m;
  try {
    m = json::parse(c.manifest);
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_header, path.string() + ": manifest is not valid JSON: " + e.what());
  }

  SignalDataset ds;
  std::size_t frame_count = 0;
  try {
    if (m.at("format").get<std::string>() != "amcuq.sigset") {
      fail(ErrorCode::corrupt_header, path.string() + ": not a sigset manifest");
    }
    const int version = m.at("schema_version").get<int>();
    if (version != kSigsetVersion) {
      fail(ErrorCode::version_mismatch, path.string() + ": schema version " + std::to_string(version) +
                                            " (expected " + std::to_string(kSigsetVersion) + ")");
    }
    const auto num_classes = m.at("num_classes").get<std::size_t>();
    ds.class_names = m.at("class_names").get<std::vector<std::string>>();
    if (ds.class_names.size() != num_classes) {
      fail(ErrorCode::corrupt_header, path.string() + ": class_names size differs from num_classes");
    }
    ds.frame_length = m.at("frame_length").get<std::size_t>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.attack = attack_from_json(m.at("attack"));
    frame_count = m.at("frame_count").get<std::size_t>();
    const auto& records = m.at("frames");
    if (!records.is_array() || records.size() != frame_count) {
      fail(ErrorCode::corrupt_header, path.string() + ": frame record count differs from frame_count");
    }
    const std::size_t frame_bytes = ds.frame_length * 2 * sizeof(float);
    ds.frames.resize(frame_count);
    for (std::size_t i = 0; i < frame_count; ++i) {
      const auto& r = records[i];
      auto& f = ds.frames[i];
      f.scheme_index = r.at("scheme_index").get<std::uint32_t>();
      if (f.scheme_index >= num_classes) {
        fail(ErrorCode::corrupt_header, path.string() + ": frame " + std::to_string(i) +
                                            " label exceeds manifest class count");
      }
      f.snr_db = r.at("snr_db").get<double>();
      f.key = FrameKey{r.at("cell").get<std::uint32_t>(), r.at("index").get<std::uint32_t>()};
      if (r.at("offset").get<std::size_t>() != i * frame_bytes) {
        fail(ErrorCode::corrupt_header, path.string() + ": frame " + std::to_string(i) + " has an unexpected offset");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_header, path.string() + ": malformed manifest: " + e.what());
  }

  const std::size_t values_per_frame = ds.frame_length * 2;
  const std::size_t needed = frame_count * values_per_frame * sizeof(float);
  if (c.payload.size() < needed) {
    fail(ErrorCode::truncated_payload, path.string() + ": payload holds " + std::to_string(c.payload.size()) +
                                           " bytes, manifest requires " + std::to_string(needed));
  }
  if (c.payload.size() > needed) fail(ErrorCode::corrupt_header, path.string() + ": trailing bytes after payload");
  const std::uint8_t* p = c.payload.data();
  for (auto& f : ds.frames) {
    f.samples.resize(values_per_frame);
    for (auto& v : f.samples) {
      v = detail::read_le_f32(p);
      p += sizeof(float);
    }
  }
  return ds;
}

SignalDataset select_snr(const SignalDataset& ds, double snr_db) { return select_snrs(ds, {snr_db}); }

SignalDataset select_snrs(const SignalDataset& ds, const std::vector<double>& snrs) {
  SignalDataset out = empty_like(ds);
  for (const auto& f : ds.frames) {
    if (std::find(snrs.begin(), snrs.end(), f.snr_db) != snrs.end()) out.frames.push_back(f);
  }
  return out;
}

std::vector<double> snr_values(const SignalDataset& ds) {
  std::vector<double> v;
  for (const auto& f : ds.frames) v.push_back(f.snr_db);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<OneHotLabel> labels(const SignalDataset& ds) {
  std::vector<OneHotLabel> out;
  out.reserve(ds.frames.size());
  for (const auto& f : ds.frames) out.emplace_back(f.scheme_index, ds.num_classes());
  return out;
}

}  // namespace amcuq::dataset
