#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "amcuq/common.hpp"
#include "amcuq/uqmetrics.hpp"

using namespace amcuq;
using namespace amcuq::uq;

namespace {

EnsemblePrediction fixed(std::vector<double> mean, std::size_t members = 1, std::vector<double> var = {}) {
  EnsemblePrediction p;
  if (var.empty()) var.assign(mean.size(), 0.0);
  p.member_probs.assign(members, mean);
  p.mean_probs = std::move(mean);
  p.per_class_variance = std::move(var);
  return p;
}

ScoredBatch repeat(const std::vector<double>& mean, const std::vector<std::size_t>& labels) {
  ScoredBatch b;
  for (auto y : labels) b.add(fixed(mean), OneHotLabel(y, mean.size()), 0.0);
  return b;
}

}  // namespace

TEST_SUITE("uqmetrics") {
  TEST_CASE("nll examples") {
    CHECK(nll(repeat({0, 1, 0}, {1, 1})) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(nll(repeat(std::vector<double>(8, 0.125), {0, 3, 7})) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
    ScoredBatch b;
    b.add(fixed({0.5, 0.5}), OneHotLabel(0, 2), 0.0);
    b.add(fixed({0.75, 0.25}), OneHotLabel(1, 2), 0.0);
    CHECK(nll(b) == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));
    CHECK(nll(b) == doctest::Approx(1.0397).epsilon(1e-4));
  }

  TEST_CASE("brier examples") {
    CHECK(brier(repeat({0, 1}, {1})) == 0.0);
    CHECK(brier(repeat({0.5, 0.5}, {0})) == 0.5);
    for (std::size_t c : {2u, 3u, 8u, 24u}) {
      const std::vector<double> u(c, 1.0 / static_cast<double>(c));
      CHECK(brier(repeat(u, {0})) == doctest::Approx(static_cast<double>(c - 1) / static_cast<double>(c)).epsilon(1e-15));
    }
  }

  TEST_CASE("ece examples") {
    CHECK(ece(repeat({0, 0, 1}, {2, 2, 2})) == 0.0);
    // Five samples at confidence 0.8, three of them correct.
    const auto b = repeat({0.8, 0.2}, {0, 0, 0, 1, 1});
    CHECK(ece(b) == doctest::Approx(0.2).epsilon(1e-12));
    ECEConfig cfg;
    CHECK(cfg.bin_of(0.0) == 0);
    CHECK(cfg.bin_of(1.0) == 14);
    CHECK(cfg.bin_of(1.0 / 15.0) == 1);
    CHECK(cfg.bin_of(2.0 / 15.0) == 2);
    CHECK(cfg.bin_of(std::nextafter(2.0 / 15.0, 0.0)) == 1);
    CHECK_THROWS_AS(ECEConfig{0}.validate(), Error);
  }

  TEST_CASE("kl examples") {
    const auto exact = kl_divergence(repeat({0, 1}, {1}));
    CHECK(exact.mean == 0.0);
    const auto quarter = kl_divergence(repeat({0.75, 0.25}, {1}));
    CHECK(quarter.mean == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    std::mt19937_64 rng(1);
    const auto b = oracle::random_batch(rng, 5, 40);
    const auto kl = kl_divergence(b);
    for (std::size_t t = 0; t < b.size(); ++t) {
      CHECK(kl.per_sample[t] == -std::log(clip_probability(b.predictions[t].mean_probs[b.labels[t].index()])));
    }
  }

  TEST_CASE("ci widths examples") {
    const auto single = repeat({0.3, 0.7}, {0, 1, 1});
    const auto w = ci_widths(single);
    CHECK(w.correct.size() == 2);
    CHECK(w.incorrect.size() == 1);
    for (double v : w.correct) CHECK(v == 0.0);
    for (double v : w.incorrect) CHECK(v == 0.0);

    ScoredBatch four;
    four.add(ensemble::aggregate({{0.5, 0.5}, {0.5, 0.5}, {0.7, 0.3}, {0.7, 0.3}}, std::vector<double>(4, 0.25)),
             OneHotLabel(0, 2), 0.0);
    CHECK(ci_widths(four).correct.at(0) == doctest::Approx(0.22632).epsilon(1e-4));
  }

  TEST_CASE("coverage examples") {
    ScoredBatch onehot;
    onehot.add(fixed({0, 1, 0}, 5), OneHotLabel(1, 3), 0.0);
    CHECK(coverage(onehot, CIConfig{}, CoverageMode::strict) == 1.0);
    CHECK(coverage(onehot, CIConfig{}, CoverageMode::relaxed) == 1.0);

    auto single = repeat({0.3, 0.7}, {1, 1, 0});
    single.add(fixed({0, 1}), OneHotLabel(1, 2), 0.0);
    CHECK(coverage(single, CIConfig{}, CoverageMode::strict) == 0.25);
    CHECK(coverage(repeat({0.3, 0.7}, {1, 0}), CIConfig{}, CoverageMode::strict) == 0.0);
    CHECK(coverage(repeat({0.3, 0.7}, {1, 0}), CIConfig{}, CoverageMode::relaxed) == 0.0);
  }

  TEST_CASE("high confidence examples") {
    CHECK(high_confidence_proportion(repeat(std::vector<double>(8, 0.125), {0, 1})) == 0.0);
    CHECK(high_confidence_proportion(repeat({0, 1, 0}, {0, 1})) == 1.0);
    CHECK(high_confidence_proportion(repeat({0.8, 0.2}, {0})) == 0.0);
    CHECK(high_confidence_proportion(repeat({std::nextafter(0.8, 1.0), 1.0 - std::nextafter(0.8, 1.0)}, {0})) == 1.0);
  }

  TEST_CASE("empty batches are rejected") {
    const ScoredBatch empty;
    CHECK_THROWS_AS(nll(empty), Error);
    CHECK_THROWS_AS(brier(empty), Error);
    CHECK_THROWS_AS(ece(empty), Error);
    CHECK_THROWS_AS(kl_divergence(empty), Error);
    CHECK_THROWS_AS(coverage(empty, CIConfig{}, CoverageMode::strict), Error);
    CHECK_THROWS_AS(high_confidence_proportion(empty), Error);
    CHECK_THROWS_AS(report(empty), Error);
    try {
      nll(empty);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::empty_batch);
    }
  }

  TEST_CASE("report on perfect and uniform predictors") {
    std::vector<std::size_t> labels;
    for (std::size_t t = 0; t < 800; ++t) labels.push_back(t % 8);
    ScoredBatch perfect;
    for (auto y : labels) perfect.add(fixed(OneHotLabel(y, 8).vector(), 3), OneHotLabel(y, 8), 0.0);
    const auto r = report(perfect);
    CHECK(r.accuracy == 1.0);
    CHECK(r.nll == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.brier == 0.0);
    CHECK(r.ece == 0.0);
    CHECK(r.mean_kl == doctest::Approx(0.0).epsilon(1e-12));

    // Ties go to class 0, so one label in eight is a hit on balanced data.
    const auto u = report(repeat(std::vector<double>(8, 0.125), labels));
    CHECK(u.accuracy == doctest::Approx(0.125));
    CHECK(u.nll == doctest::Approx(std::log(8.0)).epsilon(1e-12));
    CHECK(u.mean_kl == doctest::Approx(u.nll).epsilon(1e-9));
  }

  TEST_CASE("uniform predictor Brier is exactly (C-1)/C") {
    for (std::size_t c = 2; c <= 32; ++c) {
      std::vector<std::size_t> labels;
      for (std::size_t t = 0; t < 3 * c; ++t) labels.push_back(t % c);
      const auto b = repeat(std::vector<double>(c, 1.0 / static_cast<double>(c)), labels);
      CAPTURE(c);
      CHECK(brier(b) == static_cast<double>(c - 1) / static_cast<double>(c));
    }
  }

  TEST_CASE("metrics agree with the brute-force oracle") {
    std::mt19937_64 rng(2);
    const double z = CIConfig{}.z_alpha;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t c = std::vector<std::size_t>{2, 8, 24}[trial % 3];
      const auto b = oracle::random_batch(rng, c, 1 + rng() % 64);
      const auto it = oracle::items(b);
      CHECK(nll(b) == doctest::Approx(oracle::nll(it)).epsilon(1e-12));
      CHECK(brier(b) == doctest::Approx(oracle::brier(it)).epsilon(1e-12));
      CHECK(std::abs(ece(b) - oracle::ece(it, 15)) <= 1e-12);
      CHECK(kl_divergence(b).mean == doctest::Approx(oracle::mean_kl(it)).epsilon(1e-12));
      CHECK(coverage(b, CIConfig{}, CoverageMode::strict) == oracle::coverage(it, z, true));
      CHECK(coverage(b, CIConfig{}, CoverageMode::relaxed) == oracle::coverage(it, z, false));
      CHECK(high_confidence_proportion(b) == oracle::high_confidence(it, 0.8));
      CHECK(accuracy(b) == oracle::accuracy(it));
      const auto w = ci_widths(b);
      const auto wc = oracle::ci_widths(it, z, true), wi = oracle::ci_widths(it, z, false);
      REQUIRE(w.correct.size() == wc.size());
      REQUIRE(w.incorrect.size() == wi.size());
      for (std::size_t k = 0; k < wc.size(); ++k) CHECK(std::abs(w.correct[k] - wc[k]) <= 1e-12);
      for (std::size_t k = 0; k < wi.size(); ++k) CHECK(std::abs(w.incorrect[k] - wi[k]) <= 1e-12);
    }
  }

  TEST_CASE("batch properties") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t c = 2 + rng() % 10;
      const auto b = oracle::random_batch(rng, c, 1 + rng() % 50);
      const auto r = report(b);
      CHECK(r.mean_kl == doctest::Approx(r.nll).epsilon(1e-12));
      CHECK(r.brier >= 0.0);
      CHECK(r.brier <= 2.0);
      CHECK(r.nll >= 0.0);
      CHECK(r.ece >= 0.0);
      CHECK(r.ece <= 1.0);
      for (double f : {r.coverage_strict, r.coverage_relaxed, r.high_confidence_proportion, r.accuracy}) {
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
      }
      CHECK(r.coverage_strict <= r.coverage_relaxed);

      // Wider intervals never lose coverage.
      double prev_s = 0.0, prev_r = 0.0;
      for (double alpha : {0.5, 0.2, 0.05, 0.01, 0.001}) {
        const auto ci = CIConfig::from_alpha(alpha);
        const double s = coverage(b, ci, CoverageMode::strict), rl = coverage(b, ci, CoverageMode::relaxed);
        CHECK(s <= rl);
        CHECK(s >= prev_s);
        CHECK(rl >= prev_r);
        prev_s = s;
        prev_r = rl;
      }

      // Order of the batch does not matter.
      std::vector<std::size_t> perm(b.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      ScoredBatch p;
      for (auto i : perm) p.add(b.predictions[i], b.labels[i], b.snr_db[i]);
      const auto rp = report(p);
      CHECK(rp.nll == doctest::Approx(r.nll).epsilon(1e-12));
      CHECK(rp.brier == doctest::Approx(r.brier).epsilon(1e-12));
      CHECK(rp.ece == doctest::Approx(r.ece).epsilon(1e-12));
      CHECK(rp.coverage_strict == r.coverage_strict);
      CHECK(rp.coverage_relaxed == r.coverage_relaxed);
      CHECK(rp.high_confidence_proportion == r.high_confidence_proportion);
      CHECK(rp.accuracy == r.accuracy);
    }
  }

  TEST_CASE("histogram") {
    const auto h = histogram({0.0, 0.1, 0.5, 0.99, 1.0, 2.0, -1.0}, 0.0, 1.0, 4);
    CHECK(h.counts == std::vector<std::uint64_t>{3, 0, 1, 3});
    const auto flat = histogram({0.0, 0.0}, 0.0, 0.0, 8);
    CHECK(flat.counts.front() == 2);
  }

  TEST_CASE("single model report has zero coverage and zero widths") {
    ScoredBatch b;
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
      std::vector<double> p{0.6, 0.3, 0.1};
      std::shuffle(p.begin(), p.end(), rng);
      b.add(fixed(p), OneHotLabel(rng() % 3, 3), 0.0);
    }
    const auto r = report(b);
    CHECK(r.coverage_strict == 0.0);
    CHECK(r.coverage_relaxed == 0.0);
    CHECK(r.mean_ci_width_correct == 0.0);
    CHECK(r.mean_ci_width_incorrect == 0.0);
    std::uint64_t total = 0;
    for (auto n : r.ci_width_correct.counts) total += n;
    for (auto n : r.ci_width_incorrect.counts) total += n;
    CHECK(r.ci_width_correct.counts.front() + r.ci_width_incorrect.counts.front() == total);
    CHECK(r.ci_width_correct.counts.size() == 32);
  }

  TEST_CASE("per-snr rows and serialization") {
    std::mt19937_64 rng(5);
    const auto b = oracle::random_batch(rng, 4, 60);
    const auto rows = report_by_snr(b, ReportConfig{}, "equal_ensemble", std::numeric_limits<double>::quiet_NaN(), 0.0);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].snr_db == 0.0);
    CHECK(rows[1].snr_db == 4.0);
    CHECK(rows[2].snr_db == 8.0);
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.metrics.count;
    CHECK(n == 60);
    CHECK(rows[1].metrics.nll == doctest::Approx(nll(b.slice(4.0))).epsilon(1e-15));

    const auto csv = to_csv(rows);
    const auto header = csv.substr(0, csv.find('\n'));
    std::string expected;
    for (const auto& col : csv_columns()) expected += (expected.empty() ? "" : ",") + col;
    CHECK(header == expected);
    CHECK(csv_columns().front() == "model");
    CHECK(csv.find("clean") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    const auto dir = std::filesystem::temp_directory_path() / "amcuq_unit_uq";
    std::filesystem::create_directories(dir);
    write_json(rows, dir / "m.json");
    const auto back = read_json(dir / "m.json");
    REQUIRE(back.size() == rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      CHECK(back[k].model == rows[k].model);
      CHECK(back[k].snr_db == rows[k].snr_db);
      CHECK(std::isnan(back[k].pnr_db));
      CHECK(back[k].metrics.nll == rows[k].metrics.nll);
      CHECK(back[k].metrics.ece == rows[k].metrics.ece);
      CHECK(back[k].metrics.ci_width_correct.counts == rows[k].metrics.ci_width_correct.counts);
    }
    CHECK(to_csv(back) == csv);

    auto attacked = rows;
    attacked[0].pnr_db = -std::numeric_limits<double>::infinity();
    attacked[1].pnr_db = 4.5;
    write_json(attacked, dir / "a.json");
    const auto again = read_json(dir / "a.json");
    CHECK(std::isinf(again[0].pnr_db));
    CHECK(again[0].pnr_db < 0.0);
    CHECK(again[1].pnr_db == 4.5);
  }
}
