#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "amcuq/common.hpp"
#include "amcuq/adversarial.hpp"
#include "amcuq/dataset.hpp"
#include "amcuq/siggen.hpp"

using namespace amcuq;
using namespace amcuq::adv;

namespace {

SignalDataset frames_at(std::vector<double> snrs, std::size_t per_cell, std::size_t length, std::uint64_t seed) {
  return siggen::generate_frames({siggen::scheme_by_name("BPSK"), siggen::scheme_by_name("QPSK"),
                                  siggen::scheme_by_name("8PSK"), siggen::scheme_by_name("16QAM")},
                                 snrs, per_cell, length, seed);
}

double sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void same_metrics(const uq::MetricsReport& a, const uq::MetricsReport& b) {
  CHECK(a.count == b.count);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.nll == b.nll);
  CHECK(a.brier == b.brier);
  CHECK(a.ece == b.ece);
  CHECK(a.mean_kl == b.mean_kl);
  CHECK(a.coverage_strict == b.coverage_strict);
  CHECK(a.coverage_relaxed == b.coverage_relaxed);
  CHECK(a.high_confidence_proportion == b.high_confidence_proportion);
  CHECK(a.mean_ci_width_correct == b.mean_ci_width_correct);
  CHECK(a.mean_ci_width_incorrect == b.mean_ci_width_incorrect);
  CHECK(a.ci_width_correct.counts == b.ci_width_correct.counts);
  CHECK(a.ci_width_incorrect.counts == b.ci_width_incorrect.counts);
}

}  // namespace

TEST_SUITE("adversarial") {
  TEST_CASE("zero epsilon leaves the frame untouched") {
    const auto ds = frames_at({4.0}, 3, 16, 1);
    const auto m = nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 2);
    for (const auto& f : ds.frames) {
      const auto p = fgsm(m, f, OneHotLabel(f.scheme_index, 4), 0.0);
      CHECK(p.perturbed() == to_input(f));
      CHECK(p.realized_pnr_db == kNoPerturbation);
    }
  }

  TEST_CASE("delta is a signed epsilon pattern of the input gradient") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const auto m = oracle::tiny_model(rng, false);
      IQFrame f;
      for (double v : oracle::random_frame(rng, m.frame_length())) f.samples.push_back(static_cast<float>(v));
      f.snr_db = 3.0;
      const OneHotLabel y(rng() % m.num_classes(), m.num_classes());
      const double eps = 0.01 + 0.1 * static_cast<double>(trial);
      const auto p = fgsm(m, f, y, eps);
      const auto g = nn::input_gradient(m, to_input(f), y);
      for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(std::abs(p.delta[i]) <= eps);
        if (g[i] > 0.0) CHECK(p.delta[i] == eps);
        if (g[i] < 0.0) CHECK(p.delta[i] == -eps);
        if (g[i] == 0.0) CHECK(p.delta[i] == 0.0);
      }
      const auto again = fgsm(m, f, y, eps);
      CHECK(again.delta == p.delta);
    }
  }

  TEST_CASE("fgsm input checks") {
    const auto ds = frames_at({0.0}, 1, 16, 4);
    const auto m = nn::initialize(nn::Architecture::desk(4, 32).layer_specs(), 2);
    CHECK_THROWS_AS(fgsm(m, ds.frames[0], OneHotLabel(0, 4), 0.1), Error);
    const auto ok = nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 2);
    CHECK_THROWS_AS(fgsm(ok, ds.frames[0], OneHotLabel(0, 4), -0.1), Error);
  }

  TEST_CASE("pnr examples") {
    const auto ds = frames_at({10.0}, 2, 16, 5);
    std::vector<std::vector<double>> same;
    for (const auto& f : ds.frames) same.push_back(to_input(f));
    CHECK(pnr_db(same, ds.frames, 10.0) == doctest::Approx(10.0).epsilon(1e-12));

    std::vector<std::vector<double>> zero(ds.size(), std::vector<double>(32, 0.0));
    CHECK(pnr_db(zero, ds.frames, 10.0) == kNoPerturbation);

    // Full support: |delta|^2 = 2 l eps^2.
    const double eps = 0.07;
    std::vector<std::vector<double>> full;
    std::mt19937_64 rng(6);
    for (std::size_t t = 0; t < ds.size(); ++t) {
      std::vector<double> d(32);
      for (auto& v : d) v = rng() % 2 ? eps : -eps;
      full.push_back(d);
    }
    double power = 0.0;
    for (const auto& f : ds.frames) power += sq(to_input(f));
    power /= static_cast<double>(ds.size());
    const double closed = 10.0 * std::log10(2.0 * 16.0 * eps * eps / power) + 10.0;
    CHECK(std::abs(pnr_db(full, ds.frames, 10.0) - closed) < 1e-9);

    // Scaling by c adds 20 log10 c.
    auto scaled = full;
    for (auto& d : scaled) {
      for (auto& v : d) v *= 3.0;
    }
    CHECK(pnr_db(scaled, ds.frames, 10.0) == doctest::Approx(pnr_db(full, ds.frames, 10.0) + 20.0 * std::log10(3.0)));

    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> pd;
    std::vector<IQFrame> pf;
    for (auto i : perm) {
      pd.push_back(full[i]);
      pf.push_back(ds.frames[i]);
    }
    CHECK(pnr_db(pd, pf, 10.0) == doctest::Approx(pnr_db(full, ds.frames, 10.0)).epsilon(1e-12));

    CHECK_THROWS_AS(pnr_db(std::vector<std::vector<double>>{}, std::span<const IQFrame>{}, 0.0), Error);
    CHECK_THROWS_AS(pnr_db(std::span(full).first(1), ds.frames, 0.0), Error);
  }

  TEST_CASE("epsilon for a target pnr") {
    const auto ds = frames_at({0.0}, 5, 32, 7);
    CHECK(epsilon_for_pnr(kNoPerturbation, 0.0, ds.frames) == 0.0);
    const double e1 = epsilon_for_pnr(-3.0, 0.0, ds.frames);
    const double e2 = epsilon_for_pnr(-3.0 + 10.0 * std::log10(2.0), 0.0, ds.frames);
    CHECK(e2 == doctest::Approx(e1 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(epsilon_for_pnr(7.0, 10.0, ds.frames) == doctest::Approx(epsilon_for_pnr(-3.0, 0.0, ds.frames)));
  }

  TEST_CASE("realized pnr tracks the target") {
    const auto ds = frames_at({-2.0, 10.0}, 10, 64, 8);
    const auto m = nn::initialize(nn::Architecture::desk(4, 64).layer_specs(), 9);
    for (double snr : {-2.0, 10.0}) {
      const auto slice = dataset::select_snr(ds, snr);
      for (double target : {-10.0, 0.0, 5.0, 10.0}) {
        const double eps = epsilon_for_pnr(target, snr, slice.frames);
        std::vector<std::vector<double>> d;
        for (const auto& f : slice.frames) d.push_back(fgsm(m, f, OneHotLabel(f.scheme_index, 4), eps).delta);
        CHECK(std::abs(pnr_db(d, slice.frames, snr) - target) <= 0.5);
      }
    }
  }

  TEST_CASE("surrogate names") {
    CHECK(Surrogate::parse("member:3").member == 3);
    CHECK(Surrogate::parse("member:3").kind == Surrogate::Kind::member);
    CHECK(Surrogate::parse("standalone").kind == Surrogate::Kind::standalone);
    CHECK(Surrogate{Surrogate::Kind::member, 2}.to_string() == "member:2");
    CHECK_THROWS_AS(Surrogate::parse("member:"), Error);
    CHECK_THROWS_AS(Surrogate::parse("best"), Error);

    std::mt19937_64 rng(10);
    const auto m = oracle::tiny_model(rng, false);
    const auto two = ensemble::with_equal_weights({m, m});
    CHECK_THROWS_AS(surrogate_model(two, {Surrogate::Kind::standalone, 0}), Error);
    CHECK_THROWS_AS(surrogate_model(two, {Surrogate::Kind::member, 2}), Error);
    CHECK(&surrogate_model(two, {Surrogate::Kind::member, 1}) == &two.members[1]);
  }

  TEST_CASE("zero-epsilon attack reproduces the clean report") {
    const auto ds = frames_at({0.0, 8.0}, 4, 16, 11);
    const auto a = nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 12);
    const auto b = nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 13);
    for (const auto& model : {ensemble::with_equal_weights({a}), ensemble::with_equal_weights({a, b})}) {
      const auto clean = uq::report_by_snr(uq::score(model, ds, 2), {}, "sys", 0.0, 0.0);
      AttackConfig cfg;
      cfg.surrogate = model.size() == 1 ? Surrogate{Surrogate::Kind::standalone, 0} : Surrogate{};
      const auto r = evaluate_under_attack(model, ds, cfg, {}, "sys", 3, true);
      REQUIRE(r.rows.size() == clean.size());
      for (std::size_t k = 0; k < clean.size(); ++k) {
        CHECK(r.rows[k].snr_db == clean[k].snr_db);
        CHECK(r.rows[k].pnr_db == kNoPerturbation);
        same_metrics(r.rows[k].metrics, clean[k].metrics);
      }
      REQUIRE(r.perturbed.has_value());
      CHECK(r.perturbed->frames == ds.frames);
    }
  }

  TEST_CASE("attack results do not depend on worker count") {
    const auto ds = frames_at({0.0, 8.0}, 5, 16, 14);
    const auto model = ensemble::with_equal_weights({nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 15),
                                                     nn::initialize(nn::Architecture::desk(4, 16).layer_specs(), 16)});
    AttackConfig cfg;
    cfg.target_pnr_db = 0.0;
    const auto one = evaluate_under_attack(model, ds, cfg, {}, "e", 1, true);
    const auto many = evaluate_under_attack(model, ds, cfg, {}, "e", 7, true);
    CHECK(uq::to_csv(one.rows) == uq::to_csv(many.rows));
    CHECK(*one.perturbed == *many.perturbed);
    REQUIRE(one.perturbed->attack.has_value());
    CHECK(one.perturbed->attack->surrogate == "member:0");
    CHECK(*one.perturbed->attack->target_pnr_db == 0.0);
    for (const auto& s : one.slices) CHECK(std::abs(s.realized_pnr_db) <= 0.5);
  }

  TEST_CASE("attack lowers accuracy of a trained model") {
    const auto ds = frames_at({10.0}, 150, 64, 17);
    const auto parts = dataset::split(ds, 0.2, 18);
    nn::TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 32;
    tc.learning_rate = 0.1;
    tc.shuffle_seed = 19;
    const auto trained = nn::train(nn::initialize(nn::Architecture::desk(4, 64).layer_specs(), 20), parts.train, tc);
    const auto model = ensemble::with_equal_weights({trained.model});
    const auto clean = uq::report(uq::score(model, parts.test));
    AttackConfig cfg;
    cfg.target_pnr_db = 5.0;
    cfg.surrogate = {Surrogate::Kind::standalone, 0};
    const auto r = evaluate_under_attack(model, parts.test, cfg, {}, "standalone");
    MESSAGE("clean " << clean.accuracy << " attacked " << r.rows[0].metrics.accuracy);
    CHECK(clean.accuracy > 0.5);
    CHECK(r.rows[0].metrics.accuracy < clean.accuracy);
  }
}
