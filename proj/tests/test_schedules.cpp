#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "c3dm/error.hpp"
#include "c3dm/rng.hpp"
#include "c3dm/schedules.hpp"

using namespace c3dm;

namespace {

ScheduleSpec wide_linear() {
  ScheduleSpec s;
  s.family = ScheduleFamily::linear;
  s.alpha_max = 1.0 - 1e-12;
  s.alpha_min = 1e-12;
  return s;
}

struct Moments {
  double mean, var;
};

Moments sample_moments(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= (xs.size() - 1);
  return {m, v};
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST_CASE("alpha_bar boundary and midpoint values") {
  ScheduleSpec s;  // default clamps [1e-4, 1-1e-4]
  CHECK(alpha_bar(s, 0.0) == doctest::Approx(0.9999).epsilon(1e-12));

  ScheduleSpec wide = wide_linear();
  CHECK(alpha_bar(wide, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

  ScheduleSpec cos2 = wide;
  cos2.family = ScheduleFamily::cos2;
  CHECK(alpha_bar(cos2, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("alpha_bar domain error outside [0, T]") {
  ScheduleSpec s;
  CHECK_THROWS_AS(alpha_bar(s, -0.01), DomainError);
  CHECK_THROWS_AS(alpha_bar(s, 1.01), DomainError);
  CHECK_THROWS_AS(alpha_bar(s, std::nan("")), DomainError);
}

TEST_CASE("alpha_bar is monotone non-increasing") {
  for (auto family : {ScheduleFamily::linear, ScheduleFamily::cos2}) {
    ScheduleSpec s;
    s.family = family;
    double prev = alpha_bar(s, 0.0);
    for (int i = 1; i <= 200; ++i) {
      const double cur = alpha_bar(s, i / 200.0);
      CHECK(cur <= prev + 1e-15);
      prev = cur;
    }
    CHECK(alpha_bar(s, 0.0) <= s.alpha_max);
    CHECK(alpha_bar(s, 1.0) >= s.alpha_min);
  }
}

TEST_CASE("noise_with_drift identity limit and zero-input scaling") {
  ScheduleSpec s;  // alpha_max = 1 - 1e-4
  const std::vector<double> a{0.4, -0.2};
  const std::vector<double> eps{1.3, -0.7};
  const auto out = noise_with_drift(a, 0.0, eps, s);
  const double band = std::sqrt(1.0 - s.alpha_max);
  CHECK(std::abs(out[0] - a[0]) <= band * std::abs(eps[0]) + 1e-6);
  CHECK(std::abs(out[1] - a[1]) <= band * std::abs(eps[1]) + 1e-6);

  // abar = 0.75 at t = 0.25 on the wide linear ramp: zero input scales eps by 0.5.
  ScheduleSpec wide = wide_linear();
  const std::vector<double> zero{0.0, 0.0};
  const auto scaled = noise_with_drift(zero, 0.25, eps, wide);
  CHECK(scaled[0] == doctest::Approx(0.5 * eps[0]).epsilon(1e-9));
  CHECK(scaled[1] == doctest::Approx(0.5 * eps[1]).epsilon(1e-9));
}

TEST_CASE("noise ops reject mismatched shapes") {
  ScheduleSpec s;
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> eps{1.0};
  CHECK_THROWS_AS(noise_with_drift(a, 0.5, eps, s), ShapeError);
  CHECK_THROWS_AS(noise_without_drift(a, 0.5, eps, s), ShapeError);
  CHECK_THROWS_AS(denoise_point_estimate(a, eps, 0.5, s, NoiseVariant::drift), ShapeError);
  CHECK_THROWS_AS(renoise(a, 0.5, eps, s, NoiseVariant::drift), ShapeError);
}

TEST_CASE("noise_without_drift direct substitution") {
  ScheduleSpec wide = wide_linear();
  const std::vector<double> a{0.4, -0.2};
  SUBCASE("zero eps returns a exactly") {
    const std::vector<double> eps{0.0, 0.0};
    for (double t : {0.0, 0.3, 1.0}) {
      const auto out = noise_without_drift(a, t, eps, wide);
      CHECK(out[0] == a[0]);
      CHECK(out[1] == a[1]);
    }
  }
  SUBCASE("abar=0.75, eps=(1,1)") {
    const std::vector<double> eps{1.0, 1.0};
    const auto out = noise_without_drift(a, 0.25, eps, wide);
    CHECK(out[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.3).epsilon(1e-12));
  }
}

// Monte-Carlo oracle: sample moments of each forward process against the
// closed forms, 1e5 draws, 2% tolerance.
TEST_CASE("forward process moments match closed forms") {
  ScheduleSpec wide = wide_linear();
  const int n = 100000;
  Rng rng(42);

  SUBCASE("drift at abar=0.36: mean 0.6*a, var 0.64") {
    const double t = 0.64;  // abar = 1 - t
    const std::vector<double> a{1.0, -0.5};
    std::vector<double> c0(n), c1(n);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> eps{rng.normal(), rng.normal()};
      const auto out = noise_with_drift(a, t, eps, wide);
      c0[i] = out[0];
      c1[i] = out[1];
    }
    const auto m0 = sample_moments(c0);
    const auto m1 = sample_moments(c1);
    CHECK(m0.mean == doctest::Approx(0.6 * a[0]).epsilon(0.02));
    CHECK(m1.mean == doctest::Approx(0.6 * a[1]).epsilon(0.02));
    CHECK(m0.var == doctest::Approx(0.64).epsilon(0.02));
    CHECK(m1.var == doctest::Approx(0.64).epsilon(0.02));
  }

  SUBCASE("no-drift at abar=0.19: mean a, var 0.81") {
    const double t = 0.81;
    const std::vector<double> a{1.0, -0.5};
    std::vector<double> c0(n), c1(n);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> eps{rng.normal(), rng.normal()};
      const auto out = noise_without_drift(a, t, eps, wide);
      c0[i] = out[0];
      c1[i] = out[1];
    }
    const auto m0 = sample_moments(c0);
    const auto m1 = sample_moments(c1);
    CHECK(m0.mean == doctest::Approx(a[0]).epsilon(0.02));
    CHECK(m1.mean == doctest::Approx(a[1]).epsilon(0.02));
    CHECK(m0.var == doctest::Approx(0.81).epsilon(0.02));
    CHECK(m1.var == doctest::Approx(0.81).epsilon(0.02));
  }
}

TEST_CASE("denoise_point_estimate inverts the forward pass exactly") {
  ScheduleSpec wide = wide_linear();
  Rng rng(7);
  for (auto variant : {NoiseVariant::drift, NoiseVariant::no_drift}) {
    for (int trial = 0; trial < 200; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      std::vector<double> a(4), eps(4);
      for (auto& v : a) v = rng.uniform(-2.0, 2.0);
      for (auto& v : eps) v = rng.normal();
      const auto noisy = noise(variant, a, t, eps, wide);
      const auto rec = denoise_point_estimate(noisy, eps, t, wide, variant);
      for (int i = 0; i < 4; ++i) CHECK(rec[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("denoise_point_estimate with zero eps_hat") {
  ScheduleSpec wide = wide_linear();
  const std::vector<double> a_t{0.8, -0.4};
  const std::vector<double> zero{0.0, 0.0};
  const double t = 0.64;  // abar = 0.36
  const auto nd = denoise_point_estimate(a_t, zero, t, wide, NoiseVariant::no_drift);
  CHECK(nd[0] == a_t[0]);
  CHECK(nd[1] == a_t[1]);
  const auto dr = denoise_point_estimate(a_t, zero, t, wide, NoiseVariant::drift);
  CHECK(dr[0] == doctest::Approx(a_t[0] / 0.6).epsilon(1e-12));
  CHECK(dr[1] == doctest::Approx(a_t[1] / 0.6).epsilon(1e-12));
}

TEST_CASE("renoise terminal step and zero-noise behavior") {
  ScheduleSpec s;  // defaults
  const std::vector<double> a0{0.3, 0.1};
  const std::vector<double> eps{1.0, -1.0};
  const auto out = renoise(a0, 0.0, eps, s, NoiseVariant::no_drift);
  const double band = std::sqrt(1.0 - s.alpha_max);
  CHECK(std::abs(out[0] - a0[0]) <= band * std::abs(eps[0]) + 1e-12);
  CHECK(std::abs(out[1] - a0[1]) <= band * std::abs(eps[1]) + 1e-12);

  const std::vector<double> zero{0.0, 0.0};
  const auto exact = renoise(a0, 0.7, zero, s, NoiseVariant::no_drift);
  CHECK(exact[0] == a0[0]);
  CHECK(exact[1] == a0[1]);
}

// Distributional oracle: renoise(denoise(noisy)) with fresh eps at fixed t
// must match the marginal of noising directly at t.
TEST_CASE("renoise composed with denoise matches the direct marginal (KS)") {
  ScheduleSpec wide = wide_linear();
  const int n = 100000;
  const double t = 0.5;
  const std::vector<double> a{0.25};

  for (auto variant : {NoiseVariant::drift, NoiseVariant::no_drift}) {
    Rng rng(99);
    std::vector<double> direct(n), composed(n);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> e1{rng.normal()};
      direct[i] = noise(variant, a, t, e1, wide)[0];

      const std::vector<double> e2{rng.normal()};
      const auto noisy = noise(variant, a, t, e2, wide);
      const auto a0 = denoise_point_estimate(noisy, e2, t, wide, variant);
      const std::vector<double> e3{rng.normal()};
      composed[i] = renoise(a0, t, e3, wide, variant)[0];
    }
    CHECK(ks_statistic(direct, composed) < 0.02);
  }
}

// Appendix-style recursion: two incremental drift steps with factors
// (0.9, 0.8) match one aggregated step at abar = 0.72, by moments.
TEST_CASE("drift recursion consistency by moment matching") {
  ScheduleSpec wide = wide_linear();
  const int n = 100000;
  const std::vector<double> a{1.0};
  Rng rng(1234);

  std::vector<double> two_step(n), one_step(n);
  for (int i = 0; i < n; ++i) {
    // Step factors alpha_t = 0.9, alpha_{t-1} = 0.8 via abar(t) = 1 - t.
    const std::vector<double> e1{rng.normal()};
    const auto x1 = noise_with_drift(a, 0.1, e1, wide);
    const std::vector<double> e2{rng.normal()};
    two_step[i] = noise_with_drift(x1, 0.2, e2, wide)[0];

    const std::vector<double> e3{rng.normal()};
    one_step[i] = noise_with_drift(a, 0.28, e3, wide)[0];
  }
  const auto m2 = sample_moments(two_step);
  const auto m1 = sample_moments(one_step);
  CHECK(m2.mean == doctest::Approx(std::sqrt(0.72)).epsilon(0.02));
  CHECK(m1.mean == doctest::Approx(std::sqrt(0.72)).epsilon(0.02));
  CHECK(m2.var == doctest::Approx(0.28).epsilon(0.02));
  CHECK(m1.var == doctest::Approx(0.28).epsilon(0.02));
}

// No-drift aggregate law: Var(a_t - a) = 1 - abar(t), E[a_t] = a, every t.
TEST_CASE("no-drift process diffuses without drifting") {
  ScheduleSpec wide = wide_linear();
  const int n = 100000;
  const std::vector<double> a{0.7};
  for (double t : {0.2, 0.5, 0.9}) {
    Rng rng(55 + static_cast<std::uint64_t>(t * 100));
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> e{rng.normal()};
      xs[i] = noise_without_drift(a, t, e, wide)[0] - a[0];
    }
    const auto m = sample_moments(xs);
    CHECK(std::abs(m.mean) < 0.01);
    CHECK(m.var == doctest::Approx(t).epsilon(0.02));  // 1 - abar = t on this ramp
  }
}

// Drift terminal limit: at abar -> alpha_min the marginal is ~N(0, 1-alpha_min).
TEST_CASE("drift process forgets the input at the terminal time") {
  ScheduleSpec s;  // alpha_min = 1e-4
  const int n = 100000;
  const std::vector<double> a{5.0};
  Rng rng(321);
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> e{rng.normal()};
    xs[i] = noise_with_drift(a, 1.0, e, s)[0];
  }
  const auto m = sample_moments(xs);
  CHECK(std::abs(m.mean - std::sqrt(s.alpha_min) * a[0]) < 0.02);
  CHECK(m.var == doctest::Approx(1.0 - s.alpha_min).epsilon(0.02));
}
