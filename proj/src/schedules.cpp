#include "c3dm/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c3dm/error.hpp"

namespace c3dm {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_same_size(std::span<const double> a, std::span<const double> b,
                     const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": size mismatch " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace

double alpha_bar(const ScheduleSpec& spec, double t) {
  if (!(t >= 0.0 && t <= spec.horizon_t)) {
    throw DomainError("alpha_bar: t=" + std::to_string(t) +
                      " outside [0, " + std::to_string(spec.horizon_t) + "]");
  }
  const double u = t / spec.horizon_t;
  double v = 0.0;
  switch (spec.family) {
    case ScheduleFamily::linear:
      v = 1.0 - u;
      break;
    case ScheduleFamily::cos2: {
      const double c = std::cos(0.5 * kPi * u);
      v = c * c;
      break;
    }
  }
  return std::clamp(v, spec.alpha_min, spec.alpha_max);
}

std::vector<double> noise_with_drift(std::span<const double> a, double t,
                                     std::span<const double> eps,
                                     const ScheduleSpec& spec) {
  check_same_size(a, eps, "noise_with_drift");
  const double ab = alpha_bar(spec, t);
  const double drift = std::sqrt(ab);
  const double scale = std::sqrt(1.0 - ab);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = drift * a[i] + scale * eps[i];
  return out;
}

std::vector<double> noise_without_drift(std::span<const double> a, double t,
                                        std::span<const double> eps,
                                        const ScheduleSpec& spec) {
  check_same_size(a, eps, "noise_without_drift");
  const double scale = std::sqrt(1.0 - alpha_bar(spec, t));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + scale * eps[i];
  return out;
}

std::vector<double> noise(NoiseVariant variant, std::span<const double> a,
                          double t, std::span<const double> eps,
                          const ScheduleSpec& spec) {
  return variant == NoiseVariant::drift ? noise_with_drift(a, t, eps, spec)
                                        : noise_without_drift(a, t, eps, spec);
}

std::vector<double> denoise_point_estimate(std::span<const double> a_t,
                                           std::span<const double> eps_hat,
                                           double t, const ScheduleSpec& spec,
                                           NoiseVariant variant) {
  check_same_size(a_t, eps_hat, "denoise_point_estimate");
  const double ab = alpha_bar(spec, t);
  const double scale = std::sqrt(1.0 - ab);
  std::vector<double> out(a_t.size());
  if (variant == NoiseVariant::no_drift) {
    for (std::size_t i = 0; i < a_t.size(); ++i) out[i] = a_t[i] - scale * eps_hat[i];
  } else {
    const double inv_drift = 1.0 / std::sqrt(ab);
    for (std::size_t i = 0; i < a_t.size(); ++i)
      out[i] = (a_t[i] - scale * eps_hat[i]) * inv_drift;
  }
  return out;
}

std::vector<double> renoise(std::span<const double> a0_hat, double t_prev,
                            std::span<const double> eps,
                            const ScheduleSpec& spec, NoiseVariant variant) {
  check_same_size(a0_hat, eps, "renoise");
  const double ab = alpha_bar(spec, t_prev);
  const double scale = std::sqrt(1.0 - ab);
  const double drift = variant == NoiseVariant::drift ? std::sqrt(ab) : 1.0;
  std::vector<double> out(a0_hat.size());
  for (std::size_t i = 0; i < a0_hat.size(); ++i)
    out[i] = drift * a0_hat[i] + scale * eps[i];
  return out;
}

}  // namespace c3dm
