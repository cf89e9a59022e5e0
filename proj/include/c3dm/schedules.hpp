#pragma once

#include <span>
#include <vector>

namespace c3dm {

enum class ScheduleFamily { linear, cos2 };

// Which forward noising process is in effect:
//   drift:    a_t = sqrt(abar(t)) * a0 + sqrt(1 - abar(t)) * eps
//   no_drift: a_t = a0 + sqrt(1 - abar(t)) * eps
enum class NoiseVariant { drift, no_drift };

// Aggregated noise schedule abar(t) on [0, horizon_t], clamped away from
// both 0 and 1 so the epsilon regression never degenerates to an identity
// target and the drift inverse stays well conditioned.
struct ScheduleSpec {
  ScheduleFamily family = ScheduleFamily::linear;
  double horizon_t = 1.0;
  double alpha_max = 1.0 - 1e-4;
  double alpha_min = 1e-4;
};

// abar(t); monotone non-increasing, in [alpha_min, alpha_max].
// Throws DomainError for t outside [0, horizon_t].
double alpha_bar(const ScheduleSpec& spec, double t);

// Forward noising, drift variant (standard DDPM form).
std::vector<double> noise_with_drift(std::span<const double> a, double t,
                                     std::span<const double> eps,
                                     const ScheduleSpec& spec);

// Forward noising, pure-diffusion variant (no drift toward the origin).
std::vector<double> noise_without_drift(std::span<const double> a, double t,
                                        std::span<const double> eps,
                                        const ScheduleSpec& spec);

std::vector<double> noise(NoiseVariant variant, std::span<const double> a,
                          double t, std::span<const double> eps,
                          const ScheduleSpec& spec);

// Point estimate of the clean action given a noisy latent and a (predicted
// or exact) epsilon:
//   no_drift: a_t - sqrt(1 - abar(t)) * eps_hat
//   drift:    (a_t - sqrt(1 - abar(t)) * eps_hat) / sqrt(abar(t))
std::vector<double> denoise_point_estimate(std::span<const double> a_t,
                                           std::span<const double> eps_hat,
                                           double t, const ScheduleSpec& spec,
                                           NoiseVariant variant);

// Re-noise a point estimate down to time t_prev (one reverse-process step;
// the mean/scale follow the per-variant posterior forms).
std::vector<double> renoise(std::span<const double> a0_hat, double t_prev,
                            std::span<const double> eps,
                            const ScheduleSpec& spec, NoiseVariant variant);

}  // namespace c3dm
