#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "foodfuse/rng.hpp"
#include "foodfuse/tensor.hpp"

namespace foodfuse {

enum class ScheduleKind { linear };

// Noise schedule: beta[t] variances, alpha[t] = 1 - beta[t], and
// alpha_bar[t] = prod_{s<=t} alpha[s]. alpha_bar is strictly decreasing.
struct Schedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

Schedule build_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                        ScheduleKind kind = ScheduleKind::linear);

// alpha_bar with the t = -1 sentinel meaning "fully denoised" (alpha_bar = 1).
double alpha_bar_at(const Schedule& sched, int t);

// Descending timestep grid for DDIM: steps values uniformly strided over
// [0, T), starting at T-1. Follow the final entry with the t = -1 sentinel
// so the last update targets alpha_bar = 1 exactly.
std::vector<int> ddim_time_grid(int T, int steps);

struct SamplerConfig {
    int steps = 30;
    double guidance_scale = 1.5;
    double eta = 0.0;  // 0 = deterministic DDIM
    uint64_t seed = 0;
};

// z_t = sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps.
// Differentiable in z0 and eps.
template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, int t, const Tensor<T>& eps, const Schedule& sched);

// Batched variant: one timestep per leading-axis sample.
template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, const std::vector<int>& ts, const Tensor<T>& eps,
                    const Schedule& sched);

// One DDIM update from t down to t_prev (t_prev = -1 targets alpha_bar = 1).
// With eta = 0 the step is deterministic and `noise` stays unused; with
// eta > 0 a unit-normal `noise` tensor of z_t's shape must be supplied.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_pred, int t, int t_prev,
                    const Schedule& sched, double eta = 0.0, const Tensor<T>* noise = nullptr);

// Guided prediction: eps_uncond + s * (eps_cond - eps_uncond). At s = 1
// returns eps_cond itself and at s = 0 returns eps_uncond itself, so those
// endpoints are exact.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double s);

// Noise-prediction callback: (z_t, t, conditional?) -> predicted eps.
// The sampler only invokes branches it needs: at guidance 1 the
// unconditional branch is never called, at guidance 0 the conditional one
// is never called.
template <typename T>
using EpsFn = std::function<Tensor<T>(const Tensor<T>&, int, bool)>;

// Full DDIM sampling loop: draws z from a unit normal keyed by cfg.seed,
// then runs cfg.steps guided updates down the time grid. Throws
// NumericError naming the step index if any intermediate goes non-finite.
template <typename T>
Tensor<T> sample(const EpsFn<T>& eps_fn, const Shape& latent_shape, const SamplerConfig& cfg,
                 const Schedule& sched);

}  // namespace foodfuse
