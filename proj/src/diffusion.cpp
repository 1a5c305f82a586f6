#include "foodfuse/diffusion.hpp"

#include <cmath>
#include <string>

#include "foodfuse/ops.hpp"

namespace foodfuse {

Schedule build_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    if (T < 1) throw ConfigError("build_schedule: T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1, got [" +
                          std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    if (kind != ScheduleKind::linear) throw ConfigError("build_schedule: unknown schedule kind");

    Schedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double run = 1.0;
    for (int t = 0; t < T; t++) {
        s.beta[t] = (T == 1) ? beta_start
                             : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                static_cast<double>(T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        run *= s.alpha[t];
        s.alpha_bar[t] = run;
    }
    return s;
}

double alpha_bar_at(const Schedule& sched, int t) {
    if (t == -1) return 1.0;
    if (t < 0 || t >= sched.T)
        throw ConfigError("alpha_bar_at: timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(sched.T) + ")");
    return sched.alpha_bar[t];
}

std::vector<int> ddim_time_grid(int T, int steps) {
    if (steps < 1 || steps > T)
        throw ConfigError("ddim_time_grid: steps must be in [1, " + std::to_string(T) +
                          "], got " + std::to_string(steps));
    std::vector<int> grid(steps);
    for (int j = 0; j < steps; j++)
        grid[j] = T - 1 - static_cast<int>((static_cast<int64_t>(j) * T) / steps);
    return grid;
}

template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, int t, const Tensor<T>& eps, const Schedule& sched) {
    if (z0.shape() != eps.shape()) throw ShapeError("add_noise", z0.shape(), eps.shape());
    const double ab = alpha_bar_at(sched, t);
    return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, const std::vector<int>& ts, const Tensor<T>& eps,
                    const Schedule& sched) {
    if (z0.shape() != eps.shape()) throw ShapeError("add_noise", z0.shape(), eps.shape());
    if (z0.shape().empty() || static_cast<size_t>(z0.shape()[0]) != ts.size())
        throw ConfigError("add_noise: got " + std::to_string(ts.size()) +
                          " timesteps for batch extent " +
                          (z0.shape().empty() ? std::string("<scalar>")
                                              : std::to_string(z0.shape()[0])));
    const int B = z0.shape()[0];
    Tensor<T> sig = Tensor<T>::zeros({B});
    Tensor<T> noi = Tensor<T>::zeros({B});
    for (int b = 0; b < B; b++) {
        const double ab = alpha_bar_at(sched, ts[b]);
        sig.data()[b] = static_cast<T>(std::sqrt(ab));
        noi.data()[b] = static_cast<T>(std::sqrt(1.0 - ab));
    }
    return add(scale_per_batch(z0, sig), scale_per_batch(eps, noi));
}

template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_pred, int t, int t_prev,
                    const Schedule& sched, double eta, const Tensor<T>* noise) {
    if (z_t.shape() != eps_pred.shape()) throw ShapeError("ddim_step", z_t.shape(), eps_pred.shape());
    if (t_prev >= t)
        throw ConfigError("ddim_step: t_prev (" + std::to_string(t_prev) +
                          ") must be below t (" + std::to_string(t) + ")");
    if (eta < 0.0 || eta > 1.0)
        throw ConfigError("ddim_step: eta must lie in [0, 1], got " + std::to_string(eta));
    const double ab_t = alpha_bar_at(sched, t);
    const double ab_p = alpha_bar_at(sched, t_prev);
    if (!(ab_t > 0.0))
        throw NumericError("ddim_step: alpha_bar at t=" + std::to_string(t) + " is not positive");

    // predicted clean latent
    Tensor<T> z0_hat = scale(sub(z_t, scale(eps_pred, std::sqrt(1.0 - ab_t))),
                             1.0 / std::sqrt(ab_t));

    double sigma = 0.0;
    if (eta > 0.0) {
        sigma = eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
        if (noise == nullptr)
            throw ConfigError("ddim_step: eta > 0 requires a noise tensor");
        if (noise->shape() != z_t.shape())
            throw ShapeError("ddim_step noise", z_t.shape(), noise->shape());
    }
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));

    Tensor<T> out = add(scale(z0_hat, std::sqrt(ab_p)), scale(eps_pred, dir));
    if (sigma > 0.0) out = add(out, scale(*noise, sigma));
    return out;
}

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double s) {
    if (eps_cond.shape() != eps_uncond.shape())
        throw ShapeError("cfg_combine", eps_cond.shape(), eps_uncond.shape());
    if (s < 0.0) throw ConfigError("cfg_combine: guidance scale must be >= 0");
    if (s == 1.0) return eps_cond;
    if (s == 0.0) return eps_uncond;
    return add(eps_uncond, scale(sub(eps_cond, eps_uncond), s));
}

template <typename T>
Tensor<T> sample(const EpsFn<T>& eps_fn, const Shape& latent_shape, const SamplerConfig& cfg,
                 const Schedule& sched) {
    if (cfg.guidance_scale < 0.0)
        throw ConfigError("sample: guidance scale must be >= 0");
    if (cfg.eta < 0.0 || cfg.eta > 1.0)
        throw ConfigError("sample: eta must lie in [0, 1]");
    const std::vector<int> grid = ddim_time_grid(sched.T, cfg.steps);

    NoGradGuard no_grad;
    RngStream init(cfg.seed, "sampler.init");
    Tensor<T> z = Tensor<T>::zeros(latent_shape);
    init.fill_normal(z.data(), z.numel());

    auto all_finite = [](const Tensor<T>& x) {
        for (int64_t i = 0; i < x.numel(); i++)
            if (!std::isfinite(static_cast<double>(x.data()[i]))) return false;
        return true;
    };

    for (int j = 0; j < cfg.steps; j++) {
        const int t = grid[j];
        const int t_prev = (j + 1 < cfg.steps) ? grid[j + 1] : -1;

        Tensor<T> eps;
        if (cfg.guidance_scale == 1.0) {
            eps = eps_fn(z, t, true);
        } else if (cfg.guidance_scale == 0.0) {
            eps = eps_fn(z, t, false);
        } else {
            Tensor<T> eps_c = eps_fn(z, t, true);
            Tensor<T> eps_u = eps_fn(z, t, false);
            eps = cfg_combine(eps_c, eps_u, cfg.guidance_scale);
        }

        if (cfg.eta > 0.0) {
            RngStream step_noise(cfg.seed, "sampler.noise", static_cast<uint64_t>(j));
            Tensor<T> n = Tensor<T>::zeros(latent_shape);
            step_noise.fill_normal(n.data(), n.numel());
            z = ddim_step(z, eps, t, t_prev, sched, cfg.eta, &n);
        } else {
            z = ddim_step(z, eps, t, t_prev, sched);
        }

        if (!all_finite(z))
            throw NumericError("sample: non-finite latent at step " + std::to_string(j) +
                               " (t=" + std::to_string(t) + ")");
    }
    return z;
}

#define FF_INSTANTIATE_DIFFUSION(T)                                                              \
    template Tensor<T> add_noise<T>(const Tensor<T>&, int, const Tensor<T>&, const Schedule&);   \
    template Tensor<T> add_noise<T>(const Tensor<T>&, const std::vector<int>&, const Tensor<T>&, \
                                    const Schedule&);                                            \
    template Tensor<T> ddim_step<T>(const Tensor<T>&, const Tensor<T>&, int, int,                \
                                    const Schedule&, double, const Tensor<T>*);                  \
    template Tensor<T> cfg_combine<T>(const Tensor<T>&, const Tensor<T>&, double);               \
    template Tensor<T> sample<T>(const EpsFn<T>&, const Shape&, const SamplerConfig&,            \
                                 const Schedule&);

FF_INSTANTIATE_DIFFUSION(float)
FF_INSTANTIATE_DIFFUSION(double)

}  // namespace foodfuse
