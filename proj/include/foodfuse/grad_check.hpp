#pragma once

#include <cmath>
#include <functional>

#include "foodfuse/ops.hpp"

namespace foodfuse {

// Central-difference verification of reverse-mode gradients, 64-bit only
// (32-bit finite differences drown in rounding noise). `f` must build a
// fresh scalar graph from its argument on every call. Returns
//   max_i |analytic_i - central_diff_i| / (|analytic_i| + 1e-8).
// A disconnected input yields analytic 0 and difference 0, hence error 0.
inline double grad_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& point,
                         double h = 1e-5) {
    Tensor64 x = point.detach();
    x.set_requires_grad(true);
    Tensor64 loss = f(x);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: loss is not finite");
    loss.backward();
    std::vector<double> analytic(static_cast<size_t>(x.numel()), 0.0);
    if (x.has_grad()) analytic = x.grad();

    double max_err = 0.0;
    NoGradGuard ng;
    for (int64_t i = 0; i < x.numel(); i++) {
        const double saved = x.data()[i];
        x.data()[i] = saved + h;
        const double fp = f(x).item();
        x.data()[i] = saved - h;
        const double fm = f(x).item();
        x.data()[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: perturbed loss is not finite");
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[static_cast<size_t>(i)];
        if (!std::isfinite(a)) throw NumericError("grad_check: analytic gradient is not finite");
        const double err = std::abs(a - numeric) / (std::abs(a) + 1e-8);
        if (err > max_err) max_err = err;
    }
    return max_err;
}

// Central-difference check for a parameter that lives inside a module: the
// graph is built from the parameter itself, so `loss` must rebuild a fresh
// scalar from current parameter values on every call. Verifies up to
// `max_elems` entries (evenly strided across the tensor; <=0 means all).
inline double param_grad_check(const std::function<Tensor64()>& loss, Tensor64& param,
                               int64_t max_elems = -1, double h = 1e-5) {
    param.zero_grad();
    {
        Tensor64 l = loss();
        if (!std::isfinite(l.item())) throw NumericError("param_grad_check: loss is not finite");
        l.backward();
    }
    std::vector<double> analytic(static_cast<size_t>(param.numel()), 0.0);
    if (param.has_grad()) analytic = param.grad();

    const int64_t n = param.numel();
    const int64_t count = (max_elems <= 0 || max_elems >= n) ? n : max_elems;
    const int64_t stride = n / count;
    double max_err = 0.0;
    NoGradGuard ng;
    for (int64_t j = 0; j < count; j++) {
        const int64_t i = j * stride;
        const double saved = param.data()[i];
        param.data()[i] = saved + h;
        const double fp = loss().item();
        param.data()[i] = saved - h;
        const double fm = loss().item();
        param.data()[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("param_grad_check: perturbed loss is not finite");
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[static_cast<size_t>(i)];
        if (!std::isfinite(a)) throw NumericError("param_grad_check: gradient is not finite");
        const double err = std::abs(a - numeric) / (std::abs(a) + 1e-8);
        if (err > max_err) max_err = err;
    }
    return max_err;
}

}  // namespace foodfuse
