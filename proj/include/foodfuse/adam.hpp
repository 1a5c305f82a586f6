#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "foodfuse/params.hpp"

namespace foodfuse {

// Adam optimizer over a parameter registry. First- and second-moment buffers
// are kept in double precision and addressed by parameter name, so a
// checkpoint can round-trip them. Parameters whose requires_grad flag is off,
// or that never received a gradient, are left untouched by step().
template <typename T>
class Adam {
public:
    struct Config {
        double lr = 5e-5;
        double beta1 = 0.5;
        double beta2 = 0.99;
        double eps = 1e-8;
    };

    struct State {
        std::vector<double> m, v;
        int64_t t = 0;
    };

    explicit Adam(Config cfg = {}) : cfg_(cfg) {
        if (cfg_.lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
        if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
            throw ConfigError("adam: betas must lie in [0, 1)");
    }

    const Config& config() const { return cfg_; }
    void set_lr(double lr) {
        if (lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
        cfg_.lr = lr;
    }

    void step(ParamRegistry<T>& params) {
        for (auto& np : params.items_mut()) {
            Tensor<T>& p = np.tensor;
            if (!p.requires_grad() || !p.has_grad()) continue;
            const std::vector<T>& g = p.grad();
            State& st = state_[np.name];
            if (st.m.empty()) {
                st.m.assign(static_cast<size_t>(p.numel()), 0.0);
                st.v.assign(static_cast<size_t>(p.numel()), 0.0);
            }
            if (st.m.size() != static_cast<size_t>(p.numel()))
                throw ConfigError("adam: state size mismatch for parameter " + np.name);
            st.t++;
            const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
            const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
            T* w = p.data();
            for (int64_t i = 0; i < p.numel(); i++) {
                const double gi = static_cast<double>(g[static_cast<size_t>(i)]);
                double& m = st.m[static_cast<size_t>(i)];
                double& v = st.v[static_cast<size_t>(i)];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
                const double update = cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
                w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
            }
        }
    }

    // Checkpoint access: stable view of per-parameter moment buffers.
    const std::unordered_map<std::string, State>& states() const { return state_; }
    void restore_state(const std::string& name, State st) { state_[name] = std::move(st); }
    void reset() { state_.clear(); }

private:
    Config cfg_;
    std::unordered_map<std::string, State> state_;
};

using Adam32 = Adam<float>;
using Adam64 = Adam<double>;

}  // namespace foodfuse
