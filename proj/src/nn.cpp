#include "fluencebench/nn.hpp"

#include <algorithm>
#include <cmath>

namespace fluencebench {

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (state.step == 0) {
        for (const auto& [name, t] : params) {
            state.m.emplace(name, Tensor<float>(t.shape));
            state.v.emplace(name, Tensor<float>(t.shape));
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    for (auto& [name, p] : params) {
        const auto git = grads.find(name);
        if (git == grads.end())
            throw ConfigError("adam_step: missing gradient for " + name);
        const auto& g = git->second;
        if (g.v.size() != p.v.size())
            throw ConfigError("adam_step: gradient shape mismatch for " + name);
        auto& m = state.m.at(name);
        auto& v = state.v.at(name);
        for (size_t i = 0; i < p.v.size(); ++i) {
            const double gi = g.v[i];
            if (!std::isfinite(gi))
                throw NumericError("adam_step: non-finite gradient in " + name +
                                   " at step " + std::to_string(state.step));
            const double mi = beta1 * m.v[i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v.v[i] + (1.0 - beta2) * gi * gi;
            m.v[i] = static_cast<float>(mi);
            v.v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.v[i] = static_cast<float>(p.v[i] - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

GradCheckResult grad_check(const std::function<double(const std::map<std::string, Tensor<double>>&)>& loss,
                           const std::map<std::string, Tensor<double>>& params,
                           const std::map<std::string, Tensor<double>>& analytic, double eps,
                           uint64_t seed, int min_coords) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");

    // Flat index space over all coordinates, in name order.
    struct Coord {
        std::string name;
        size_t idx;
    };
    std::vector<Coord> all;
    for (const auto& [name, t] : params)
        for (size_t i = 0; i < t.v.size(); ++i)
            all.push_back({name, i});

    GradCheckResult res;
    if (all.empty())
        return res; // vacuous pass for a zero-parameter model

    std::vector<size_t> pick(all.size());
    for (size_t i = 0; i < pick.size(); ++i)
        pick[i] = i;
    if (static_cast<int>(pick.size()) > min_coords) {
        deterministic_shuffle(pick, seed);
        pick.resize(static_cast<size_t>(min_coords));
    }

    for (size_t idx : pick) {
        const Coord& c = all[idx];
        auto bumped = params;
        bumped.at(c.name).v[c.idx] += eps;
        const double up = loss(bumped);
        bumped.at(c.name).v[c.idx] -= 2.0 * eps;
        const double down = loss(bumped);
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite loss");
        const double fd = (up - down) / (2.0 * eps);
        const double an = analytic.count(c.name) && analytic.at(c.name).v.size() > c.idx
                              ? analytic.at(c.name).v[c.idx]
                              : 0.0;
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / denom);
        res.n_checked += 1;
    }
    return res;
}

} // namespace fluencebench
