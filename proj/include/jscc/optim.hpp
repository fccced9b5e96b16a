#pragma once

#include <cmath>
#include <vector>

#include "jscc/nn.hpp"
#include "jscc/tensor.hpp"

namespace jscc {

// lr(step) = lr_max * (1 + cos(pi * step / total)) / 2
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max) {
    if (total_steps == 0 || step > total_steps) {
        throw ContractError("cosine_lr: need 0 <= step <= total_steps");
    }
    return lr_max * 0.5 *
           (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                           static_cast<double>(total_steps)));
}

// Adam with bias correction. Parameters in frozen groups (requires_grad off)
// and parameters that received no gradient are skipped entirely, state
// included. Gradients are clipped jointly to a global norm before the update.
template <typename S>
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParameterStore<S>& store, double lr, double clip_norm = 0.0) {
        auto& entries = store.mutable_entries();
        if (m_.empty()) {
            m_.resize(entries.size());
            v_.resize(entries.size());
        }

        double scale = 1.0;
        if (clip_norm > 0.0) {
            double norm_sq = 0.0;
            for (const auto& e : entries) {
                if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
                for (S g : e.tensor.grad()) {
                    norm_sq += static_cast<double>(g) * static_cast<double>(g);
                }
            }
            const double norm = std::sqrt(norm_sq);
            if (norm > clip_norm) scale = clip_norm / norm;
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto& e = entries[i];
            if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
            auto& param = e.tensor.mutable_values();
            const auto& grad = e.tensor.grad();
            auto& m = m_[i];
            auto& v = v_[i];
            if (m.empty()) {
                m.assign(param.size(), 0.0);
                v.assign(param.size(), 0.0);
            }
            for (std::size_t j = 0; j < param.size(); ++j) {
                const double g = static_cast<double>(grad[j]) * scale;
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
                const double m_hat = m[j] / bc1;
                const double v_hat = v[j] / bc2;
                param[j] -= static_cast<S>(lr * m_hat / (std::sqrt(v_hat) + eps_));
            }
        }
    }

    std::size_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // optimizer state kept at 64-bit
};

}  // namespace jscc
