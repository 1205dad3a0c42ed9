#include "npd/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace npd::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(double lr, double weight_decay) {
    std::string missing;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) {
            const auto& n = params_[i].name();
            missing += (missing.empty() ? "" : ", ") + (n.empty() ? "#" + std::to_string(i) : n);
        }
    }
    if (!missing.empty()) throw std::runtime_error("adam_step: missing gradient for " + missing);

    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].mutable_values();
        const auto g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + weight_decay * w[j]);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double cosine_lr(int epoch, int total_epochs, double base_lr) {
    if (total_epochs <= 0 || epoch < 0 || epoch >= total_epochs)
        throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) +
                                    " outside [0, " + std::to_string(total_epochs) + ")");
    return base_lr * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs)) / 2.0;
}

}  // namespace npd::ad
