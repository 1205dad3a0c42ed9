#pragma once

#include <cstddef>
#include <vector>

#include "npd/tensor.hpp"

namespace npd::ad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// ADAM with decoupled weight decay. Moment buffers are owned here and
// aligned index-for-index with the parameter list.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

    // Throws if any parameter has no gradient, naming the offenders.
    void step(double lr, double weight_decay);
    void zero_grad();

    const std::vector<Tensor>& params() const { return params_; }
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    std::size_t steps() const { return t_; }
    void set_steps(std::size_t t) { t_ = t; }

private:
    std::vector<Tensor> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// base_lr * (1 + cos(pi * epoch / total_epochs)) / 2
double cosine_lr(int epoch, int total_epochs, double base_lr);

}  // namespace npd::ad
