#pragma once

#include <cstdint>
#include <vector>

#include "gtprune/tensor.hpp"

namespace gtprune {

// Adam with a per-parameter optional update mask: masked entries keep their
// value and moments bit-frozen (the weight pruner's contract).
class Adam {
public:
    Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const std::vector<Tensor>& params);

    // update_masks: same length as params or empty; entries may be nullptr
    // (no masking for that tensor).
    void step(const std::vector<const std::vector<double>*>& update_masks = {});

    void zero_grad();

    double lr() const { return lr_; }
    std::size_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace gtprune
