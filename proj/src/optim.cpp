#include "gtprune/optim.hpp"

#include <cmath>

namespace gtprune {

void Adam::attach(const std::vector<Tensor>& params) {
    params_ = params;
    m_.clear();
    v_.clear();
    for (const Tensor& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
    t_ = 0;
}

void Adam::step(const std::vector<const std::vector<double>*>& update_masks) {
    check(update_masks.empty() || update_masks.size() == params_.size(),
          "adam: update mask count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        auto& vals = params_[p].value();
        const auto& grads = params_[p].grad();
        const std::vector<double>* mask = update_masks.empty() ? nullptr : update_masks[p];
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (mask && (*mask)[i] == 0.0) continue;  // frozen while masked
            const double g = grads[i];
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
            const double mh = m_[p][i] / bc1;
            const double vh = v_[p][i] / bc2;
            vals[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::zero_grad() {
    gtprune::zero_grad(params_);
}

}  // namespace gtprune
