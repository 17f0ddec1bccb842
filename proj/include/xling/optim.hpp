// Adam optimizer with decoupled weight decay.

#ifndef XLING_OPTIM_HPP
#define XLING_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "xling/autodiff.hpp"

namespace xling::ad {

struct AdamConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // decoupled: applied to the value, not the moments
};

// First/second-moment state for one group of parameters. The parameter list
// order must stay fixed across steps.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (Parameter* p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    // One update from the gradients currently held in the parameters.
    // grad_scale multiplies every gradient first (e.g. 1/batch for summed
    // per-example gradients). Gradients are left untouched; call zero_grad()
    // separately.
    void step(double grad_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Parameter& p = *params_[k];
            for (std::size_t i = 0; i < p.value.numel(); ++i) {
                const double g = p.grad.data[i] * grad_scale;
                m_[k].data[i] = cfg_.beta1 * m_[k].data[i] + (1.0 - cfg_.beta1) * g;
                v_[k].data[i] = cfg_.beta2 * v_[k].data[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[k].data[i] / bc1;
                const double vhat = v_[k].data[i] / bc2;
                p.value.data[i] = p.value.data[i] * (1.0 - cfg_.lr * cfg_.weight_decay) -
                                  cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

    std::size_t steps() const { return t_; }

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace xling::ad

#endif  // XLING_OPTIM_HPP
