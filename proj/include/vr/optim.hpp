#pragma once

#include <cstdint>
#include <vector>

#include "vr/tensor.hpp"

namespace vr {

// Linear warmup to peak_lr over warmup_fraction of the run, then cosine
// decay to zero at total_steps.
double lr_schedule(int step, int total_steps, double peak_lr, double warmup_fraction);

// Rescales all gradients in place when their global L2 norm exceeds
// max_norm; returns the pre-clip norm. max_norm <= 0 disables clipping.
double clip_global_norm(std::vector<Tensor>& params, double max_norm);

// AdamW with decoupled weight decay and bias correction. Owns first/second
// moment buffers aligned with the parameter list given at construction.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    // One update using each parameter's accumulated gradient (missing
    // gradients count as zero). Decay applies to every parameter.
    void step(double lr);
    void zero_grad();

    int64_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }
    // Moment buffers exposed for checkpointing, aligned with params().
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    void set_step_count(int64_t t) { t_ = t; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double weight_decay_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace vr
