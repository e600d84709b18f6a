#pragma once

#include "graph.hpp"

namespace armor {

// linear warmup to 1.0 over warmup_steps, then cosine decay to 0 at total_steps.
// step is 0-based: multiplier 0 at step 0, 1.0 at step == warmup_steps.
double lr_multiplier(int64_t step, int64_t total_steps, double warmup_ratio);

// clip all gradients jointly to a maximum global L2 norm; returns the pre-clip norm
double clip_global_norm(param_store & ps, double max_norm);

// AdamW with decoupled weight decay and two learning-rate groups: parameter
// names starting with "enc." use lr_encoder, all others lr_heads.
// weight decay skips 1-row parameters (biases, layernorm gains/biases).
struct adamw {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps   = 1e-8;

    int64_t t = 0;  // completed steps
    std::map<std::string, tensor> m;
    std::map<std::string, tensor> v;

    // one update with the given (already scheduled) rates; clears gradients.
    // throws errc::runtime naming the parameter on a non-finite gradient.
    void step(param_store & ps, double lr_heads, double lr_encoder, double weight_decay);
};

}  // namespace armor
