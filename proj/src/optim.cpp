#include "optim.hpp"

#include <cmath>

namespace armor {

double lr_multiplier(int64_t step, int64_t total_steps, double warmup_ratio) {
    if (total_steps <= 0) fail(errc::invalid_argument, "lr_multiplier: total_steps must be positive");
    int64_t warmup = (int64_t) std::llround(warmup_ratio * (double) total_steps);
    if (warmup < 1) warmup = 1;
    if (step < warmup) return (double) step / (double) warmup;
    if (step >= total_steps) return 0.0;
    double x = (double) (step - warmup) / (double) (total_steps - warmup);
    return 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

double clip_global_norm(param_store & ps, double max_norm) {
    double ss = 0.0;
    for (auto & kv : ps.g) ss += t_sumsq(kv.second);
    double norm = std::sqrt(ss);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto & kv : ps.g)
            for (double & x : kv.second.v) x *= s;
    }
    return norm;
}

void adamw::step(param_store & ps, double lr_heads, double lr_encoder, double weight_decay) {
    if (m.empty()) {
        for (auto & kv : ps.w) {
            m[kv.first] = tensor(kv.second.rows, kv.second.cols);
            v[kv.first] = tensor(kv.second.rows, kv.second.cols);
        }
    }
    t += 1;
    const double bc1 = 1.0 - std::pow(beta1, (double) t);
    const double bc2 = 1.0 - std::pow(beta2, (double) t);
    for (auto & kv : ps.w) {
        const std::string & name = kv.first;
        tensor & w  = kv.second;
        tensor & g  = ps.grad(name);
        tensor & mm = m[name];
        tensor & vv = v[name];
        const double lr = name.rfind("enc.", 0) == 0 ? lr_encoder : lr_heads;
        // standard exemption: biases, layernorm params and other 1-row vectors
        // are not decayed; decay applies to matmul weights and embeddings only
        const double wd = w.rows > 1 ? weight_decay : 0.0;
        for (int64_t i = 0; i < w.numel(); ++i) {
            double gi = g.v[(size_t) i];
            if (!std::isfinite(gi)) fail(errc::runtime, "adamw: non-finite gradient in " + name);
            double & mi = mm.v[(size_t) i];
            double & vi = vv.v[(size_t) i];
            mi = beta1 * mi + (1.0 - beta1) * gi;
            vi = beta2 * vi + (1.0 - beta2) * gi * gi;
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            // decoupled weight decay: applied to the weight, not the gradient
            w.v[(size_t) i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w.v[(size_t) i]);
        }
    }
    ps.zero_grad();
}

}  // namespace armor
