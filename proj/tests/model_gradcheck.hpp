#pragma once

// finite-difference verification of the full model: a fixed ragged two-sample
// batch (classification BCE + teacher-forced NTP) evaluated in eval mode so
// the loss is a deterministic function of the parameters. shared between the
// unit tests and the acceptance gate.

#include "gradcheck.hpp"
#include "model.hpp"

#include <algorithm>
#include <map>

namespace armor::test {

struct mgc_batch {
    std::vector<tensor>           frames;
    std::vector<std::vector<int>> ctxt;
    std::vector<std::vector<int>> targets;
    std::vector<double>           labels;
};

inline mgc_batch make_gradcheck_batch() {
    mgc_batch b;
    episode e0 = generate_episode(5, false, -1);
    episode e1 = generate_episode(6, true, 3);
    b.frames = { e0.frames, e1.frames };

    cond_context c0;  // round 0: (none, absent, both)
    cond_context c1;
    c1.prev           = prev_det::failure;
    c1.has_reasoning  = true;
    c1.prev_reasoning = e1.reasoning;
    b.ctxt = { context_tokens(c0), context_tokens(c1) };

    auto t0 = e0.reasoning;
    t0.push_back(vocab::tok_eos);
    auto t1 = e1.reasoning;
    t1.push_back(vocab::tok_eos);
    b.targets = { t0, t1 };
    b.labels  = { 0.0, 1.0 };
    return b;
}

inline double model_loss(model & m, const mgc_batch & b, bool do_backward) {
    mgraph  g(m);
    std::vector<const tensor *> fr = { &b.frames[0], &b.frames[1] };
    cm_pack cm = build_context_memory(g, fr, b.ctxt);
    ad::node * bce = ad::bce_rows(g.t, classify_probs(g, cm), b.labels, 1e-12);
    ad::node * ntp = ntp_rows(g, cm, b.targets);
    std::vector<double> w(b.labels.size(), 1.0 / (double) b.labels.size());
    ad::node * loss = ad::add(g.t, ad::rowsum_weighted(g.t, bce, w),
                              ad::rowsum_weighted(g.t, ntp, w));
    if (do_backward) g.t.backward(loss);
    return loss->val.item();
}

// checks analytic gradients of every parameter against central differences.
// entries_per_param < 0 checks every entry; otherwise a seeded subset.
inline gc_result model_gradcheck(model & m, int64_t entries_per_param = -1, double h = 1e-5) {
    mgc_batch batch = make_gradcheck_batch();

    m.ps.zero_grad();
    model_loss(m, batch, true);
    std::map<std::string, tensor> analytic = m.ps.g;
    m.ps.zero_grad();

    gc_result res;
    for (auto & kv : m.ps.w) {
        const std::string & name = kv.first;
        tensor &            w    = kv.second;
        std::vector<int64_t> idx(w.numel());
        for (int64_t i = 0; i < w.numel(); ++i) idx[(size_t) i] = i;
        if (entries_per_param >= 0 && entries_per_param < w.numel()) {
            rng g(seed_stream(0xfd5eed, { fnv1a64(name.data(), name.size()) }));
            for (int64_t i = 0; i < entries_per_param; ++i) {
                int64_t j = i + (int64_t) g.below((uint64_t) (w.numel() - i));
                std::swap(idx[(size_t) i], idx[(size_t) j]);
            }
            idx.resize((size_t) entries_per_param);
        }
        for (int64_t j : idx) {
            double orig = w.v[(size_t) j];
            w.v[(size_t) j] = orig + h;
            double f1 = model_loss(m, batch, false);
            w.v[(size_t) j] = orig - h;
            double f2 = model_loss(m, batch, false);
            w.v[(size_t) j] = orig;
            double fd = (f1 - f2) / (2.0 * h);
            double an = analytic[name].v[(size_t) j];
            double err = std::fabs(an - fd);
            double den = std::max(std::fabs(an), std::fabs(fd));
            if (den >= 1e-3) res.max_rel = std::max(res.max_rel, err / den);
            else res.max_abs_small = std::max(res.max_abs_small, err);
            res.checked += 1;
        }
    }
    return res;
}

}  // namespace armor::test
