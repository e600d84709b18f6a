#include "train.hpp"

#include "checkpoint.hpp"
#include "common.hpp"
#include "refine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

namespace armor {

const char * ablation_name(ablation_t a) {
    switch (a) {
        case ablation_t::full:            return "full";
        case ablation_t::multitask_only:  return "multitask_only";
        case ablation_t::refinement_only: return "refinement_only";
        case ablation_t::offline_only:    return "offline_only";
        case ablation_t::online_only:     return "online_only";
    }
    fail(errc::invalid_argument, "unknown ablation value");
}

ablation_t ablation_from_name(const std::string & s) {
    if (s == "full")            return ablation_t::full;
    if (s == "multitask_only")  return ablation_t::multitask_only;
    if (s == "refinement_only") return ablation_t::refinement_only;
    if (s == "offline_only")    return ablation_t::offline_only;
    if (s == "online_only")     return ablation_t::online_only;
    fail(errc::invalid_argument, "unknown ablation name: " + s);
}

stage_plan plan_stages(const train_config & cfg) {
    const int total = cfg.warmup_epochs + cfg.expert_epochs + cfg.online_epochs;
    switch (cfg.ablation) {
        case ablation_t::full:
            return {cfg.warmup_epochs, cfg.expert_epochs, cfg.online_epochs};
        case ablation_t::multitask_only:
        case ablation_t::refinement_only:
            return {total, 0, 0};
        case ablation_t::offline_only: {
            const int w = (total + 1) / 2;
            return {w, total - w, 0};
        }
        case ablation_t::online_only:
            return {0, 0, total};
    }
    fail(errc::invalid_argument, "unknown ablation value");
}

namespace {

// stream tags for deterministic per-purpose rng derivation
enum : uint64_t { sid_shuffle = 10, sid_mask = 11, sid_rollout = 12, sid_dropout = 13 };

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

std::vector<const episode *> epoch_pool(const dataset & d, bool with_sparse, int dense_repeat) {
    std::vector<const episode *> v;
    if (with_sparse) {
        for (const auto & e : d.sparse) v.push_back(&e);
    }
    for (int r = 0; r < dense_repeat; ++r) {
        for (const auto & e : d.dense) v.push_back(&e);
    }
    return v;
}

struct batch_nodes {
    ad::node *           bce = nullptr;  // per-sample losses, b x 1
    ad::node *           ntp = nullptr;  // per-sample mean token nll over tf rows
    std::vector<int64_t> tf_rows;        // batch row of each ntp row
};

// classification over all rows plus teacher-forced decoding over the tf subset
batch_nodes build_losses(mgraph & g, const std::vector<const episode *> & eps,
                         const std::vector<cond_context> & ctxs,
                         const std::vector<char> & tf_mask) {
    const int64_t b = (int64_t) eps.size();
    std::vector<const tensor *>   frames((size_t) b);
    std::vector<std::vector<int>> ct((size_t) b);
    std::vector<double>           y((size_t) b);
    for (int64_t i = 0; i < b; ++i) {
        frames[(size_t) i] = &eps[(size_t) i]->frames;
        ct[(size_t) i]     = context_tokens(ctxs[(size_t) i]);
        y[(size_t) i]      = eps[(size_t) i]->failure ? 1.0 : 0.0;
    }

    batch_nodes out;
    cm_pack cm = build_context_memory(g, frames, ct);
    out.bce    = ad::bce_rows(g.t, classify_probs(g, cm), y, 1e-12);

    std::vector<const tensor *>   f2;
    std::vector<std::vector<int>> ct2;
    std::vector<std::vector<int>> targets;
    for (int64_t i = 0; i < b; ++i) {
        if (!tf_mask[(size_t) i]) continue;
        if (!eps[(size_t) i]->has_reasoning) {
            fail(errc::runtime, "train: teacher forcing requested on an unlabeled episode");
        }
        f2.push_back(frames[(size_t) i]);
        ct2.push_back(ct[(size_t) i]);
        std::vector<int> t = eps[(size_t) i]->reasoning;
        t.push_back(vocab::tok_eos);
        targets.push_back(std::move(t));
        out.tf_rows.push_back(i);
    }
    if (!f2.empty()) {
        cm_pack cm2 = build_context_memory(g, f2, ct2);
        out.ntp     = ntp_rows(g, cm2, targets);
    }
    return out;
}

struct train_state {
    model &               m;
    const dataset &       data;
    const train_config &  cfg;
    adamw                 opt;
    int64_t               step        = 0;  // completed optimizer steps
    int64_t               total_steps = 0;
    std::ofstream         log;
    const loss_observer & on_sample;
    const step_observer & on_step;
};

// scalar batch loss from weighted per-sample terms; reports the decomposition
struct batch_scalar {
    ad::node * node  = nullptr;
    double     bce_v = 0.0;
    double     ntp_v = 0.0;
};

batch_scalar reduce_losses(train_state & st, mgraph & g, const batch_nodes & bn,
                           const std::vector<const episode *> & eps,
                           const std::vector<char> & dense,
                           const std::vector<double> & bce_w,
                           const std::vector<double> & ntp_w,
                           const char * phase, int round) {
    const int64_t b    = (int64_t) eps.size();
    const double  invb = 1.0 / (double) b;

    std::vector<double> wb((size_t) b);
    for (int64_t i = 0; i < b; ++i) wb[(size_t) i] = bce_w[(size_t) i] * invb;

    batch_scalar out;
    out.node = ad::rowsum_weighted(g.t, bn.bce, wb);
    out.bce_v = out.node->val.item();

    std::vector<double> ntp_vals((size_t) b, 0.0);
    std::vector<double> ntp_full((size_t) b, 0.0);  // weight actually applied
    if (bn.ntp) {
        std::vector<double> wn(bn.tf_rows.size());
        for (size_t k = 0; k < bn.tf_rows.size(); ++k) {
            const int64_t row = bn.tf_rows[k];
            wn[k] = ntp_w[(size_t) row] * invb;
            ntp_vals[(size_t) row] = bn.ntp->val.at((int64_t) k, 0);
            ntp_full[(size_t) row] = ntp_w[(size_t) row];
        }
        ad::node * nt = ad::rowsum_weighted(g.t, bn.ntp, wn);
        out.ntp_v = nt->val.item();
        out.node  = ad::add(g.t, out.node, nt);
    }

    if (st.on_sample) {
        for (int64_t i = 0; i < b; ++i) {
            sample_loss sl;
            sl.episode_id = eps[(size_t) i]->id.c_str();
            sl.phase      = phase;
            sl.round      = round;
            sl.dense      = dense[(size_t) i] != 0;
            sl.bce        = bn.bce->val.at(i, 0);
            sl.bce_weight = bce_w[(size_t) i];
            sl.ntp        = ntp_vals[(size_t) i];
            sl.ntp_weight = ntp_full[(size_t) i];
            st.on_sample(sl);
        }
    }
    return out;
}

void optimizer_step(train_state & st, ad::tape & t, ad::node * scalar,
                    const char * phase, double bce_v, double ntp_v,
                    double dense_fraction) {
    t.backward(scalar);
    const double gnorm = clip_global_norm(st.m.ps, st.cfg.grad_clip);
    const double mult  = lr_multiplier(st.step, st.total_steps, st.cfg.warmup_ratio);
    st.opt.step(st.m.ps, st.cfg.lr_heads * mult, st.cfg.lr_encoder * mult,
                st.cfg.weight_decay);
    st.step += 1;

    step_stats ss;
    ss.step           = st.step;
    ss.phase          = phase;
    ss.loss           = bce_v + ntp_v;
    ss.loss_bce       = bce_v;
    ss.loss_ntp       = ntp_v;
    ss.lr             = st.cfg.lr_heads * mult;
    ss.grad_norm      = gnorm;
    ss.dense_fraction = dense_fraction;

    if (st.log.is_open()) {
        nlohmann::json j = {
            {"step", ss.step},           {"phase", ss.phase},
            {"loss", ss.loss},           {"loss_bce", ss.loss_bce},
            {"loss_ntp", ss.loss_ntp},   {"lr", ss.lr},
            {"grad_norm", ss.grad_norm}, {"dense_fraction", ss.dense_fraction},
        };
        st.log << j.dump() << "\n";
    }
    if (st.on_step) st.on_step(ss);
}

double dense_fraction_of(const std::vector<char> & dense) {
    if (dense.empty()) return 0.0;
    double s = 0.0;
    for (char c : dense) s += c ? 1.0 : 0.0;
    return s / (double) dense.size();
}

// phase i warm-up: unconditioned contexts; detection loss on every sample,
// next-token loss on the labeled (dense) ones
void run_warmup_epoch(train_state & st, int epoch_global) {
    auto order = epoch_pool(st.data, true, 1);
    rng  sh(seed_stream(st.cfg.seed, {sid_shuffle, 0, (uint64_t) epoch_global}));
    sh.shuffle(order);

    const int64_t n = (int64_t) order.size();
    for (int64_t start = 0; start < n; start += st.cfg.batch_size) {
        const int64_t end = std::min(n, start + st.cfg.batch_size);
        std::vector<const episode *> eps(order.begin() + start, order.begin() + end);
        const int64_t b = end - start;

        std::vector<cond_context> ctxs((size_t) b, initial_context(task_prompt::both));
        std::vector<char>         dense((size_t) b);
        for (int64_t i = 0; i < b; ++i) dense[(size_t) i] = eps[(size_t) i]->has_reasoning;

        rng    drop(seed_stream(st.cfg.seed, {sid_dropout, (uint64_t) st.step}));
        mgraph g(st.m, true, &drop);
        auto   bn = build_losses(g, eps, ctxs, dense);

        std::vector<double> bce_w((size_t) b, 1.0);
        std::vector<double> ntp_w((size_t) b);
        for (int64_t i = 0; i < b; ++i) ntp_w[(size_t) i] = dense[(size_t) i] ? 1.0 : 0.0;

        auto bs = reduce_losses(st, g, bn, eps, dense, bce_w, ntp_w, "warmup", 0);
        optimizer_step(st, g.t, bs.node, "warmup", bs.bce_v, bs.ntp_v,
                       dense_fraction_of(dense));
    }
}

// phase i expert conditioning: dense samples only; one task's ground truth is
// withheld from the context per sample, chosen uniformly
void run_expert_epoch(train_state & st, int epoch_global) {
    auto order = epoch_pool(st.data, false, 1);
    rng  sh(seed_stream(st.cfg.seed, {sid_shuffle, 1, (uint64_t) epoch_global}));
    sh.shuffle(order);
    rng mask_rng(seed_stream(st.cfg.seed, {sid_mask, (uint64_t) epoch_global}));

    const int64_t n = (int64_t) order.size();
    for (int64_t start = 0; start < n; start += st.cfg.batch_size) {
        const int64_t end = std::min(n, start + st.cfg.batch_size);
        std::vector<const episode *> eps(order.begin() + start, order.begin() + end);
        const int64_t b = end - start;

        std::vector<cond_context> ctxs((size_t) b);
        std::vector<double>       bce_w((size_t) b, 1.0);
        std::vector<double>       ntp_w((size_t) b, 1.0);
        std::vector<char>         tf((size_t) b, 1);
        for (int64_t i = 0; i < b; ++i) {
            const episode * ep   = eps[(size_t) i];
            const bool mask_det  = mask_rng.below(2) == 0;
            cond_context & c     = ctxs[(size_t) i];
            c.prompt             = task_prompt::both;
            if (mask_det) {
                // detection withheld; expert reasoning present
                c.prev           = prev_det::none;
                c.has_reasoning  = true;
                c.prev_reasoning = ep->reasoning;
                if (st.cfg.expert_loss_masked_only) ntp_w[(size_t) i] = 0.0;
            } else {
                // reasoning withheld; expert detection present
                c.prev          = ep->failure ? prev_det::failure : prev_det::success;
                c.has_reasoning = false;
                if (st.cfg.expert_loss_masked_only) bce_w[(size_t) i] = 0.0;
            }
            if (ntp_w[(size_t) i] == 0.0) tf[(size_t) i] = 0;
        }

        rng    drop(seed_stream(st.cfg.seed, {sid_dropout, (uint64_t) st.step}));
        mgraph g(st.m, true, &drop);
        auto   bn = build_losses(g, eps, ctxs, tf);

        std::vector<char> dense((size_t) b, 1);
        auto bs = reduce_losses(st, g, bn, eps, dense, bce_w, ntp_w, "expert", 0);
        optimizer_step(st, g.t, bs.node, "expert", bs.bce_v, bs.ntp_v, 1.0);
    }
}

// phase ii online refinement: roll the current model forward for the
// configured rounds, then replay every recorded context teacher-forced;
// round losses are summed, one optimizer step per mini-batch
void run_online_epoch(train_state & st, int epoch_global) {
    auto order = epoch_pool(st.data, true, st.cfg.dense_repeat);
    rng  sh(seed_stream(st.cfg.seed, {sid_shuffle, 2, (uint64_t) epoch_global}));
    sh.shuffle(order);
    const uint64_t rollout_seed = seed_stream(st.cfg.seed, {sid_rollout, (uint64_t) epoch_global});

    const int64_t n = (int64_t) order.size();
    for (int64_t start = 0; start < n; start += st.cfg.batch_size) {
        const int64_t end = std::min(n, start + st.cfg.batch_size);
        std::vector<const episode *> eps(order.begin() + start, order.begin() + end);
        const int64_t b = end - start;

        std::vector<const tensor *> frames((size_t) b);
        std::vector<uint64_t>       stream_ids((size_t) b);
        std::vector<char>           dense((size_t) b);
        for (int64_t i = 0; i < b; ++i) {
            frames[(size_t) i]     = &eps[(size_t) i]->frames;
            stream_ids[(size_t) i] = (uint64_t) (start + i);
            dense[(size_t) i]      = eps[(size_t) i]->has_reasoning;
        }
        auto ctx_rounds = rollout_contexts(st.m, frames, st.cfg.rollout_rounds,
                                           st.cfg.temperature, task_prompt::both,
                                           rollout_seed, stream_ids);

        rng    drop(seed_stream(st.cfg.seed, {sid_dropout, (uint64_t) st.step}));
        mgraph g(st.m, true, &drop);

        std::vector<double> bce_w((size_t) b, 1.0);
        std::vector<double> ntp_w((size_t) b);
        for (int64_t i = 0; i < b; ++i) ntp_w[(size_t) i] = dense[(size_t) i] ? 1.0 : 0.0;

        ad::node * scalar = nullptr;
        double     bce_v = 0.0, ntp_v = 0.0;
        for (int t = 0; t < st.cfg.rollout_rounds; ++t) {
            std::vector<cond_context> ctxs((size_t) b);
            for (int64_t i = 0; i < b; ++i) ctxs[(size_t) i] = ctx_rounds[(size_t) i][(size_t) t];
            auto bn = build_losses(g, eps, ctxs, dense);
            auto bs = reduce_losses(st, g, bn, eps, dense, bce_w, ntp_w, "online", t + 1);
            bce_v += bs.bce_v;
            ntp_v += bs.ntp_v;
            scalar = scalar ? ad::add(g.t, scalar, bs.node) : bs.node;
        }
        optimizer_step(st, g.t, scalar, "online", bce_v, ntp_v, dense_fraction_of(dense));
    }
}

void save_ckpt(const std::string & dir, const char * name, const model & m) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    save_checkpoint(m.ps, dir + "/" + name);
}

}  // namespace

int64_t planned_steps(const train_config & cfg, const dataset & data) {
    const stage_plan plan = plan_stages(cfg);
    const int64_t ns = (int64_t) data.sparse.size();
    const int64_t nd = (int64_t) data.dense.size();
    const int64_t b  = cfg.batch_size;
    int64_t steps = 0;
    if (ns + nd > 0) steps += (int64_t) plan.warmup * ceil_div(ns + nd, b);
    if (nd > 0)      steps += (int64_t) plan.expert * ceil_div(nd, b);
    const int64_t no = ns + (int64_t) cfg.dense_repeat * nd;
    if (no > 0)      steps += (int64_t) plan.online * ceil_div(no, b);
    return steps;
}

void run_training(model & m, const dataset & data, const train_config & cfg,
                  const std::string & log_path, const std::string & checkpoint_dir,
                  const loss_observer & on_sample, const step_observer & on_step) {
    if (cfg.batch_size < 1)                       fail(errc::invalid_argument, "train: batch_size must be >= 1");
    if (cfg.lr_heads <= 0 || cfg.lr_encoder <= 0) fail(errc::invalid_argument, "train: learning rates must be > 0");
    if (cfg.weight_decay < 0)                     fail(errc::invalid_argument, "train: weight_decay must be >= 0");
    if (cfg.warmup_ratio < 0 || cfg.warmup_ratio > 1)
        fail(errc::invalid_argument, "train: warmup_ratio must be in [0, 1]");
    if (cfg.rollout_rounds < 1)                   fail(errc::invalid_argument, "train: rollout_rounds must be >= 1");
    if (cfg.dense_repeat < 1)                     fail(errc::invalid_argument, "train: dense_repeat must be >= 1");
    if (cfg.warmup_epochs < 0 || cfg.expert_epochs < 0 || cfg.online_epochs < 0)
        fail(errc::invalid_argument, "train: epoch counts must be >= 0");
    if (cfg.temperature < 0)                      fail(errc::invalid_argument, "train: temperature must be >= 0");

    const stage_plan plan = plan_stages(cfg);
    if (plan.expert > 0 && data.dense.empty()) {
        fail(errc::invalid_argument, "train: expert stage requires a dense split");
    }

    train_state st{m, data, cfg, adamw{}, 0, 0, std::ofstream{}, on_sample, on_step};
    st.total_steps = planned_steps(cfg, data);
    if (st.total_steps < 1) fail(errc::invalid_argument, "train: no optimizer steps planned");

    if (!log_path.empty()) {
        st.log.open(log_path, std::ios::trunc);
        if (!st.log) fail(errc::io, "train: cannot open log file " + log_path);
    }

    int epoch_global = 0;
    for (int e = 0; e < plan.warmup; ++e, ++epoch_global) run_warmup_epoch(st, epoch_global);
    if (plan.warmup > 0) save_ckpt(checkpoint_dir, "warmup.ckpt", m);

    for (int e = 0; e < plan.expert; ++e, ++epoch_global) run_expert_epoch(st, epoch_global);
    if (plan.expert > 0) save_ckpt(checkpoint_dir, "expert.ckpt", m);

    for (int e = 0; e < plan.online; ++e, ++epoch_global) run_online_epoch(st, epoch_global);

    if (!checkpoint_dir.empty()) save_ckpt(checkpoint_dir, "final.ckpt", m);
    if (st.step != st.total_steps) fail(errc::runtime, "train: planned step count mismatch");
}

}  // namespace armor
