#pragma once

// heterogeneous-supervision training: an offline stage (warm-up on the union
// of sparse and dense splits, then expert-conditioned batches on the dense
// split) followed by an online stage that rolls the model's own refinement
// rounds forward and replays the recorded contexts teacher-forced.

#include "datagen.hpp"
#include "model.hpp"
#include "optim.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace armor {

enum class ablation_t { full, multitask_only, refinement_only, offline_only, online_only };

const char * ablation_name(ablation_t a);
ablation_t   ablation_from_name(const std::string & s);

struct train_config {
    int        warmup_epochs  = 3;
    int        expert_epochs  = 3;
    int        online_epochs  = 10;
    int        rollout_rounds = 3;     // refinement rounds per online rollout
    int        batch_size     = 64;
    double     lr_heads       = 1e-3;  // decoder/classifier learning rate
    double     lr_encoder     = 2e-4;  // frame-encoder learning rate
    double     weight_decay   = 0.1;
    double     warmup_ratio   = 0.03;  // lr warmup fraction of total steps
    double     grad_clip      = 1.0;
    double     temperature    = 1.0;   // online rollout sampling temperature
    int        dense_repeat   = 2;     // dense oversample factor, online stage
    uint64_t   seed           = 0;
    ablation_t ablation       = ablation_t::full;
    // expert batches: apply only the masked task's loss instead of both
    bool       expert_loss_masked_only = false;
};

// per-ablation epoch layout; every variant trains for the same epoch total
struct stage_plan {
    int warmup = 0;
    int expert = 0;
    int online = 0;
};
stage_plan plan_stages(const train_config & cfg);

// per-sample loss decomposition, reported for every sample of every step;
// weights are the exact indicator multipliers applied inside the batch loss
// (the batch loss is the weighted per-sample sum divided by the batch size)
struct sample_loss {
    const char * episode_id = nullptr;
    const char * phase      = nullptr;  // "warmup" | "expert" | "online"
    int          round      = 0;        // online replay round (1-based); 0 offline
    bool         dense      = false;
    double       bce        = 0.0;
    double       bce_weight = 1.0;
    double       ntp        = 0.0;  // mean token nll; 0 when not computed
    double       ntp_weight = 0.0;
};

struct step_stats {
    int64_t      step  = 0;  // optimizer step, 1-based after completion
    const char * phase = nullptr;
    double       loss           = 0.0;
    double       loss_bce       = 0.0;
    double       loss_ntp       = 0.0;
    double       lr             = 0.0;  // effective head lr for this step
    double       grad_norm      = 0.0;  // pre-clip global gradient norm
    double       dense_fraction = 0.0;
};

using loss_observer = std::function<void(const sample_loss &)>;
using step_observer = std::function<void(const step_stats &)>;

// planned optimizer steps for the run (drives the lr schedule)
int64_t planned_steps(const train_config & cfg, const dataset & data);

// full training run. when log_path is non-empty a jsonl line is appended per
// optimizer step; when checkpoint_dir is non-empty, stage-boundary snapshots
// (warmup.ckpt / expert.ckpt) and a final.ckpt are written there.
void run_training(model & m, const dataset & data, const train_config & cfg,
                  const std::string & log_path = "",
                  const std::string & checkpoint_dir = "",
                  const loss_observer & on_sample = nullptr,
                  const step_observer & on_step = nullptr);

}  // namespace armor
