#pragma once

#include "datagen.hpp"
#include "graph.hpp"

#include <map>

namespace armor {

struct model_config {
    int    frame_dim         = k_frame_dim;
    int    hidden            = 64;
    int    decoder_layers    = 2;
    int    attn_heads        = 2;
    int    max_reasoning_len = 12;
    double dropout           = 0.1;
    int    ffn_mult          = 4;
    int    max_positions     = 32;
};

enum class prev_det { none, success, failure };
enum class task_prompt { detect, reason, both };

// conditioning context p for one round; round 0 is (none, absent, both)
struct cond_context {
    prev_det         prev          = prev_det::none;
    bool             has_reasoning = false;
    std::vector<int> prev_reasoning;  // content token ids (no bos/eos)
    task_prompt      prompt        = task_prompt::both;
};

struct round_output {
    double           det_prob    = 0.5;   // probability of failure
    bool             det_failure = true;  // det_prob >= 0.5
    std::vector<int> reasoning;           // emitted tokens, eos-terminated when sampled
    std::vector<std::vector<double>> step_dists;
    double           h_det    = 0.0;
    double           h_reason = 0.0;
};

double entropy_bernoulli(double p);
double entropy_categorical(const std::vector<double> & dist);

// reasoning tokens with a trailing eos stripped (what downstream consumers see)
std::vector<int> content_tokens(const std::vector<int> & reasoning);

// [COND_*, SEP] ++ previous reasoning content
std::vector<int> context_tokens(const cond_context & ctx);

struct model {
    model_config cfg;
    param_store  ps;

    void init(uint64_t seed);  // gaussian 0.02 weights; zero output layers -> p=0.5, uniform lm
};

// graph-building session: caches parameter nodes, owns the tape, and samples
// dropout masks when train mode is on
struct mgraph {
    ad::tape  t;
    model *   m          = nullptr;
    bool      train_mode = false;
    rng *     drop_rng   = nullptr;
    std::map<std::string, ad::node *> pcache;

    explicit mgraph(model & mm, bool train = false, rng * dr = nullptr)
        : m(&mm), train_mode(train), drop_rng(dr) {
        if (train && !dr) fail(errc::invalid_argument, "mgraph: train mode needs a dropout rng");
    }

    ad::node * P(const std::string & name);
    ad::node * dropout(ad::node * x);
};

// assembled [context tokens || frame memory] block, padded per sample, plus
// lazily hoisted cross-attention K/V per decoder layer
struct cm_pack {
    ad::node *           cm0 = nullptr;  // (B*lcm) x hidden
    int64_t              lcm = 0;
    std::vector<int64_t> cm_len;
    std::vector<ad::node *> xk, xv;  // per layer, built on first use
};

cm_pack build_context_memory(mgraph & g, const std::vector<const tensor *> & frames,
                             const std::vector<std::vector<int>> & ctx_tokens);

// per-frame projection only (the encode op); rows = ep_len, deterministic in eval mode
tensor encode_frames(model & m, const tensor & frames);

// classifier head over the context memory -> B x 1 failure probabilities
ad::node * classify_probs(mgraph & g, cm_pack & cm);

// teacher-forced per-sample mean nll of target sequences (content + eos)
ad::node * ntp_rows(mgraph & g, cm_pack & cm, const std::vector<std::vector<int>> & targets);

struct decode_result {
    std::vector<std::vector<int>>                  tokens;  // per sample, eos-terminated
    std::vector<std::vector<std::vector<double>>>  dists;   // per sample, per emitted step
};

// autoregressive sampling; temperature 0 = greedy; one rng stream per sample
decode_result decode_sample(mgraph & g, cm_pack & cm, double temperature,
                            const std::vector<rng *> & rngs);

// one refinement-round prediction (classify + decode on a shared encoding)
std::vector<round_output> predict_round_batch(model & m,
                                              const std::vector<const tensor *> & frames,
                                              const std::vector<cond_context> & ctxs,
                                              double temperature,
                                              const std::vector<rng *> & rngs);

round_output predict_round(model & m, const tensor & frames, const cond_context & ctx,
                           double temperature, rng & g);

// per-position next-token distributions for decoder input [BOS] ++ prefix;
// row k is the model's distribution for the token after prefix[0..k)
std::vector<std::vector<double>> next_token_dists(model & m, const tensor & frames,
                                                  const cond_context & ctx,
                                                  const std::vector<int> & prefix);

// single-sample conveniences used by tests and the cli
double           classify_one(model & m, const tensor & frames, const cond_context & ctx);
decode_result    decode_one(model & m, const tensor & frames, const cond_context & ctx,
                            double temperature, rng & g);
double           ntp_one(model & m, const tensor & frames, const cond_context & ctx,
                         const std::vector<int> & target);

}  // namespace armor
