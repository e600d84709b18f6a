#include "model.hpp"

#include <algorithm>
#include <cmath>

namespace armor {

double entropy_bernoulli(double p) {
    if (p < 0.0 || p > 1.0) fail(errc::invalid_argument, "entropy_bernoulli: p out of [0,1]");
    auto xlx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return -(xlx(p) + xlx(1.0 - p));
}

double entropy_categorical(const std::vector<double> & dist) {
    double h = 0.0;
    for (double p : dist) {
        if (p < 0.0) fail(errc::invalid_argument, "entropy_categorical: negative probability");
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

std::vector<int> content_tokens(const std::vector<int> & reasoning) {
    std::vector<int> c = reasoning;
    if (!c.empty() && c.back() == vocab::tok_eos) c.pop_back();
    return c;
}

std::vector<int> context_tokens(const cond_context & ctx) {
    int cond = ctx.prev == prev_det::none      ? vocab::tok_cond_none
               : ctx.prev == prev_det::success ? vocab::tok_cond_success
                                               : vocab::tok_cond_failure;
    std::vector<int> t = { cond, vocab::tok_sep };
    if (ctx.has_reasoning)
        t.insert(t.end(), ctx.prev_reasoning.begin(), ctx.prev_reasoning.end());
    return t;
}

// ---- parameters ----------------------------------------------------------

static bool is_zero_init(const std::string & name) {
    if (name.rfind("lm_head.", 0) == 0) return true;  // uniform next-token dist at init
    if (name == "cls.mlp.w3" || name == "cls.mlp.b3") return true;  // det_prob = 0.5 at init
    return false;
}

static bool is_bias(const std::string & name) {
    auto   dot  = name.rfind('.');
    std::string comp = dot == std::string::npos ? name : name.substr(dot + 1);
    return comp.size() <= 2 && comp[0] == 'b';
}

static int ln_kind(const std::string & name) {  // 1 = gain, 2 = bias, 0 = neither
    auto dot = name.rfind('.');
    std::string comp = dot == std::string::npos ? name : name.substr(dot + 1);
    if (comp.find("ln") == std::string::npos) return 0;
    if (comp.size() >= 2 && comp.compare(comp.size() - 2, 2, "_g") == 0) return 1;
    if (comp.size() >= 2 && comp.compare(comp.size() - 2, 2, "_b") == 0) return 2;
    return 0;
}

void model::init(uint64_t seed) {
    ps = param_store{};
    const int H = cfg.hidden, F = cfg.frame_dim, V = vocab::size(), FF = H * cfg.ffn_mult;
    if (H % cfg.attn_heads != 0)
        fail(errc::invalid_argument, "model: hidden must be divisible by attn_heads");

    ps.add("enc.w", F, H);
    ps.add("enc.b", 1, H);
    ps.add("enc.ln_g", 1, H);
    ps.add("enc.ln_b", 1, H);
    ps.add("tok_emb", V, H);
    ps.add("pos_emb", cfg.max_positions, H);
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        std::string p = "dec" + std::to_string(l) + ".";
        ps.add(p + "ln1_g", 1, H);
        ps.add(p + "ln1_b", 1, H);
        for (const char * w : { "wq", "wk", "wv", "wo" }) ps.add(p + "attn." + w, H, H);
        for (const char * b : { "bq", "bk", "bv", "bo" }) ps.add(p + "attn." + b, 1, H);
        ps.add(p + "ln2_g", 1, H);
        ps.add(p + "ln2_b", 1, H);
        for (const char * w : { "wq", "wk", "wv", "wo" }) ps.add(p + "xattn." + w, H, H);
        for (const char * b : { "bq", "bk", "bv", "bo" }) ps.add(p + "xattn." + b, 1, H);
        ps.add(p + "ln3_g", 1, H);
        ps.add(p + "ln3_b", 1, H);
        ps.add(p + "mlp.w1", H, FF);
        ps.add(p + "mlp.b1", 1, FF);
        ps.add(p + "mlp.w2", FF, H);
        ps.add(p + "mlp.b2", 1, H);
    }
    ps.add("dec.lnf_g", 1, H);
    ps.add("dec.lnf_b", 1, H);
    ps.add("lm_head.w", H, V);
    ps.add("lm_head.b", 1, V);

    ps.add("cls.proj.w1", H, H);
    ps.add("cls.proj.b1", 1, H);
    ps.add("cls.proj.w2", H, H);
    ps.add("cls.proj.b2", 1, H);
    ps.add("cls.proj_ln_g", 1, H);
    ps.add("cls.proj_ln_b", 1, H);
    ps.add("cls.query", 1, H);
    for (const char * w : { "wq", "wk", "wv", "wo" }) ps.add(std::string("cls.attn.") + w, H, H);
    for (const char * b : { "bq", "bk", "bv", "bo" }) ps.add(std::string("cls.attn.") + b, 1, H);
    ps.add("cls.out_ln_g", 1, H);
    ps.add("cls.out_ln_b", 1, H);
    ps.add("cls.mlp.w1", H, H);
    ps.add("cls.mlp.b1", 1, H);
    ps.add("cls.mlp.w2", H, H / 2);
    ps.add("cls.mlp.b2", 1, H / 2);
    ps.add("cls.mlp.w3", H / 2, 1);
    ps.add("cls.mlp.b3", 1, 1);

    for (auto & kv : ps.w) {
        const std::string & name = kv.first;
        tensor &            w    = kv.second;
        int lk = ln_kind(name);
        if (lk == 1) {
            w.fill(1.0);
        } else if (lk == 2 || is_bias(name) || is_zero_init(name)) {
            w.fill(0.0);
        } else {
            // the decoder trunk uses a gpt-2 style fixed scale; the classifier head
            // uses fan-in scaling so its gelu stack stays out of the linear regime
            // at small hidden sizes (0.02 starves the head of class signal there)
            double sd = name.rfind("cls.", 0) == 0 ? 1.0 / std::sqrt((double) w.rows) : 0.02;
            rng g(seed_stream(seed, { fnv1a64(name.data(), name.size()) }));
            for (double & x : w.v) x = sd * g.normal();
        }
    }
}

// ---- graph session helpers ----------------------------------------------

ad::node * mgraph::P(const std::string & name) {
    auto it = pcache.find(name);
    if (it != pcache.end()) return it->second;
    ad::node * n  = ad::param(t, m->ps, name);
    pcache[name]  = n;
    return n;
}

ad::node * mgraph::dropout(ad::node * x) {
    if (!train_mode || m->cfg.dropout <= 0.0) return x;
    const double keep = 1.0 - m->cfg.dropout;
    tensor mask(x->val.rows, x->val.cols);
    for (double & v : mask.v) v = drop_rng->uniform() < keep ? 1.0 / keep : 0.0;
    return ad::mul(t, x, ad::input(t, std::move(mask)));
}

static ad::node * linear(mgraph & g, ad::node * x, const std::string & w, const std::string & b) {
    return ad::add_rowvec(g.t, ad::matmul(g.t, x, g.P(w)), g.P(b));
}

static ad::node * lnorm(mgraph & g, ad::node * x, const std::string & gn, const std::string & bn) {
    return ad::layernorm(g.t, x, g.P(gn), g.P(bn));
}

// ---- frame encoder -------------------------------------------------------

static ad::node * frame_memory(mgraph & g, const std::vector<const tensor *> & frames) {
    const model_config & cfg = g.m->cfg;
    tensor stacked((int64_t) frames.size() * k_ep_len, cfg.frame_dim);
    for (size_t b = 0; b < frames.size(); ++b) {
        const tensor & f = *frames[b];
        if (f.rows != k_ep_len || f.cols != cfg.frame_dim)
            fail(errc::invalid_argument, "encode: frames must be ep_len x frame_dim");
        std::copy(f.v.begin(), f.v.end(),
                  stacked.v.begin() + (size_t) ((int64_t) b * k_ep_len * cfg.frame_dim));
    }
    ad::node * x = ad::input(g.t, std::move(stacked));
    x = ad::gelu(g.t, linear(g, x, "enc.w", "enc.b"));
    return lnorm(g, x, "enc.ln_g", "enc.ln_b");
}

tensor encode_frames(model & m, const tensor & frames) {
    mgraph g(m);
    return frame_memory(g, { &frames })->val;
}

// ---- context memory ------------------------------------------------------

cm_pack build_context_memory(mgraph & g, const std::vector<const tensor *> & frames,
                             const std::vector<std::vector<int>> & ctx_tokens) {
    const model_config & cfg = g.m->cfg;
    const int64_t B = (int64_t) frames.size();
    if (B == 0 || ctx_tokens.size() != (size_t) B)
        fail(errc::invalid_argument, "build_context_memory: batch mismatch");

    cm_pack cm;
    cm.cm_len.resize((size_t) B);
    int64_t lcm = 0;
    for (int64_t b = 0; b < B; ++b) {
        int64_t len = (int64_t) ctx_tokens[(size_t) b].size() + k_ep_len;
        if (len > cfg.max_positions)
            fail(errc::invalid_argument, "build_context_memory: sequence exceeds max_positions");
        cm.cm_len[(size_t) b] = len;
        lcm = std::max(lcm, len);
    }
    cm.lcm = lcm;

    std::vector<int>     tok_ids((size_t) (B * lcm), -1);
    std::vector<int>     pos_ids((size_t) (B * lcm), -1);
    std::vector<int64_t> scat((size_t) (B * lcm), 0);  // 0 -> shared zero row
    for (int64_t b = 0; b < B; ++b) {
        const auto & ct = ctx_tokens[(size_t) b];
        for (size_t i = 0; i < ct.size(); ++i) {
            tok_ids[(size_t) (b * lcm) + i] = ct[i];
            pos_ids[(size_t) (b * lcm) + i] = (int) i;
        }
        for (int j = 0; j < k_ep_len; ++j) {
            size_t row    = (size_t) (b * lcm) + ct.size() + (size_t) j;
            pos_ids[row]  = (int) ct.size() + j;
            scat[row]     = 1 + b * k_ep_len + j;
        }
    }

    ad::node * tok = ad::embed(g.t, g.P("tok_emb"), tok_ids);
    ad::node * pos = ad::embed(g.t, g.P("pos_emb"), pos_ids);
    ad::node * fm  = frame_memory(g, frames);
    ad::node * z   = ad::input(g.t, tensor(1, cfg.hidden));
    ad::node * fms = ad::gather_rows(g.t, ad::concat_rows(g.t, { z, fm }), scat);
    cm.cm0 = ad::add(g.t, ad::add(g.t, tok, pos), fms);
    cm.xk.assign((size_t) cfg.decoder_layers, nullptr);
    cm.xv.assign((size_t) cfg.decoder_layers, nullptr);
    return cm;
}

// ---- decoder block -------------------------------------------------------

struct seq_dims {
    int64_t              lq = 0;
    std::vector<int64_t> len;
};

static ad::node * decoder_layer(mgraph & g, int l, ad::node * x, cm_pack & cm,
                                const seq_dims & d) {
    const model_config & cfg = g.m->cfg;
    const int64_t B = (int64_t) d.len.size();
    std::string   p = "dec" + std::to_string(l) + ".";

    ad::attn_spec self;
    self.batch  = B;
    self.lq = self.lk = d.lq;
    self.heads  = cfg.attn_heads;
    self.causal = true;
    self.q_len = self.kv_len = d.len;

    ad::node * xn = lnorm(g, x, p + "ln1_g", p + "ln1_b");
    ad::node * a  = ad::attention(g.t, linear(g, xn, p + "attn.wq", p + "attn.bq"),
                                  linear(g, xn, p + "attn.wk", p + "attn.bk"),
                                  linear(g, xn, p + "attn.wv", p + "attn.bv"), self);
    x = ad::add(g.t, x, g.dropout(linear(g, a, p + "attn.wo", p + "attn.bo")));

    if (!cm.xk[(size_t) l]) {  // cross K/V depend only on cm0: hoisted per session
        cm.xk[(size_t) l] = linear(g, cm.cm0, p + "xattn.wk", p + "xattn.bk");
        cm.xv[(size_t) l] = linear(g, cm.cm0, p + "xattn.wv", p + "xattn.bv");
    }
    ad::attn_spec cross;
    cross.batch  = B;
    cross.lq     = d.lq;
    cross.lk     = cm.lcm;
    cross.heads  = cfg.attn_heads;
    cross.causal = false;
    cross.q_len  = d.len;
    cross.kv_len = cm.cm_len;

    xn = lnorm(g, x, p + "ln2_g", p + "ln2_b");
    a  = ad::attention(g.t, linear(g, xn, p + "xattn.wq", p + "xattn.bq"), cm.xk[(size_t) l],
                       cm.xv[(size_t) l], cross);
    x  = ad::add(g.t, x, g.dropout(linear(g, a, p + "xattn.wo", p + "xattn.bo")));

    xn = lnorm(g, x, p + "ln3_g", p + "ln3_b");
    ad::node * h = ad::gelu(g.t, linear(g, xn, p + "mlp.w1", p + "mlp.b1"));
    h            = linear(g, h, p + "mlp.w2", p + "mlp.b2");
    return ad::add(g.t, x, g.dropout(h));
}

// ---- classifier head -----------------------------------------------------

ad::node * classify_probs(mgraph & g, cm_pack & cm) {
    const model_config & cfg = g.m->cfg;
    const int64_t B = (int64_t) cm.cm_len.size();

    seq_dims d;
    d.lq  = cm.lcm;
    d.len = cm.cm_len;

    // features: mean over the first min(4, decoder_layers) layer outputs
    ad::node * h = cm.cm0;
    const int  taps = std::min(4, cfg.decoder_layers);
    ad::node * acc  = nullptr;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        h = decoder_layer(g, l, h, cm, d);
        if (l < taps) acc = acc ? ad::add(g.t, acc, h) : h;
    }
    ad::node * f = ad::scale(g.t, acc, 1.0 / (double) taps);

    // projector: dense + gelu + dropout + dense, then layernorm
    ad::node * z = g.dropout(ad::gelu(g.t, linear(g, f, "cls.proj.w1", "cls.proj.b1")));
    z = linear(g, z, "cls.proj.w2", "cls.proj.b2");
    z = lnorm(g, z, "cls.proj_ln_g", "cls.proj_ln_b");

    // learnable CLS query cross-attends the projected features
    std::vector<int64_t> qidx((size_t) B, 0);
    ad::node * q = ad::gather_rows(g.t, g.P("cls.query"), qidx);
    q = linear(g, q, "cls.attn.wq", "cls.attn.bq");
    ad::node * k = linear(g, z, "cls.attn.wk", "cls.attn.bk");
    ad::node * v = linear(g, z, "cls.attn.wv", "cls.attn.bv");
    ad::attn_spec agg;
    agg.batch  = B;
    agg.lq     = 1;
    agg.lk     = cm.lcm;
    agg.heads  = cfg.attn_heads;
    agg.causal = false;
    agg.q_len.assign((size_t) B, 1);
    agg.kv_len = cm.cm_len;
    ad::node * a = ad::attention(g.t, q, k, v, agg);
    a = linear(g, a, "cls.attn.wo", "cls.attn.bo");
    a = lnorm(g, a, "cls.out_ln_g", "cls.out_ln_b");

    // mlp hidden -> hidden -> hidden/2 -> 1
    ad::node * z1 = g.dropout(ad::gelu(g.t, linear(g, a, "cls.mlp.w1", "cls.mlp.b1")));
    ad::node * z2 = g.dropout(ad::gelu(g.t, linear(g, z1, "cls.mlp.w2", "cls.mlp.b2")));
    return ad::sigmoid(g.t, linear(g, z2, "cls.mlp.w3", "cls.mlp.b3"));
}

// ---- decoder: teacher forcing and sampling --------------------------------

static ad::node * decode_hidden(mgraph & g, cm_pack & cm, const std::vector<int> & in_ids,
                                const seq_dims & d) {
    std::vector<int> pos_ids(in_ids.size(), -1);
    const int64_t    B = (int64_t) d.len.size();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < d.len[(size_t) b]; ++i)
            pos_ids[(size_t) (b * d.lq + i)] = (int) i;
    ad::node * x = ad::add(g.t, ad::embed(g.t, g.P("tok_emb"), in_ids),
                           ad::embed(g.t, g.P("pos_emb"), pos_ids));
    for (int l = 0; l < g.m->cfg.decoder_layers; ++l) x = decoder_layer(g, l, x, cm, d);
    return lnorm(g, x, "dec.lnf_g", "dec.lnf_b");
}

ad::node * ntp_rows(mgraph & g, cm_pack & cm, const std::vector<std::vector<int>> & targets) {
    const int64_t B = (int64_t) cm.cm_len.size();
    if (targets.size() != (size_t) B) fail(errc::invalid_argument, "ntp_rows: batch mismatch");
    int64_t lt = 0;
    for (const auto & tg : targets) {
        if (tg.empty() || tg.back() != vocab::tok_eos)
            fail(errc::invalid_argument, "ntp_rows: target must be non-empty and eos-terminated");
        for (int id : tg)
            if (id < 0 || id >= vocab::size())
                fail(errc::invalid_argument, "ntp_rows: token id out of range");
        lt = std::max<int64_t>(lt, (int64_t) tg.size());
    }

    seq_dims d;
    d.lq = lt;
    d.len.resize((size_t) B);
    std::vector<int> in_ids((size_t) (B * lt), -1);
    std::vector<int> tgt((size_t) (B * lt), -1);
    std::vector<std::pair<int64_t, int64_t>> segs((size_t) B);
    for (int64_t b = 0; b < B; ++b) {
        const auto & tg = targets[(size_t) b];
        int64_t      n  = (int64_t) tg.size();
        d.len[(size_t) b] = n;
        for (int64_t i = 0; i < n; ++i) {
            in_ids[(size_t) (b * lt + i)] = i == 0 ? vocab::tok_bos : tg[(size_t) (i - 1)];
            tgt[(size_t) (b * lt + i)]    = tg[(size_t) i];
        }
        segs[(size_t) b] = { b * lt, b * lt + n };
    }

    ad::node * h      = decode_hidden(g, cm, in_ids, d);
    ad::node * logits = linear(g, h, "lm_head.w", "lm_head.b");
    return ad::segment_mean(g.t, ad::ce_rows(g.t, logits, tgt), segs);
}

decode_result decode_sample(mgraph & g, cm_pack & cm, double temperature,
                            const std::vector<rng *> & rngs) {
    const model_config & cfg = g.m->cfg;
    const int64_t B = (int64_t) cm.cm_len.size();
    if (temperature < 0.0) fail(errc::invalid_argument, "decode: negative temperature");
    if (rngs.size() != (size_t) B) fail(errc::invalid_argument, "decode: one rng per sample");
    const int V = vocab::size();

    decode_result r;
    r.tokens.resize((size_t) B);
    r.dists.resize((size_t) B);
    std::vector<char> done((size_t) B, 0);

    for (int step = 0; step < cfg.max_reasoning_len; ++step) {
        const int64_t L = step + 1;
        seq_dims d;
        d.lq = L;
        d.len.assign((size_t) B, L);
        std::vector<int> in_ids((size_t) (B * L));
        for (int64_t b = 0; b < B; ++b) {
            const auto & toks = r.tokens[(size_t) b];
            for (int64_t i = 0; i < L; ++i)
                in_ids[(size_t) (b * L + i)] =
                    i == 0 ? vocab::tok_bos
                           : (size_t) (i - 1) < toks.size() ? toks[(size_t) (i - 1)]
                                                            : vocab::tok_pad;
        }
        ad::node * h = decode_hidden(g, cm, in_ids, d);
        std::vector<int64_t> last((size_t) B);
        for (int64_t b = 0; b < B; ++b) last[(size_t) b] = b * L + (L - 1);
        ad::node * logits = linear(g, ad::gather_rows(g.t, h, last), "lm_head.w", "lm_head.b");

        bool all_done = true;
        for (int64_t b = 0; b < B; ++b) {
            if (done[(size_t) b]) continue;
            std::vector<double> dist((size_t) V);
            int tok;
            if (temperature == 0.0) {  // greedy: one-hot at the first argmax
                int64_t best = 0;
                for (int64_t j = 1; j < V; ++j)
                    if (logits->val.at(b, j) > logits->val.at(b, best)) best = j;
                dist[(size_t) best] = 1.0;
                tok = (int) best;
            } else {
                for (int64_t j = 0; j < V; ++j) dist[(size_t) j] = logits->val.at(b, j) / temperature;
                t_softmax_row(dist.data(), V);
                double u = rngs[(size_t) b]->uniform();
                double acc = 0.0;
                int64_t pick = V - 1;
                for (int64_t j = 0; j < V; ++j) {
                    acc += dist[(size_t) j];
                    if (u < acc) {
                        pick = j;
                        break;
                    }
                }
                tok = (int) pick;
            }
            r.tokens[(size_t) b].push_back(tok);
            r.dists[(size_t) b].push_back(std::move(dist));
            if (tok == vocab::tok_eos) done[(size_t) b] = 1;
            else all_done = false;
        }
        if (all_done) break;
    }
    return r;
}

// ---- round prediction ------------------------------------------------------

std::vector<round_output> predict_round_batch(model & m,
                                              const std::vector<const tensor *> & frames,
                                              const std::vector<cond_context> & ctxs,
                                              double temperature,
                                              const std::vector<rng *> & rngs) {
    const int64_t B = (int64_t) frames.size();
    if (ctxs.size() != (size_t) B || rngs.size() != (size_t) B)
        fail(errc::invalid_argument, "predict_round_batch: batch mismatch");
    std::vector<std::vector<int>> ct((size_t) B);
    for (int64_t b = 0; b < B; ++b) {
        const cond_context & c = ctxs[(size_t) b];
        if ((int) c.prev_reasoning.size() > m.cfg.max_reasoning_len)
            fail(errc::invalid_argument, "predict_round_batch: context reasoning too long");
        ct[(size_t) b] = context_tokens(c);
    }

    mgraph  g(m);
    cm_pack cm  = build_context_memory(g, frames, ct);
    ad::node * p = classify_probs(g, cm);
    decode_result dec = decode_sample(g, cm, temperature, rngs);

    std::vector<round_output> out((size_t) B);
    for (int64_t b = 0; b < B; ++b) {
        round_output & ro = out[(size_t) b];
        ro.det_prob    = p->val.at(b, 0);
        ro.det_failure = ro.det_prob >= 0.5;
        ro.reasoning   = std::move(dec.tokens[(size_t) b]);
        ro.step_dists  = std::move(dec.dists[(size_t) b]);
        ro.h_det       = entropy_bernoulli(ro.det_prob);
        double hsum = 0.0;
        int64_t hn  = 0;
        for (size_t s = 0; s < ro.reasoning.size(); ++s) {
            if (ro.reasoning[s] == vocab::tok_pad) continue;  // pad excluded, eos included
            hsum += entropy_categorical(ro.step_dists[s]);
            hn += 1;
        }
        ro.h_reason = hn > 0 ? hsum / (double) hn : 0.0;
    }
    return out;
}

round_output predict_round(model & m, const tensor & frames, const cond_context & ctx,
                           double temperature, rng & g) {
    std::vector<rng *> rr = { &g };
    return predict_round_batch(m, { &frames }, { ctx }, temperature, rr)[0];
}

std::vector<std::vector<double>> next_token_dists(model & m, const tensor & frames,
                                                  const cond_context & ctx,
                                                  const std::vector<int> & prefix) {
    if ((int) prefix.size() >= m.cfg.max_positions)
        fail(errc::invalid_argument, "next_token_dists: prefix too long");
    mgraph  g(m);
    cm_pack cm = build_context_memory(g, { &frames }, { context_tokens(ctx) });
    const int64_t L = (int64_t) prefix.size() + 1;
    seq_dims d;
    d.lq = L;
    d.len.assign(1, L);
    std::vector<int> in_ids((size_t) L);
    in_ids[0] = vocab::tok_bos;
    for (size_t i = 0; i < prefix.size(); ++i) in_ids[i + 1] = prefix[i];
    ad::node * h      = decode_hidden(g, cm, in_ids, d);
    ad::node * logits = linear(g, h, "lm_head.w", "lm_head.b");
    std::vector<std::vector<double>> out((size_t) L);
    for (int64_t r = 0; r < L; ++r) {
        std::vector<double> row((size_t) vocab::size());
        for (int64_t c = 0; c < (int64_t) row.size(); ++c) row[(size_t) c] = logits->val.at(r, c);
        t_softmax_row(row.data(), (int64_t) row.size());
        out[(size_t) r] = std::move(row);
    }
    return out;
}

double classify_one(model & m, const tensor & frames, const cond_context & ctx) {
    mgraph  g(m);
    cm_pack cm = build_context_memory(g, { &frames }, { context_tokens(ctx) });
    return classify_probs(g, cm)->val.item();
}

decode_result decode_one(model & m, const tensor & frames, const cond_context & ctx,
                         double temperature, rng & g) {
    mgraph  mg(m);
    cm_pack cm = build_context_memory(mg, { &frames }, { context_tokens(ctx) });
    std::vector<rng *> rr = { &g };
    return decode_sample(mg, cm, temperature, rr);
}

double ntp_one(model & m, const tensor & frames, const cond_context & ctx,
               const std::vector<int> & target) {
    mgraph  g(m);
    cm_pack cm = build_context_memory(g, { &frames }, { context_tokens(ctx) });
    return ntp_rows(g, cm, { target })->val.item();
}

}  // namespace armor
