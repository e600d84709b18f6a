#include "graph.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace armor::ad {

using emat   = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using map_t  = Eigen::Map<emat>;
using cmap_t = Eigen::Map<const emat>;

static cmap_t cmap(const tensor & t) { return cmap_t(t.data(), t.rows, t.cols); }
static map_t  mmap(tensor & t) { return map_t(t.data(), t.rows, t.cols); }

static constexpr double k_inv_sqrt2  = 0.70710678118654752440;
static constexpr double k_inv_sqrt2pi = 0.39894228040143267794;

void tape::backward(node * loss) {
    if (loss->val.numel() != 1) fail(errc::invalid_argument, "backward: loss must be a scalar");
    grad_of(loss).v[0] += 1.0;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        node & n = *it;
        if (n.has_grad && n.back) n.back();
    }
}

node * input(tape & t, tensor val, bool requires_grad) {
    return t.make(std::move(val), requires_grad, "input");
}

node * param(tape & t, param_store & ps, const std::string & name) {
    node * n  = t.make(ps.value(name), true, "param");
    tensor * gs = &ps.grad(name);
    n->back    = [n, gs]() { t_axpy(1.0, n->grad, *gs); };
    return n;
}

node * matmul(tape & t, node * a, node * b) {
    tensor out;
    t_matmul(a->val, b->val, out);
    node * n = t.make(std::move(out), a->requires_grad || b->requires_grad, "matmul");
    if (n->requires_grad) {
        n->back = [n, a, b]() {
            if (a->requires_grad) t_matmul_nt_acc(n->grad, b->val, grad_of(a));
            if (b->requires_grad) t_matmul_tn_acc(a->val, n->grad, grad_of(b));
        };
    }
    return n;
}

node * add(tape & t, node * a, node * b) {
    tensor out;
    t_add(a->val, b->val, out);
    node * n = t.make(std::move(out), a->requires_grad || b->requires_grad, "add");
    if (n->requires_grad) {
        n->back = [n, a, b]() {
            if (a->requires_grad) t_axpy(1.0, n->grad, grad_of(a));
            if (b->requires_grad) t_axpy(1.0, n->grad, grad_of(b));
        };
    }
    return n;
}

node * add_rowvec(tape & t, node * x, node * b) {
    if (b->val.rows != 1 || b->val.cols != x->val.cols)
        fail(errc::invalid_argument, "add_rowvec: bias must be 1 x cols(x)");
    tensor out = x->val;
    for (int64_t r = 0; r < out.rows; ++r)
        for (int64_t c = 0; c < out.cols; ++c) out.at(r, c) += b->val.at(0, c);
    node * n = t.make(std::move(out), x->requires_grad || b->requires_grad, "add_rowvec");
    if (n->requires_grad) {
        n->back = [n, x, b]() {
            if (x->requires_grad) t_axpy(1.0, n->grad, grad_of(x));
            if (b->requires_grad) {
                tensor & gb = grad_of(b);
                for (int64_t r = 0; r < n->grad.rows; ++r)
                    for (int64_t c = 0; c < n->grad.cols; ++c) gb.at(0, c) += n->grad.at(r, c);
            }
        };
    }
    return n;
}

node * scale(tape & t, node * x, double c) {
    tensor out = x->val;
    for (double & v : out.v) v *= c;
    node * n = t.make(std::move(out), x->requires_grad, "scale");
    if (n->requires_grad) {
        n->back = [n, x, c]() { t_axpy(c, n->grad, grad_of(x)); };
    }
    return n;
}

node * mul(tape & t, node * a, node * b) {
    if (!a->val.same_shape(b->val)) fail(errc::invalid_argument, "mul: shape mismatch");
    tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out.v[(size_t) i] *= b->val.v[(size_t) i];
    node * n = t.make(std::move(out), a->requires_grad || b->requires_grad, "mul");
    if (n->requires_grad) {
        n->back = [n, a, b]() {
            if (a->requires_grad) {
                tensor & ga = grad_of(a);
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    ga.v[(size_t) i] += n->grad.v[(size_t) i] * b->val.v[(size_t) i];
            }
            if (b->requires_grad) {
                tensor & gb = grad_of(b);
                for (int64_t i = 0; i < n->grad.numel(); ++i)
                    gb.v[(size_t) i] += n->grad.v[(size_t) i] * a->val.v[(size_t) i];
            }
        };
    }
    return n;
}

node * gelu(tape & t, node * x) {
    tensor out = x->val;
    for (double & v : out.v) v = 0.5 * v * (1.0 + std::erf(v * k_inv_sqrt2));
    node * n = t.make(std::move(out), x->requires_grad, "gelu");
    if (n->requires_grad) {
        n->back = [n, x]() {
            tensor & gx = grad_of(x);
            for (int64_t i = 0; i < n->grad.numel(); ++i) {
                double v   = x->val.v[(size_t) i];
                double cdf = 0.5 * (1.0 + std::erf(v * k_inv_sqrt2));
                double pdf = k_inv_sqrt2pi * std::exp(-0.5 * v * v);
                gx.v[(size_t) i] += n->grad.v[(size_t) i] * (cdf + v * pdf);
            }
        };
    }
    return n;
}

node * sigmoid(tape & t, node * x) {
    tensor out = x->val;
    for (double & v : out.v) v = 1.0 / (1.0 + std::exp(-v));
    node * n = t.make(std::move(out), x->requires_grad, "sigmoid");
    if (n->requires_grad) {
        n->back = [n, x]() {
            tensor & gx = grad_of(x);
            for (int64_t i = 0; i < n->grad.numel(); ++i) {
                double y = n->val.v[(size_t) i];
                gx.v[(size_t) i] += n->grad.v[(size_t) i] * y * (1.0 - y);
            }
        };
    }
    return n;
}

node * layernorm(tape & t, node * x, node * gain, node * bias, double eps) {
    const int64_t R = x->val.rows, C = x->val.cols;
    if (gain->val.rows != 1 || gain->val.cols != C || bias->val.rows != 1 || bias->val.cols != C)
        fail(errc::invalid_argument, "layernorm: gain/bias must be 1 x cols(x)");
    auto xhat    = std::make_shared<tensor>(R, C);
    auto inv_sig = std::make_shared<std::vector<double>>((size_t) R);
    tensor out(R, C);
    for (int64_t r = 0; r < R; ++r) {
        double mu = 0.0;
        for (int64_t c = 0; c < C; ++c) mu += x->val.at(r, c);
        mu /= (double) C;
        double var = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            double d = x->val.at(r, c) - mu;
            var += d * d;
        }
        var /= (double) C;
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_sig)[(size_t) r] = is;
        for (int64_t c = 0; c < C; ++c) {
            double xh = (x->val.at(r, c) - mu) * is;
            xhat->at(r, c) = xh;
            out.at(r, c)   = xh * gain->val.at(0, c) + bias->val.at(0, c);
        }
    }
    node * n = t.make(std::move(out),
                      x->requires_grad || gain->requires_grad || bias->requires_grad, "layernorm");
    if (n->requires_grad) {
        n->back = [n, x, gain, bias, xhat, inv_sig]() {
            const int64_t R = n->val.rows, C = n->val.cols;
            for (int64_t r = 0; r < R; ++r) {
                if (gain->requires_grad) {
                    tensor & gg = grad_of(gain);
                    for (int64_t c = 0; c < C; ++c)
                        gg.at(0, c) += n->grad.at(r, c) * xhat->at(r, c);
                }
                if (bias->requires_grad) {
                    tensor & gb = grad_of(bias);
                    for (int64_t c = 0; c < C; ++c) gb.at(0, c) += n->grad.at(r, c);
                }
                if (x->requires_grad) {
                    tensor & gx = grad_of(x);
                    double  m1 = 0.0, m2 = 0.0;
                    for (int64_t c = 0; c < C; ++c) {
                        double dxh = n->grad.at(r, c) * gain->val.at(0, c);
                        m1 += dxh;
                        m2 += dxh * xhat->at(r, c);
                    }
                    m1 /= (double) C;
                    m2 /= (double) C;
                    double is = (*inv_sig)[(size_t) r];
                    for (int64_t c = 0; c < C; ++c) {
                        double dxh = n->grad.at(r, c) * gain->val.at(0, c);
                        gx.at(r, c) += is * (dxh - m1 - xhat->at(r, c) * m2);
                    }
                }
            }
        };
    }
    return n;
}

node * softmax_rows(tape & t, node * x) {
    tensor out = x->val;
    for (int64_t r = 0; r < out.rows; ++r) t_softmax_row(&out.at(r, 0), out.cols);
    node * n = t.make(std::move(out), x->requires_grad, "softmax_rows");
    if (n->requires_grad) {
        n->back = [n, x]() {
            tensor & gx = grad_of(x);
            for (int64_t r = 0; r < n->val.rows; ++r) {
                double dot = 0.0;
                for (int64_t c = 0; c < n->val.cols; ++c)
                    dot += n->grad.at(r, c) * n->val.at(r, c);
                for (int64_t c = 0; c < n->val.cols; ++c)
                    gx.at(r, c) += n->val.at(r, c) * (n->grad.at(r, c) - dot);
            }
        };
    }
    return n;
}

node * embed(tape & t, node * table, const std::vector<int> & ids) {
    const int64_t C = table->val.cols;
    tensor out((int64_t) ids.size(), C);
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0) continue;  // padding row stays zero
        if (id >= table->val.rows) fail(errc::invalid_argument, "embed: id out of range");
        for (int64_t c = 0; c < C; ++c) out.at((int64_t) i, c) = table->val.at(id, c);
    }
    node * n = t.make(std::move(out), table->requires_grad, "embed");
    if (n->requires_grad) {
        auto ids_c = std::make_shared<std::vector<int>>(ids);
        n->back    = [n, table, ids_c]() {
            tensor & gt = grad_of(table);
            for (size_t i = 0; i < ids_c->size(); ++i) {
                int id = (*ids_c)[i];
                if (id < 0) continue;
                for (int64_t c = 0; c < n->grad.cols; ++c)
                    gt.at(id, c) += n->grad.at((int64_t) i, c);
            }
        };
    }
    return n;
}

node * gather_rows(tape & t, node * x, const std::vector<int64_t> & rows) {
    tensor out((int64_t) rows.size(), x->val.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
        int64_t r = rows[i];
        if (r < 0 || r >= x->val.rows) fail(errc::invalid_argument, "gather_rows: row out of range");
        for (int64_t c = 0; c < x->val.cols; ++c) out.at((int64_t) i, c) = x->val.at(r, c);
    }
    node * n = t.make(std::move(out), x->requires_grad, "gather_rows");
    if (n->requires_grad) {
        auto rows_c = std::make_shared<std::vector<int64_t>>(rows);
        n->back     = [n, x, rows_c]() {
            tensor & gx = grad_of(x);
            for (size_t i = 0; i < rows_c->size(); ++i)
                for (int64_t c = 0; c < n->grad.cols; ++c)
                    gx.at((*rows_c)[i], c) += n->grad.at((int64_t) i, c);
        };
    }
    return n;
}

node * concat_rows(tape & t, const std::vector<node *> & parts) {
    if (parts.empty()) fail(errc::invalid_argument, "concat_rows: no parts");
    int64_t C = parts[0]->val.cols, R = 0;
    bool    req = false;
    for (node * p : parts) {
        if (p->val.cols != C) fail(errc::invalid_argument, "concat_rows: col mismatch");
        R += p->val.rows;
        req = req || p->requires_grad;
    }
    tensor  out(R, C);
    int64_t r0 = 0;
    for (node * p : parts) {
        std::copy(p->val.v.begin(), p->val.v.end(), out.v.begin() + (size_t) (r0 * C));
        r0 += p->val.rows;
    }
    node * n = t.make(std::move(out), req, "concat_rows");
    if (req) {
        auto parts_c = std::make_shared<std::vector<node *>>(parts);
        n->back      = [n, parts_c]() {
            int64_t r0 = 0;
            for (node * p : *parts_c) {
                if (p->requires_grad) {
                    tensor & gp = grad_of(p);
                    for (int64_t r = 0; r < p->val.rows; ++r)
                        for (int64_t c = 0; c < p->val.cols; ++c)
                            gp.at(r, c) += n->grad.at(r0 + r, c);
                }
                r0 += p->val.rows;
            }
        };
    }
    return n;
}

node * attention(tape & t, node * q, node * k, node * v, const attn_spec & spec) {
    const int64_t B = spec.batch, LQ = spec.lq, LK = spec.lk;
    const int     NH = spec.heads;
    const int64_t H  = q->val.cols;
    if (H % NH != 0) fail(errc::invalid_argument, "attention: cols not divisible by heads");
    if (k->val.cols != H || v->val.cols != H) fail(errc::invalid_argument, "attention: col mismatch");
    if (q->val.rows != B * LQ || k->val.rows != B * LK || v->val.rows != B * LK)
        fail(errc::invalid_argument, "attention: row layout mismatch");
    if ((int64_t) spec.q_len.size() != B || (int64_t) spec.kv_len.size() != B)
        fail(errc::invalid_argument, "attention: length vectors must have batch entries");
    const int64_t DH = H / NH;
    const double  sc = 1.0 / std::sqrt((double) DH);

    auto probs = std::make_shared<tensor>(B * NH * LQ, LK);  // softmax rows, zero where masked
    tensor out(B * LQ, H);

    for (int64_t b = 0; b < B; ++b) {
        int64_t ql = spec.q_len[b], kl = spec.kv_len[b];
        if (ql < 0 || ql > LQ || kl < 0 || kl > LK)
            fail(errc::invalid_argument, "attention: per-sample length out of range");
        if (spec.causal && ql != kl)
            fail(errc::invalid_argument, "attention: causal requires square per-sample blocks");
        if (ql == 0 || kl == 0) continue;
        for (int nh = 0; nh < NH; ++nh) {
            auto qb = cmap(q->val).block(b * LQ, nh * DH, ql, DH);
            auto kb = cmap(k->val).block(b * LK, nh * DH, kl, DH);
            auto vb = cmap(v->val).block(b * LK, nh * DH, kl, DH);
            emat s  = qb * kb.transpose() * sc;  // ql x kl
            for (int64_t i = 0; i < ql; ++i) {
                int64_t lim = spec.causal ? i + 1 : kl;
                double * prow = &probs->at((b * NH + nh) * LQ + i, 0);
                double   mx = s(i, 0);
                for (int64_t j = 1; j < lim; ++j) mx = std::max(mx, s(i, j));
                double z = 0.0;
                for (int64_t j = 0; j < lim; ++j) {
                    prow[j] = std::exp(s(i, j) - mx);
                    z += prow[j];
                }
                double inv = 1.0 / z;
                for (int64_t j = 0; j < lim; ++j) prow[j] *= inv;
            }
            auto pb = cmap_t(&probs->at((b * NH + nh) * LQ, 0), ql, LK).leftCols(kl);
            mmap(out).block(b * LQ, nh * DH, ql, DH).noalias() = pb * vb;
        }
    }

    node * n = t.make(std::move(out),
                      q->requires_grad || k->requires_grad || v->requires_grad, "attention");
    if (n->requires_grad) {
        auto spec_c = std::make_shared<attn_spec>(spec);
        n->back     = [n, q, k, v, spec_c, probs, sc, NH, DH]() {
            const attn_spec & sp = *spec_c;
            for (int64_t b = 0; b < sp.batch; ++b) {
                int64_t ql = sp.q_len[b], kl = sp.kv_len[b];
                if (ql == 0 || kl == 0) continue;
                for (int nh = 0; nh < NH; ++nh) {
                    auto dout = cmap(n->grad).block(b * sp.lq, nh * DH, ql, DH);
                    auto pb   = cmap_t(&probs->at((b * NH + nh) * sp.lq, 0), ql, sp.lk).leftCols(kl);
                    auto qb   = cmap(q->val).block(b * sp.lq, nh * DH, ql, DH);
                    auto kb   = cmap(k->val).block(b * sp.lk, nh * DH, kl, DH);
                    auto vb   = cmap(v->val).block(b * sp.lk, nh * DH, kl, DH);
                    if (v->requires_grad) {
                        mmap(grad_of(v)).block(b * sp.lk, nh * DH, kl, DH).noalias() +=
                            pb.transpose() * dout;
                    }
                    if (q->requires_grad || k->requires_grad) {
                        emat dp = dout * vb.transpose();                    // ql x kl
                        emat ds(ql, kl);
                        for (int64_t i = 0; i < ql; ++i) {
                            double dot = 0.0;
                            for (int64_t j = 0; j < kl; ++j) dot += dp(i, j) * pb(i, j);
                            for (int64_t j = 0; j < kl; ++j)
                                ds(i, j) = pb(i, j) * (dp(i, j) - dot);
                        }
                        if (q->requires_grad)
                            mmap(grad_of(q)).block(b * sp.lq, nh * DH, ql, DH).noalias() +=
                                ds * kb * sc;
                        if (k->requires_grad)
                            mmap(grad_of(k)).block(b * sp.lk, nh * DH, kl, DH).noalias() +=
                                ds.transpose() * qb * sc;
                    }
                }
            }
        };
    }
    return n;
}

node * ce_rows(tape & t, node * logits, const std::vector<int> & targets) {
    const int64_t R = logits->val.rows, V = logits->val.cols;
    if ((int64_t) targets.size() != R) fail(errc::invalid_argument, "ce_rows: target count mismatch");
    auto probs = std::make_shared<tensor>(R, V);
    tensor out(R, 1);
    for (int64_t r = 0; r < R; ++r) {
        int y = targets[(size_t) r];
        if (y < 0) continue;
        if (y >= V) fail(errc::invalid_argument, "ce_rows: target out of range");
        double mx = logits->val.at(r, 0);
        for (int64_t c = 1; c < V; ++c) mx = std::max(mx, logits->val.at(r, c));
        double z = 0.0;
        for (int64_t c = 0; c < V; ++c) z += std::exp(logits->val.at(r, c) - mx);
        double lse = mx + std::log(z);
        out.at(r, 0) = lse - logits->val.at(r, y);
        for (int64_t c = 0; c < V; ++c)
            probs->at(r, c) = std::exp(logits->val.at(r, c) - lse);
    }
    node * n = t.make(std::move(out), logits->requires_grad, "ce_rows");
    if (n->requires_grad) {
        auto tg = std::make_shared<std::vector<int>>(targets);
        n->back = [n, logits, probs, tg]() {
            tensor & gl = grad_of(logits);
            for (int64_t r = 0; r < n->val.rows; ++r) {
                int y = (*tg)[(size_t) r];
                if (y < 0) continue;
                double g = n->grad.at(r, 0);
                for (int64_t c = 0; c < gl.cols; ++c)
                    gl.at(r, c) += g * (probs->at(r, c) - (c == y ? 1.0 : 0.0));
            }
        };
    }
    return n;
}

node * bce_rows(tape & t, node * p, const std::vector<double> & y, double clamp_eps) {
    const int64_t R = p->val.rows;
    if (p->val.cols != 1) fail(errc::invalid_argument, "bce_rows: expected N x 1 probabilities");
    if ((int64_t) y.size() != R) fail(errc::invalid_argument, "bce_rows: label count mismatch");
    tensor out(R, 1);
    auto clamped = std::make_shared<std::vector<uint8_t>>((size_t) R, 0);
    for (int64_t r = 0; r < R; ++r) {
        double pr = p->val.at(r, 0);
        double pc = pr;
        if (pc < clamp_eps) { pc = clamp_eps; (*clamped)[(size_t) r] = 1; }
        if (pc > 1.0 - clamp_eps) { pc = 1.0 - clamp_eps; (*clamped)[(size_t) r] = 1; }
        double yy = y[(size_t) r];
        out.at(r, 0) = -(yy * std::log(pc) + (1.0 - yy) * std::log(1.0 - pc));
    }
    node * n = t.make(std::move(out), p->requires_grad, "bce_rows");
    if (n->requires_grad) {
        auto y_c = std::make_shared<std::vector<double>>(y);
        n->back  = [n, p, y_c, clamped]() {
            tensor & gp = grad_of(p);
            for (int64_t r = 0; r < n->val.rows; ++r) {
                if ((*clamped)[(size_t) r]) continue;  // flat outside the clamp window
                double pr = p->val.at(r, 0);
                double yy = (*y_c)[(size_t) r];
                gp.at(r, 0) += n->grad.at(r, 0) * (pr - yy) / (pr * (1.0 - pr));
            }
        };
    }
    return n;
}

node * segment_mean(tape & t, node * x, const std::vector<std::pair<int64_t, int64_t>> & segs) {
    if (x->val.cols != 1) fail(errc::invalid_argument, "segment_mean: expected N x 1 column");
    tensor out((int64_t) segs.size(), 1);
    for (size_t s = 0; s < segs.size(); ++s) {
        auto [a, b] = segs[s];
        if (a < 0 || b < a || b > x->val.rows) fail(errc::invalid_argument, "segment_mean: bad segment");
        if (b == a) continue;
        double sum = 0.0;
        for (int64_t r = a; r < b; ++r) sum += x->val.at(r, 0);
        out.at((int64_t) s, 0) = sum / (double) (b - a);
    }
    node * n = t.make(std::move(out), x->requires_grad, "segment_mean");
    if (n->requires_grad) {
        auto segs_c = std::make_shared<std::vector<std::pair<int64_t, int64_t>>>(segs);
        n->back     = [n, x, segs_c]() {
            tensor & gx = grad_of(x);
            for (size_t s = 0; s < segs_c->size(); ++s) {
                auto [a, b] = (*segs_c)[s];
                if (b == a) continue;
                double g = n->grad.at((int64_t) s, 0) / (double) (b - a);
                for (int64_t r = a; r < b; ++r) gx.at(r, 0) += g;
            }
        };
    }
    return n;
}

node * rowsum_weighted(tape & t, node * x, const std::vector<double> & wts) {
    if (x->val.cols != 1) fail(errc::invalid_argument, "rowsum_weighted: expected N x 1 column");
    if ((int64_t) wts.size() != x->val.rows)
        fail(errc::invalid_argument, "rowsum_weighted: weight count mismatch");
    double s = 0.0;
    for (int64_t r = 0; r < x->val.rows; ++r) s += wts[(size_t) r] * x->val.at(r, 0);
    node * n = t.make(tensor::scalar(s), x->requires_grad, "rowsum_weighted");
    if (n->requires_grad) {
        auto w_c = std::make_shared<std::vector<double>>(wts);
        n->back  = [n, x, w_c]() {
            tensor & gx = grad_of(x);
            double   g  = n->grad.v[0];
            for (int64_t r = 0; r < gx.rows; ++r) gx.at(r, 0) += g * (*w_c)[(size_t) r];
        };
    }
    return n;
}

}  // namespace armor::ad
