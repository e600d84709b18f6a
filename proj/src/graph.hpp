#pragma once

#include "tensor.hpp"

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace armor {

// named parameter set with matching gradient slots; std::map keeps iteration
// order deterministic everywhere (init, optimizer, checkpoints)
struct param_store {
    std::map<std::string, tensor> w;
    std::map<std::string, tensor> g;

    tensor & add(const std::string & name, int64_t r, int64_t c) {
        if (w.count(name)) fail(errc::invalid_argument, "param_store: duplicate name " + name);
        w[name] = tensor(r, c);
        g[name] = tensor(r, c);
        return w[name];
    }

    tensor & value(const std::string & name) {
        auto it = w.find(name);
        if (it == w.end()) fail(errc::invalid_argument, "param_store: unknown name " + name);
        return it->second;
    }

    const tensor & value(const std::string & name) const {
        auto it = w.find(name);
        if (it == w.end()) fail(errc::invalid_argument, "param_store: unknown name " + name);
        return it->second;
    }

    tensor & grad(const std::string & name) {
        auto it = g.find(name);
        if (it == g.end()) fail(errc::invalid_argument, "param_store: unknown grad " + name);
        return it->second;
    }

    bool has(const std::string & name) const { return w.count(name) != 0; }

    void zero_grad() {
        for (auto & kv : g) kv.second.fill(0.0);
    }

    int64_t numel() const {
        int64_t n = 0;
        for (auto & kv : w) n += kv.second.numel();
        return n;
    }
};

namespace ad {

struct node {
    tensor val;
    tensor grad;
    bool   has_grad      = false;
    bool   requires_grad = false;
    int    id            = -1;
    const char * op      = "";
    std::function<void()> back;
};

// reverse-mode tape; nodes are created in topological order, so walking the
// tape backwards visits every consumer before its producers
struct tape {
    std::deque<node> nodes;  // deque: stable addresses for closure capture

    node * make(tensor val, bool requires_grad, const char * op) {
        nodes.emplace_back();
        node & n        = nodes.back();
        n.val           = std::move(val);
        n.requires_grad = requires_grad;
        n.id            = (int) nodes.size() - 1;
        n.op            = op;
        return &n;
    }

    void backward(node * loss);

    size_t size() const { return nodes.size(); }
};

// ensure a node's gradient buffer exists (zeroed) and return it
inline tensor & grad_of(node * n) {
    if (!n->has_grad) {
        n->grad     = tensor(n->val.rows, n->val.cols);
        n->has_grad = true;
    }
    return n->grad;
}

// leaves
node * input(tape & t, tensor val, bool requires_grad = false);
node * param(tape & t, param_store & ps, const std::string & name);

// elementwise / linear algebra
node * matmul(tape & t, node * a, node * b);
node * add(tape & t, node * a, node * b);
node * add_rowvec(tape & t, node * x, node * b);  // b: 1xC broadcast over rows
node * scale(tape & t, node * x, double c);
node * mul(tape & t, node * a, node * b);         // elementwise (also dropout via mask input)
node * gelu(tape & t, node * x);                  // exact erf form
node * sigmoid(tape & t, node * x);
node * layernorm(tape & t, node * x, node * gain, node * bias, double eps = 1e-5);
node * softmax_rows(tape & t, node * x);

// structural
node * embed(tape & t, node * table, const std::vector<int> & ids);     // id -1 -> zero row
node * gather_rows(tape & t, node * x, const std::vector<int64_t> & rows);
node * concat_rows(tape & t, const std::vector<node *> & parts);

// batched multi-head attention over padded per-sample row blocks.
// q is (batch*lq) x h, k and v are (batch*lk) x h; sample b owns query rows
// [b*lq, b*lq+q_len[b]) and key rows [b*lk, b*lk+kv_len[b]). rows beyond the
// per-sample length are padding: ignored as keys, zeroed as outputs.
struct attn_spec {
    int64_t batch = 1;
    int64_t lq    = 0;
    int64_t lk    = 0;
    int     heads = 1;
    bool    causal = false;  // requires q_len[b] == kv_len[b] for all b
    std::vector<int64_t> q_len;
    std::vector<int64_t> kv_len;
};
node * attention(tape & t, node * q, node * k, node * v, const attn_spec & spec);

// losses (per-row outputs, N x 1)
node * ce_rows(tape & t, node * logits, const std::vector<int> & targets);  // target -1 -> row 0
node * bce_rows(tape & t, node * p, const std::vector<double> & y, double clamp_eps);

// per-segment mean of rows [a,b) of an N x 1 column; empty segment -> 0
node * segment_mean(tape & t, node * x, const std::vector<std::pair<int64_t, int64_t>> & segs);

// weighted row sum of an N x 1 column -> scalar
node *
rowsum_weighted(tape & t, node * x, const std::vector<double> & wts);

}  // namespace ad
}  // namespace armor
