// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// MoE-ViT workload description and slow 64-bit reference implementations of
// everything the kernel emulation reproduces.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ubimoe/common.hpp"

namespace ubimoe {

struct ModelConfig {
    std::size_t layers = 1;
    std::size_t patches = 1;       // token count
    std::size_t feat_dim = 1;
    std::size_t hidden_dim = 1;    // MLP / expert inner dimension
    std::size_t heads = 1;
    std::size_t experts = 1;
    std::size_t top_k = 1;
    unsigned bitwidth = 16;
    bool moe_alternate = true;     // odd encoders (0-based) carry a MoE block
    Cycles non_encoder_cycles = 0;

    std::size_t head_dim() const { return heads == 0 ? 0 : feat_dim / heads; }

    bool is_moe_layer(std::size_t layer) const { return moe_alternate && layer % 2 == 1; }

    std::size_t moe_layer_count() const { return moe_alternate ? layers / 2 : 0; }
    std::size_t dense_layer_count() const { return layers - moe_layer_count(); }

    void validate() const {
        if (layers < 1) throw DomainError("layers must be >= 1");
        if (patches < 1) throw DomainError("patches must be >= 1");
        if (feat_dim < 1 || hidden_dim < 1) throw DomainError("feat_dim and hidden_dim must be >= 1");
        if (heads < 1 || feat_dim % heads != 0)
            throw DomainError("feat_dim must be divisible by heads");
        if (experts < 1 || top_k < 1 || top_k > experts)
            throw DomainError("top_k must lie in [1, experts]");
        if (bitwidth < 4 || bitwidth > 32) throw DomainError("bitwidth must lie in [4, 32]");
    }
};

struct RouteEntry {
    std::size_t expert = 0;
    double weight = 0.0;
};

// Token -> expert assignment for one MoE block. tokens[t] lists the experts
// token t is dispatched to, in gate order.
struct RoutingTable {
    std::size_t experts = 0;
    std::vector<std::vector<RouteEntry>> tokens;

    std::size_t token_count() const { return tokens.size(); }

    // Token ids routed to expert `e`, ascending.
    std::vector<std::size_t> tokens_for(std::size_t e) const {
        std::vector<std::size_t> out;
        for (std::size_t t = 0; t < tokens.size(); ++t)
            for (const auto& r : tokens[t])
                if (r.expert == e) out.push_back(t);
        return out;
    }

    std::vector<std::size_t> load_per_expert() const {
        std::vector<std::size_t> load(experts, 0);
        for (const auto& tok : tokens)
            for (const auto& r : tok)
                if (r.expert < experts) ++load[r.expert];
        return load;
    }

    void validate() const {
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const auto& tok = tokens[t];
            if (tok.empty()) throw DomainError("token " + std::to_string(t) + " has no experts");
            double sum = 0.0;
            for (std::size_t i = 0; i < tok.size(); ++i) {
                if (tok[i].expert >= experts)
                    throw DomainError("token " + std::to_string(t) + ": expert id out of range");
                if (!(tok[i].weight > 0.0))
                    throw DomainError("token " + std::to_string(t) + ": gate weight must be positive");
                for (std::size_t j = 0; j < i; ++j)
                    if (tok[j].expert == tok[i].expert)
                        throw DomainError("token " + std::to_string(t) + ": duplicate expert id");
                sum += tok[i].weight;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw DomainError("token " + std::to_string(t) + ": gate weights must sum to 1");
        }
    }

    // Every token sends to k distinct experts drawn uniformly; weights 1/k.
    static RoutingTable uniform_random(std::size_t tokens, std::size_t experts, std::size_t k,
                                       std::uint64_t seed) {
        if (k < 1 || k > experts) throw DomainError("top_k must lie in [1, experts]");
        std::mt19937_64 rng(seed);
        RoutingTable rt;
        rt.experts = experts;
        rt.tokens.resize(tokens);
        std::vector<std::size_t> ids(experts);
        for (auto& tok : rt.tokens) {
            std::iota(ids.begin(), ids.end(), std::size_t{0});
            for (std::size_t i = 0; i < k; ++i) {
                std::swap(ids[i], ids[i + uniform_index(rng, experts - i)]);
                tok.push_back({ids[i], 1.0 / static_cast<double>(k)});
            }
        }
        return rt;
    }
};

// Multiply-accumulate tally used to instrument the reference paths.
struct MacCounter {
    std::uint64_t macs = 0;
};

inline std::vector<double> safe_softmax_3pass(std::span<const double> x) {
    if (x.empty()) throw DomainError("softmax of an empty vector");
    double m = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw DomainError("softmax input must be finite");
        m = std::max(m, v);
    }
    std::vector<double> out(x.size());
    double l = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        l += out[i];
    }
    for (double& v : out) v /= l;
    return out;
}

// Multi-head attention: per head softmax(Q K^T / sqrt(head_dim)) V, heads
// concatenated along the feature axis.
inline TokenMatrix reference_attention(const TokenMatrix& q, const TokenMatrix& k,
                                       const TokenMatrix& v, std::size_t heads,
                                       MacCounter* counter = nullptr) {
    if (!q.same_shape(k) || !q.same_shape(v))
        throw DomainError("attention: Q, K, V must share one shape");
    if (heads == 0 || q.cols() % heads != 0)
        throw DomainError("attention: feature dim must be divisible by heads");
    const std::size_t n = q.rows();
    const std::size_t dh = q.cols() / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    TokenMatrix out(n, q.cols());
    std::vector<double> scores(n);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d) s += q(i, off + d) * k(j, off + d);
                scores[j] = s * scale;
            }
            const auto p = safe_softmax_3pass(scores);
            for (std::size_t d = 0; d < dh; ++d) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += p[j] * v(j, off + d);
                out(i, off + d) = acc;
            }
        }
    }
    if (counter) counter->macs += 2 * static_cast<std::uint64_t>(n) * n * q.cols();
    return out;
}

// Gate: logits = token . gate_matrix, keep the top_k logits (lower expert id
// wins ties) and softmax over the kept logits only.
inline RoutingTable gate_topk(const TokenMatrix& tokens, const TokenMatrix& gate_matrix,
                              std::size_t top_k, MacCounter* counter = nullptr) {
    if (gate_matrix.rows() != tokens.cols())
        throw DomainError("gate: gate matrix rows must equal token feature dim");
    const std::size_t experts = gate_matrix.cols();
    if (top_k < 1 || top_k > experts) throw DomainError("gate: top_k must lie in [1, experts]");
    RoutingTable rt;
    rt.experts = experts;
    rt.tokens.resize(tokens.rows());
    std::vector<double> logits(experts);
    std::vector<std::size_t> order(experts);
    for (std::size_t t = 0; t < tokens.rows(); ++t) {
        for (std::size_t e = 0; e < experts; ++e) {
            double s = 0.0;
            for (std::size_t f = 0; f < tokens.cols(); ++f) s += tokens(t, f) * gate_matrix(f, e);
            logits[e] = s;
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
        std::vector<double> kept(top_k);
        for (std::size_t i = 0; i < top_k; ++i) kept[i] = logits[order[i]];
        const auto w = safe_softmax_3pass(kept);
        for (std::size_t i = 0; i < top_k; ++i) rt.tokens[t].push_back({order[i], w[i]});
    }
    if (counter) counter->macs += static_cast<std::uint64_t>(tokens.rows()) * tokens.cols() * experts;
    return rt;
}

// Dense product x . w.
inline TokenMatrix reference_linear(const TokenMatrix& x, const TokenMatrix& w,
                                    MacCounter* counter = nullptr) {
    if (w.rows() != x.cols()) throw DomainError("linear: weight rows must equal input cols");
    TokenMatrix out(x.rows(), w.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t o = 0; o < w.cols(); ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.cols(); ++i) s += x(t, i) * w(i, o);
            out(t, o) = s;
        }
    if (counter) counter->macs += static_cast<std::uint64_t>(x.rows()) * x.cols() * w.cols();
    return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

struct ExpertWeights {
    TokenMatrix w1;  // feat_dim x hidden
    TokenMatrix w2;  // hidden x feat_dim
};

// W1 -> GELU -> W2 on every row of `x`.
inline TokenMatrix reference_mlp(const TokenMatrix& x, const ExpertWeights& w,
                                 MacCounter* counter = nullptr) {
    if (w.w1.rows() != x.cols() || w.w2.rows() != w.w1.cols() || w.w2.cols() != x.cols())
        throw DomainError("mlp: weight shapes do not match the token feature dim");
    const std::size_t hid = w.w1.cols();
    TokenMatrix out(x.rows(), x.cols());
    std::vector<double> h(hid);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t j = 0; j < hid; ++j) {
            double s = 0.0;
            for (std::size_t f = 0; f < x.cols(); ++f) s += x(t, f) * w.w1(f, j);
            h[j] = gelu(s);
        }
        for (std::size_t f = 0; f < x.cols(); ++f) {
            double s = 0.0;
            for (std::size_t j = 0; j < hid; ++j) s += h[j] * w.w2(j, f);
            out(t, f) = s;
        }
    }
    if (counter) counter->macs += 2 * static_cast<std::uint64_t>(x.rows()) * x.cols() * hid;
    return out;
}

// Expert-by-expert evaluation: the outer loop walks experts, the inner loop
// walks the tokens routed to that expert.
inline TokenMatrix reference_moe(const TokenMatrix& tokens, const RoutingTable& routing,
                                 std::span<const ExpertWeights> experts,
                                 MacCounter* counter = nullptr) {
    if (routing.token_count() != tokens.rows())
        throw DomainError("moe: routing must cover every token");
    for (const auto& tok : routing.tokens)
        for (const auto& r : tok)
            if (r.expert >= experts.size()) throw DomainError("moe: expert id out of range");
    TokenMatrix out(tokens.rows(), tokens.cols());
    for (std::size_t e = 0; e < experts.size(); ++e) {
        for (std::size_t t = 0; t < tokens.rows(); ++t) {
            for (const auto& r : routing.tokens[t]) {
                if (r.expert != e) continue;
                TokenMatrix one(1, tokens.cols());
                std::copy(tokens.row(t).begin(), tokens.row(t).end(), one.row(0).begin());
                const auto y = reference_mlp(one, experts[e], counter);
                for (std::size_t f = 0; f < tokens.cols(); ++f) out(t, f) += r.weight * y(0, f);
            }
        }
    }
    return out;
}

// Operation count (2 ops per multiply-accumulate) for one inference.
struct OpCount {
    std::uint64_t qkv = 0;
    std::uint64_t scores = 0;
    std::uint64_t weighted_sum = 0;
    std::uint64_t projection = 0;
    std::uint64_t gate = 0;
    std::uint64_t experts = 0;
    std::uint64_t dense_ffn = 0;

    std::uint64_t total() const {
        return qkv + scores + weighted_sum + projection + gate + experts + dense_ffn;
    }
};

inline constexpr const char* kOpCountFormula =
    "ops = 2 * [ L*(3*N*F*F + N*N*F + N*N*F + N*F*F)"
    " + L_moe*(N*F*E + k*N*2*F*H) + L_dense*(N*2*F*H) ]";

inline OpCount count_ops(const ModelConfig& cfg) {
    cfg.validate();
    const std::uint64_t n = cfg.patches, f = cfg.feat_dim, hid = cfg.hidden_dim;
    const std::uint64_t layers = cfg.layers, moe = cfg.moe_layer_count(),
                        dense = cfg.dense_layer_count();
    OpCount c;
    c.qkv = 2 * layers * 3 * n * f * f;
    c.scores = 2 * layers * n * n * f;
    c.weighted_sum = 2 * layers * n * n * f;
    c.projection = 2 * layers * n * f * f;
    c.gate = 2 * moe * n * f * cfg.experts;
    c.experts = 2 * moe * cfg.top_k * n * 2 * f * hid;
    c.dense_ffn = 2 * dense * n * 2 * f * hid;
    return c;
}

// Throughput in GOPS for `ops` operations finishing in `cycles` at `clock_mhz`.
inline double throughput_gops(std::uint64_t ops, Cycles cycles, double clock_mhz) {
    if (cycles == 0 || clock_mhz <= 0.0) return 0.0;
    const double seconds = static_cast<double>(cycles) / (clock_mhz * 1e6);
    return static_cast<double>(ops) / seconds / 1e9;
}

// Operations implied by a published (throughput, latency) pair, in GOP.
inline double implied_gop(double throughput_gops, double latency_ms) {
    return throughput_gops * latency_ms * 1e-3;
}

}  // namespace ubimoe
