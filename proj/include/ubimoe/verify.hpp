// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Randomised cross-checks between the emulated kernels, analytical models
// and simulators and their independent oracles. Used by `ubimoe verify` and
// by the acceptance suite.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ubimoe/costmodel.hpp"
#include "ubimoe/dse.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/simtime.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe::verify {

// ---------------------------------------------------------------------------
// Oracles. Written without reusing the implementation paths they check.

// Attention from first principles: explicit per-head score matrix, max,
// exponentials, normalisation, then the V product.
inline TokenMatrix brute_force_attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                                         std::size_t heads) {
    const std::size_t n = q.rows(), f = q.cols(), dh = f / heads;
    TokenMatrix out(n, f);
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<std::vector<double>> p(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t d = h * dh; d < (h + 1) * dh; ++d) s += q(i, d) * k(j, d);
                p[i][j] = s / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, p[i][j]);
            }
            double z = 0.0;
            for (auto& x : p[i]) z += (x = std::exp(x - mx));
            for (auto& x : p[i]) x /= z;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = h * dh; d < (h + 1) * dh; ++d) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += p[i][j] * v(j, d);
                out(i, d) = acc;
            }
    }
    return out;
}

// Token-major MoE: for each token, sum its experts' MLP outputs.
inline TokenMatrix token_major_moe(const TokenMatrix& x, const RoutingTable& rt,
                                   std::span<const ExpertWeights> experts) {
    TokenMatrix out(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (const auto& r : rt.tokens[t]) {
            const auto& w = experts[r.expert];
            std::vector<double> h(w.w1.cols());
            for (std::size_t j = 0; j < h.size(); ++j) {
                double s = 0.0;
                for (std::size_t f = 0; f < x.cols(); ++f) s += x(t, f) * w.w1(f, j);
                h[j] = 0.5 * s * (1.0 + std::erf(s * M_SQRT1_2));
            }
            for (std::size_t f = 0; f < x.cols(); ++f) {
                double s = 0.0;
                for (std::size_t j = 0; j < h.size(); ++j) s += h[j] * w.w2(j, f);
                out(t, f) += r.weight * s;
            }
        }
    return out;
}

// Exhaustive MSA-stage optimum: lowest L_MSA among candidates with fitness > 0
// (ties on L_MSA to fewer DSPs).
struct MsaOptimum {
    HardwareParams params;
    Cycles l_msa = 0;
    bool found = false;
};

inline MsaOptimum exhaustive_msa(const FitnessContext& ctx, std::size_t num, const SearchDomain& d) {
    MsaOptimum best;
    std::uint64_t best_dsp = 0;
    for (std::size_t ta : d.tile_a)
        for (std::size_t na : d.pes_a)
            for (std::size_t ti : d.tile_in)
                for (std::size_t to : d.tile_out)
                    for (std::size_t nl : d.cus) {
                        const HardwareParams hp{num, ta, na, ti, to, nl};
                        const auto ev = evaluate_fitness(hp, ctx);
                        if (!ev.feasible) continue;
                        if (!best.found || ev.l_msa < best.l_msa ||
                            (ev.l_msa == best.l_msa && ev.resources.dsp_total_used < best_dsp)) {
                            best = {hp, ev.l_msa, true};
                            best_dsp = ev.resources.dsp_total_used;
                        }
                    }
    return best;
}

// ---------------------------------------------------------------------------
// Random instances

inline std::vector<ExpertWeights> random_experts(std::size_t n, std::size_t f, std::size_t hid,
                                                 std::mt19937_64& rng) {
    std::vector<ExpertWeights> ws;
    for (std::size_t e = 0; e < n; ++e) {
        const double s1 = 1.0 / std::sqrt(static_cast<double>(f)), s2 = 1.0 / std::sqrt(static_cast<double>(hid));
        ws.push_back({TokenMatrix::random(f, hid, rng, -s1, s1), TokenMatrix::random(hid, f, rng, -s2, s2)});
    }
    return ws;
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[uniform_index(rng, v.size())];
}

// A small model/platform/domain instance with a joint domain of at most 4096
// points, for search-vs-exhaustive checks.
struct SearchInstance {
    ModelConfig cfg;
    PlatformProfile pf;
    SearchDomain domain;
    RoutingTable routing;
};

inline SearchInstance random_search_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SearchInstance in;
    auto& c = in.cfg;
    c.layers = 4;
    c.patches = pick<std::size_t>({8, 12, 16}, rng);
    c.feat_dim = pick<std::size_t>({16, 32}, rng);
    c.heads = pick<std::size_t>({1, 2, 4}, rng);
    c.hidden_dim = c.feat_dim * pick<std::size_t>({1, 2}, rng);
    c.experts = pick<std::size_t>({2, 4}, rng);
    c.top_k = 1 + uniform_index(rng, std::min<std::size_t>(2, c.experts));
    c.bitwidth = 16;
    c.moe_alternate = true;
    c.non_encoder_cycles = uniform_index(rng, 200);
    in.domain.num = {0, 2, 4};
    in.domain.tile_a = {2, 4, 8};
    in.domain.pes_a = {1, 2, 4};
    in.domain.tile_in = {2, 4};
    in.domain.tile_out = {2, 4};
    in.domain.cus = {1, 2, 4};
    // joint size = 3*3*3*2*2*3 * (2*2*3) = 324 * 12 = 3888
    in.pf.name = "synthetic";
    in.pf.dsp_total = 120 + uniform_index(rng, 300);
    in.pf.bram_total = 400;
    in.pf.clock_mhz = 200.0;
    in.pf.d_exp = 1.0;
    in.pf.b_exp = 1.0;
    in.routing = RoutingTable::uniform_random(c.patches, c.experts, c.top_k, seed ^ 0x5bd1e995ull);
    return in;
}

// ---------------------------------------------------------------------------
// Property runner

struct PropertyResult {
    std::string name;
    bool passed = true;
    std::size_t checks = 0;
    std::size_t failures = 0;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t instances = 20;
    bool inject_failure = false;
};

using PropertyFn = std::function<void(const VerifyOptions&, PropertyResult&)>;

struct Property {
    std::string name;
    PropertyFn run;
};

inline void expect(PropertyResult& r, bool ok, const std::string& what) {
    ++r.checks;
    if (!ok) {
        ++r.failures;
        if (r.detail.empty()) r.detail = what;
    }
}

inline std::vector<Property> properties() {
    std::vector<Property> ps;

    ps.push_back({"fused_softmax", [](const VerifyOptions& o, PropertyResult& r) {
        std::mt19937_64 rng(o.seed);
        for (std::size_t i = 0; i < o.instances * 10; ++i) {
            const std::size_t n = 1 + uniform_index(rng, 256);
            const double mag = std::pow(10.0, uniform_real(rng, -1.0, 3.0));
            std::vector<float> s(n);
            std::vector<double> sd(n);
            for (std::size_t j = 0; j < n; ++j) sd[j] = s[j] = static_cast<float>(uniform_real(rng, -mag, mag));
            const auto v = Matrix<float>::random(n, 4, rng);
            float mx = s[0];
            for (float x : s) mx = std::max(mx, x);
            const auto fr = fused_softmax_weighted_sum(s, mx, v);
            const auto p = safe_softmax_3pass(sd);
            double err = 0.0;
            for (std::size_t d = 0; d < 4; ++d) {
                double ref = 0.0;
                for (std::size_t j = 0; j < n; ++j) ref += p[j] * v(j, d);
                err = std::max(err, std::abs(ref - fr.out[d]));
            }
            expect(r, err <= 1e-6 && fr.divisions == 1, "fused softmax deviates from the 3-pass oracle");
        }
    }});

    ps.push_back({"kernel_vs_reference", [](const VerifyOptions& o, PropertyResult& r) {
        std::mt19937_64 rng(o.seed + 1);
        for (std::size_t i = 0; i < o.instances; ++i) {
            const std::size_t heads = pick<std::size_t>({1, 2, 4}, rng);
            const std::size_t n = 1 + uniform_index(rng, 32), f = heads * (1 + uniform_index(rng, 64 / heads));
            const auto q = TokenMatrix::random(n, f, rng), k = TokenMatrix::random(n, f, rng),
                       v = TokenMatrix::random(n, f, rng);
            const auto ref = brute_force_attention(q, k, v, heads);
            const AttentionKernelParams ap{1 + uniform_index(rng, 8), 1 + uniform_index(rng, 8)};
            expect(r, max_abs_diff(attention_forward(q, k, v, heads, ap).out, ref) <= 1e-5,
                   "attention kernel deviates from brute-force attention");
            const std::size_t experts = 1 + uniform_index(rng, 8);
            const std::size_t topk = 1 + uniform_index(rng, std::min<std::size_t>(experts, 2));
            const auto rt = RoutingTable::uniform_random(n, experts, topk, rng());
            const auto ws = random_experts(experts, f, 1 + uniform_index(rng, 64), rng);
            const LinearKernelParams lp{1 + uniform_index(rng, 8), 1 + uniform_index(rng, 8), 1 + uniform_index(rng, 4)};
            expect(r, max_abs_diff(moe_forward(q, rt, ws, lp).out, token_major_moe(q, rt, ws)) <= 1e-5,
                   "moe kernel deviates from the token-major oracle");
        }
    }});

    ps.push_back({"round_robin", [](const VerifyOptions& o, PropertyResult& r) {
        std::mt19937_64 rng(o.seed + 2);
        for (std::size_t i = 0; i < o.instances * 5; ++i) {
            const std::size_t len = uniform_index(rng, 65), cus = 1 + uniform_index(rng, 8);
            std::vector<std::size_t> pending(len);
            for (std::size_t j = 0; j < len; ++j) pending[j] = j * 3 + uniform_index(rng, 3);
            const auto lists = router_round_robin(pending, cus);
            std::size_t lo = len, hi = 0;
            for (const auto& l : lists) lo = std::min(lo, l.size()), hi = std::max(hi, l.size());
            expect(r, hi - lo <= 1 && interleave_round_robin(lists) == pending, "round-robin imbalance");
        }
    }});

    ps.push_back({"attention_cycles", [](const VerifyOptions& o, PropertyResult& r) {
        std::mt19937_64 rng(o.seed + 3);
        for (std::size_t i = 0; i < o.instances * 5; ++i) {
            ModelConfig c;
            c.patches = 1 + uniform_index(rng, 64);
            c.feat_dim = 1 + uniform_index(rng, 64);
            const HardwareParams hp{0, 1 + uniform_index(rng, 16), 1 + uniform_index(rng, 16), 1, 1, 1};
            expect(r, simulate_attention_cycles(c, hp.attention()) == latency_attention(hp, c),
                   "attention cycle count differs from the closed form");
        }
    }});

    ps.push_back({"cost_model", [](const VerifyOptions& o, PropertyResult& r) {
        for (std::size_t i = 0; i < o.instances; ++i) {
            std::mt19937_64 rng(o.seed * 1000 + i);
            const auto in = random_search_instance(o.seed * 7919 + i);
            const HardwareParams hp{pick(in.domain.num, rng),  pick(in.domain.tile_a, rng), pick(in.domain.pes_a, rng),
                                    pick(in.domain.tile_in, rng), pick(in.domain.tile_out, rng), pick(in.domain.cus, rng)};
            const LinearKernelParams moe{pick(in.domain.tile_in, rng), pick(in.domain.tile_out, rng), pick(in.domain.cus, rng)};
            const auto d = validate_cost_model(in.cfg, hp, moe, in.routing);
            expect(r, d.ok() && d.quantities[0].abs_diff() == 0 && d.quantities[1].abs_diff() == 0,
                   "cost model / simulator mismatch: " + d.failures());
        }
    }});

    ps.push_back({"pipeline", [](const VerifyOptions& o, PropertyResult& r) {
        std::mt19937_64 rng(o.seed + 5);
        for (std::size_t i = 0; i < o.instances * 10; ++i) {
            const Cycles a = uniform_index(rng, 10000), b = uniform_index(rng, 10000);
            const std::size_t p = 1 + uniform_index(rng, 24);
            const auto res = simulate_layer_pipeline({p, a, b, 0, {}});
            expect(r, res.total == a + (p - 1) * std::max(a, b) + b, "pipeline total differs from closed form");
        }
    }});

    ps.push_back({"search_vs_exhaustive", [](const VerifyOptions& o, PropertyResult& r) {
        // Never better than the optimum; within 5% of it on at least 90% of
        // instances.
        GaConfig ga;
        std::size_t solved = 0, close = 0;
        for (std::size_t i = 0; i < o.instances; ++i) {
            const auto in = random_search_instance(o.seed * 104729 + i);
            ga.seed = o.seed + i;
            try {
                const auto has = has_search(in.pf, in.cfg, in.routing, ga, in.domain);
                const auto ex = exhaustive_search(in.pf, in.cfg, in.routing, in.domain);
                expect(r, has.latency.cycles_total >= ex.total, "search beat the exhaustive optimum");
                ++solved;
                if (static_cast<double>(has.latency.cycles_total) <= 1.05 * static_cast<double>(ex.total)) ++close;
            } catch (const SearchError&) {
                // Infeasible platforms must be infeasible for both.
                bool ex_ok = true;
                try { exhaustive_search(in.pf, in.cfg, in.routing, in.domain); } catch (const SearchError&) { ex_ok = false; }
                expect(r, !ex_ok, "search failed where the exhaustive search found a design");
            }
        }
        std::ostringstream s;
        s << close << "/" << solved << " within 5%";
        expect(r, solved == 0 || 10 * close >= 9 * solved, s.str());
        if (r.detail.empty()) r.detail = s.str();
    }});

    ps.push_back({"binary_search", [](const VerifyOptions& o, PropertyResult& r) {
        for (std::size_t i = 0; i < o.instances; ++i) {
            const auto in = random_search_instance(o.seed * 31 + i);
            const MoeCandidateTable t(in.domain, in.cfg, in.routing, in.pf);
            if (t.empty()) continue;
            for (const auto& e : t.entries())
                for (Cycles b : {e.latency - 1, e.latency, e.latency + 1})
                    expect(r, t.cheapest_within(b) == t.cheapest_within_scan(b), "bisection differs from linear scan");
        }
    }});

    return ps;
}

// Runs the named property, or all of them when `only` is empty.
inline std::vector<PropertyResult> run(const VerifyOptions& opts, const std::string& only = {}) {
    std::vector<PropertyResult> out;
    for (const auto& p : properties()) {
        if (!only.empty() && p.name != only) continue;
        PropertyResult r;
        r.name = p.name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            p.run(opts, r);
        } catch (const std::exception& e) {
            ++r.failures;
            r.detail = std::string("exception: ") + e.what();
        }
        if (opts.inject_failure) {
            ++r.checks;
            ++r.failures;
            if (r.detail.empty()) r.detail = "injected failure";
        }
        r.passed = r.failures == 0;
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(r);
    }
    return out;
}

}  // namespace ubimoe::verify
