// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Cycle-approximate timing simulation. Per-kernel counts replay the kernel
// schedules event by event; the MSA block is an event-driven run of its
// linear and attention tasks; the encoder stack is the double-buffered
// MSA / feed-forward round schedule. Everything here is independent of the
// closed forms in costmodel.hpp and linear_model.hpp, which it validates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "ubimoe/common.hpp"
#include "ubimoe/costmodel.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe {

inline Cycles simulate_attention_cycles(const ModelConfig& cfg, const AttentionKernelParams& ap) {
    Cycles end = 0;
    visit_attention_schedule(cfg.patches, cfg.feat_dim, ap,
                             [&](Cycles c, std::size_t, std::size_t, std::size_t, std::size_t) {
                                 end = std::max(end, c + 1);
                             });
    return end;
}

inline Cycles simulate_linear_cycles(std::size_t tokens, std::size_t in_dim, std::size_t out_dim,
                                     const LinearKernelParams& lp,
                                     const LinearTimingOptions& timing = {}) {
    Cycles end = 0;
    visit_linear_schedule(
        tokens, in_dim, out_dim, lp, timing.tile_load_overhead, 0,
        [&](Cycles c, std::size_t, std::size_t) { end = std::max(end, c + timing.tile_load_overhead); },
        [&](Cycles c, std::size_t, std::size_t, std::size_t) { end = std::max(end, c + 1); });
    return end;
}

namespace detail {

inline Cycles replay_moe(const ModelConfig& cfg, const RoutingTable& routing,
                         const LinearKernelParams& lp, const LinearTimingOptions& timing) {
    Cycles end = 0;
    visit_moe_schedule(
        cfg.feat_dim, cfg.hidden_dim, routing, lp, timing,
        [&](std::size_t, const std::vector<std::size_t>&, Cycles start, Cycles load) {
            end = std::max(end, start + load);
        },
        [&](Cycles c, std::size_t, std::size_t) { end = std::max(end, c + timing.tile_load_overhead); },
        [&](Cycles c, int, std::size_t, std::size_t, std::size_t) { end = std::max(end, c + 1); });
    return end;
}

}  // namespace detail

inline Cycles simulate_moe_cycles(const ModelConfig& cfg, const RoutingTable& routing,
                                  const LinearKernelParams& lp, const LinearTimingOptions& timing = {}) {
    return detail::replay_moe(cfg, routing, lp, timing);
}

inline Cycles simulate_dense_ffn_cycles(const ModelConfig& cfg, const LinearKernelParams& lp,
                                        const LinearTimingOptions& timing = {}) {
    RoutingTable all;
    all.experts = 1;
    all.tokens.assign(cfg.patches, {RouteEntry{0, 1.0}});
    return detail::replay_moe(cfg, all, lp, timing);
}

// ---------------------------------------------------------------------------
// MSA block

struct MsaTaskRecord {
    std::string name;   // "q", "k", "v", "attn", "proj"
    std::string unit;   // "attn", "lin<i>" (dedicated), "shared"
    Cycles start = 0;
    Cycles end = 0;
};

struct MsaSimulation {
    Cycles cycles = 0;
    std::vector<MsaTaskRecord> tasks;
};

// Event-driven run of one MSA block. Q/K/V/proj tasks bound to dedicated
// modules stream alongside the attention kernel; tasks on the shared kernel
// run one at a time, the Q/K/V ones before the streaming group (attention
// needs them) and the projection after it.
inline MsaSimulation simulate_msa(const ModelConfig& cfg, const HardwareParams& hp,
                                  const LinearTimingOptions& timing = {}) {
    struct Task {
        std::string name;
        bool dedicated;
        Cycles duration;
    };
    const Cycles lin = simulate_linear_cycles(cfg.patches, cfg.feat_dim, cfg.feat_dim, hp.linear(), timing);
    const Cycles attn = simulate_attention_cycles(cfg, hp.attention());
    const char* names[kMsaLinearTasks] = {"q", "k", "v", "proj"};
    std::vector<Task> linear;
    for (std::size_t i = 0; i < kMsaLinearTasks; ++i) linear.push_back({names[i], i < hp.num, lin});

    // Event queue of (time, task index); ties resolve by index.
    using Ev = std::pair<Cycles, std::size_t>;
    std::priority_queue<Ev, std::vector<Ev>, std::greater<>> done;
    MsaSimulation sim;
    Cycles shared_free = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        if (linear[i].dedicated) continue;
        sim.tasks.push_back({linear[i].name, "shared", shared_free, shared_free + linear[i].duration});
        shared_free += linear[i].duration;
        done.emplace(sim.tasks.back().end, sim.tasks.size() - 1);
    }
    Cycles group_start = 0;
    while (!done.empty()) {
        group_start = std::max(group_start, done.top().first);
        done.pop();
    }
    sim.tasks.push_back({"attn", "attn", group_start, group_start + attn});
    done.emplace(group_start + attn, sim.tasks.size() - 1);
    for (std::size_t i = 0; i < kMsaLinearTasks; ++i) {
        if (!linear[i].dedicated) continue;
        sim.tasks.push_back({linear[i].name, "lin" + std::to_string(i), group_start,
                             group_start + linear[i].duration});
        done.emplace(sim.tasks.back().end, sim.tasks.size() - 1);
    }
    Cycles group_end = group_start;
    while (!done.empty()) {
        group_end = std::max(group_end, done.top().first);
        done.pop();
    }
    Cycles end = group_end;
    if (!linear[3].dedicated) {
        sim.tasks.push_back({"proj", "shared", group_end, group_end + linear[3].duration});
        end = group_end + linear[3].duration;
    }
    sim.cycles = end;
    return sim;
}

inline Cycles simulate_msa_cycles(const ModelConfig& cfg, const HardwareParams& hp,
                                  const LinearTimingOptions& timing = {}) {
    return simulate_msa(cfg, hp, timing).cycles;
}

// ---------------------------------------------------------------------------
// Double-buffered encoder pipeline

struct PipelineSpec {
    std::size_t layer_pairs = 1;
    Cycles l_msa = 0;
    Cycles l_moe = 0;
    Cycles non_encoder_cycles = 0;
    // Per-layer feed-forward latency; when non-empty it overrides l_moe and
    // must have layer_pairs entries.
    std::vector<Cycles> l_ffn_per_layer;

    Cycles ffn(std::size_t layer) const {
        return l_ffn_per_layer.empty() ? l_moe : l_ffn_per_layer.at(layer);
    }
};

enum class BlockKind { NonEncoder, Msa, Ffn };

struct Interval {
    BlockKind block = BlockKind::Msa;
    std::size_t layer = 0;
    Cycles start = 0;
    Cycles end = 0;
};

struct Timeline {
    std::vector<Interval> intervals;

    std::vector<Interval> of(BlockKind kind) const {
        std::vector<Interval> out;
        for (const auto& iv : intervals)
            if (iv.block == kind) out.push_back(iv);
        return out;
    }
};

struct PipelineResult {
    Cycles total = 0;
    Timeline timeline;
};

// Round r runs MSA_r (r < P) together with FFN_{r-1} (r >= 1). MSA writes
// Buf0, FFN reads Buf1; the buffers swap once both blocks of the round are
// done, so the next round starts at the later of the two ends.
inline PipelineResult simulate_layer_pipeline(const PipelineSpec& spec) {
    if (!spec.l_ffn_per_layer.empty() && spec.l_ffn_per_layer.size() != spec.layer_pairs)
        throw DomainError("pipeline: per-layer latencies must cover every layer");
    PipelineResult res;
    Cycles t = 0;
    if (spec.non_encoder_cycles > 0) {
        res.timeline.intervals.push_back({BlockKind::NonEncoder, 0, 0, spec.non_encoder_cycles});
        t = spec.non_encoder_cycles;
    }
    for (std::size_t round = 0; round <= spec.layer_pairs && spec.layer_pairs > 0; ++round) {
        Cycles round_end = t;
        if (round < spec.layer_pairs) {
            res.timeline.intervals.push_back({BlockKind::Msa, round, t, t + spec.l_msa});
            round_end = std::max(round_end, t + spec.l_msa);
        }
        if (round >= 1) {
            const Cycles l = spec.ffn(round - 1);
            res.timeline.intervals.push_back({BlockKind::Ffn, round - 1, t, t + l});
            round_end = std::max(round_end, t + l);
        }
        t = round_end;
    }
    res.total = t;
    return res;
}

inline const char* to_string(BlockKind b) {
    switch (b) {
        case BlockKind::NonEncoder: return "NONENC";
        case BlockKind::Msa: return "MSA";
        case BlockKind::Ffn: return "FFN";
    }
    return "?";
}

// `block layer start end`, one interval per line in schedule order.
inline std::string export_timeline(const Timeline& tl) {
    std::ostringstream os;
    for (const auto& iv : tl.intervals)
        os << to_string(iv.block) << ' ' << iv.layer << ' ' << iv.start << ' ' << iv.end << '\n';
    return os.str();
}

// Per-layer feed-forward latencies for a model: MoE layers use the routing,
// dense layers the single-expert path.
inline std::vector<Cycles> ffn_latencies(const ModelConfig& cfg, Cycles l_moe, Cycles l_dense) {
    std::vector<Cycles> out(cfg.layers);
    for (std::size_t i = 0; i < cfg.layers; ++i) out[i] = cfg.is_moe_layer(i) ? l_moe : l_dense;
    return out;
}

// ---------------------------------------------------------------------------
// Cost model validation

struct QuantityDiff {
    std::string name;
    Cycles analytical = 0;
    Cycles simulated = 0;
    double tolerance = 0.0;  // relative

    double abs_diff() const {
        return std::abs(static_cast<double>(analytical) - static_cast<double>(simulated));
    }
    double rel_diff() const {
        return simulated == 0 ? (analytical == 0 ? 0.0 : 1.0) : abs_diff() / static_cast<double>(simulated);
    }
    bool ok() const { return rel_diff() <= tolerance; }
};

struct CostModelDiff {
    std::vector<QuantityDiff> quantities;

    bool ok() const {
        return std::all_of(quantities.begin(), quantities.end(), [](const auto& q) { return q.ok(); });
    }

    std::string failures() const {
        std::string s;
        for (const auto& q : quantities)
            if (!q.ok()) s += (s.empty() ? "" : ", ") + q.name;
        return s;
    }
};

inline constexpr double kMsaDiffTolerance = 0.01;

// Analytical vs simulated L_attn, L_MoE (zero tolerance), L_MSA (1%) and the
// stack total (1%). Throws ValidationError when `throw_on_failure` is set
// and any quantity is out of tolerance.
inline CostModelDiff validate_cost_model(const ModelConfig& cfg, const HardwareParams& hp,
                                         const LinearKernelParams& moe, const RoutingTable& routing,
                                         const LinearTimingOptions& timing = {},
                                         bool throw_on_failure = false) {
    CostModelDiff d;
    d.quantities.push_back({"L_attn", latency_attention(hp, cfg),
                            simulate_attention_cycles(cfg, hp.attention()), 0.0});
    d.quantities.push_back({"L_MoE", latency_moe(cfg, routing, moe, timing),
                            simulate_moe_cycles(cfg, routing, moe, timing), 0.0});
    const Cycles msa_a = latency_msa(hp, cfg, timing);
    const Cycles msa_s = simulate_msa_cycles(cfg, hp, timing);
    d.quantities.push_back({"L_MSA", msa_a, msa_s, kMsaDiffTolerance});

    PipelineSpec analytic{cfg.layers, msa_a, 0, cfg.non_encoder_cycles,
                          ffn_latencies(cfg, latency_moe(cfg, routing, moe, timing),
                                        latency_dense_ffn(cfg, moe, timing))};
    PipelineSpec simulated{cfg.layers, msa_s, 0, cfg.non_encoder_cycles,
                           ffn_latencies(cfg, simulate_moe_cycles(cfg, routing, moe, timing),
                                         simulate_dense_ffn_cycles(cfg, moe, timing))};
    // Closed form of the round schedule for the analytical side.
    Cycles closed = cfg.non_encoder_cycles + analytic.l_msa;
    for (std::size_t i = 0; i + 1 < cfg.layers; ++i)
        closed += std::max(analytic.l_msa, analytic.ffn(i));
    closed += analytic.ffn(cfg.layers - 1);
    d.quantities.push_back({"total", closed, simulate_layer_pipeline(simulated).total, kMsaDiffTolerance});

    if (throw_on_failure && !d.ok())
        throw ValidationError("cost model validation failed: " + d.failures());
    return d;
}

}  // namespace ubimoe
