// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Analytical DSP / BRAM / latency models of the attention kernel and the
// MSA block composition, plus platform budget checks. The reusable linear
// and MoE kernel models live in linear_model.hpp.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ubimoe/bitwidth.hpp"
#include "ubimoe/common.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/linear_model.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe {

// The searched genome: [num, T_a, N_a, T_in, T_out, N_L].
struct HardwareParams {
    std::size_t num = 0;  // dedicated streaming linear modules in the MSA block
    std::size_t tile_a = 1;
    std::size_t pes_a = 1;
    std::size_t tile_in = 1;
    std::size_t tile_out = 1;
    std::size_t cus = 1;

    AttentionKernelParams attention() const { return {tile_a, pes_a}; }
    LinearKernelParams linear() const { return {tile_in, tile_out, cus}; }

    void validate() const {
        attention().validate();
        linear().validate();
    }

    friend bool operator==(const HardwareParams&, const HardwareParams&) = default;
};

struct PlatformProfile {
    std::string name = "custom";
    std::uint64_t dsp_total = 0;
    std::uint64_t bram_total = 0;
    std::uint64_t bw_total = 0;  // budget units; only reported
    double clock_mhz = 100.0;
    double d_exp = 5.0;          // DSPs per exponential unit
    double b_exp = 2.0;          // BRAMs per exponential unit
    unsigned bwidth = 36;        // bits per BRAM port
    std::uint64_t bdepth = 1024; // words per BRAM
    double psi_32 = 4.0;         // DSPs per multiplier for 16 < q <= 32

    void validate() const {
        if (dsp_total == 0) throw DomainError("platform dsp_total must be positive");
        if (bram_total == 0) throw DomainError("platform bram_total must be positive");
        if (!(clock_mhz > 0.0)) throw DomainError("platform clock_mhz must be positive");
        if (d_exp < 0.0 || b_exp < 0.0 || psi_32 < 0.0)
            throw DomainError("platform cost constants must be non-negative");
        if (bwidth == 0 || bdepth == 0) throw DomainError("platform BRAM geometry must be positive");
    }
};

inline std::uint64_t dsp_attention(const HardwareParams& hp, const ModelConfig& cfg,
                                   const PlatformProfile& pf) {
    const double per_pe = 2.0 * psi(cfg.bitwidth, pf.psi_32) * static_cast<double>(hp.tile_a) +
                          pf.d_exp * static_cast<double>(cfg.heads);
    return static_cast<std::uint64_t>(std::ceil(per_pe * static_cast<double>(hp.pes_a)));
}

inline std::uint64_t bram_attention(const HardwareParams& hp, const ModelConfig& cfg,
                                    const PlatformProfile& pf) {
    const std::uint64_t buffers = 2 * ceil_div<std::uint64_t>(cfg.bitwidth, pf.bwidth) *
                                  ceil_div<std::uint64_t>(cfg.patches, pf.bdepth);
    const double exp_units = pf.b_exp * static_cast<double>(cfg.heads * hp.pes_a);
    return buffers + static_cast<std::uint64_t>(std::ceil(exp_units));
}

// N^2 F / (T_a N_a), in its ceiling form ceil(N/N_a) * N * ceil(F/T_a).
inline Cycles latency_attention(const HardwareParams& hp, const ModelConfig& cfg) {
    return ceil_div<Cycles>(cfg.patches, hp.pes_a) * cfg.patches *
           ceil_div<Cycles>(cfg.feat_dim, hp.tile_a);
}

// ---------------------------------------------------------------------------
// MSA block composition
//
// Linear tasks of the MSA block, in dataflow order: Q, K, V generation and
// the output projection, each an N x F -> F product. The first `num` tasks
// run on dedicated streaming modules and overlap with the attention kernel
// (max composition); the remaining tasks time-share one reusable kernel
// (additive composition). All linear modules use the genome's T_in/T_out/N_L.

inline constexpr std::size_t kMsaLinearTasks = 4;

inline std::size_t dedicated_msa_tasks(const HardwareParams& hp) {
    return std::min(hp.num, kMsaLinearTasks);
}

inline Cycles latency_msa_linear_task(const HardwareParams& hp, const ModelConfig& cfg,
                                      const LinearTimingOptions& timing = {}) {
    return latency_linear(cfg.patches, cfg.feat_dim, cfg.feat_dim, hp.linear(), timing);
}

inline Cycles latency_msa(const HardwareParams& hp, const ModelConfig& cfg,
                          const LinearTimingOptions& timing = {}) {
    const Cycles attn = latency_attention(hp, cfg);
    const Cycles task = latency_msa_linear_task(hp, cfg, timing);
    const std::size_t dedicated = dedicated_msa_tasks(hp);
    const Cycles streaming = dedicated > 0 ? std::max(attn, task) : attn;
    return streaming + static_cast<Cycles>(kMsaLinearTasks - dedicated) * task;
}

inline constexpr const char* kMsaCompositionFormula =
    "L_MSA = max(L_attn, [num>0] * L_task) + (4 - min(num,4)) * L_task,"
    " L_task = latency_linear(N, F, F)";

// ---------------------------------------------------------------------------
// Resources

struct ResourceReport {
    std::uint64_t dsp_attn = 0;
    std::uint64_t bram_attn = 0;
    std::uint64_t dsp_linear = 0;   // MSA-block linear modules
    std::uint64_t bram_linear = 0;
    std::uint64_t dsp_moe = 0;      // MoE-block reusable linear kernel
    std::uint64_t bram_moe = 0;
    std::uint64_t dsp_total_used = 0;
    std::uint64_t bram_total_used = 0;

    void recompute_totals() {
        dsp_total_used = dsp_attn + dsp_linear + dsp_moe;
        bram_total_used = bram_attn + bram_linear + bram_moe;
    }
};

// Linear module instances in the MSA block: `num` dedicated modules plus the
// shared kernel when any task is left for it.
inline std::size_t msa_linear_instances(const HardwareParams& hp) {
    return hp.num + (hp.num < kMsaLinearTasks ? 1 : 0);
}

// Attention kernel, dedicated streaming modules and the shared MSA linear
// kernel. MoE-block resources are added by design_resources.
inline ResourceReport resources_total(const HardwareParams& hp, const ModelConfig& cfg,
                                      const PlatformProfile& pf) {
    ResourceReport rr;
    rr.dsp_attn = dsp_attention(hp, cfg, pf);
    rr.bram_attn = bram_attention(hp, cfg, pf);
    const std::uint64_t inst = msa_linear_instances(hp);
    rr.dsp_linear = inst * dsp_linear(hp.linear(), cfg.bitwidth, pf.psi_32);
    rr.bram_linear = inst * bram_linear(hp.linear(), cfg, pf.bwidth, pf.bdepth);
    rr.recompute_totals();
    return rr;
}

inline ResourceReport design_resources(const HardwareParams& hp, const LinearKernelParams& moe,
                                       const ModelConfig& cfg, const PlatformProfile& pf) {
    ResourceReport rr = resources_total(hp, cfg, pf);
    rr.dsp_moe = dsp_linear(moe, cfg.bitwidth, pf.psi_32);
    rr.bram_moe = bram_linear(moe, cfg, pf.bwidth, pf.bdepth);
    rr.recompute_totals();
    return rr;
}

enum class BandwidthStatus { Unchecked, Within, Exceeded };

inline const char* to_string(BandwidthStatus s) {
    switch (s) {
        case BandwidthStatus::Unchecked: return "unchecked";
        case BandwidthStatus::Within: return "within";
        case BandwidthStatus::Exceeded: return "exceeded";
    }
    return "?";
}

using BandwidthHook = std::function<BandwidthStatus(const ResourceReport&, const PlatformProfile&)>;

struct BudgetVerdict {
    bool feasible = true;
    std::int64_t dsp_slack = 0;
    std::int64_t bram_slack = 0;
    BandwidthStatus bandwidth = BandwidthStatus::Unchecked;
    std::vector<std::string> violated;  // "dsp", "bram", "bw"
};

inline BudgetVerdict check_budget(const ResourceReport& rr, const PlatformProfile& pf,
                                  const BandwidthHook& bandwidth = {}) {
    BudgetVerdict v;
    v.dsp_slack = static_cast<std::int64_t>(pf.dsp_total) - static_cast<std::int64_t>(rr.dsp_total_used);
    v.bram_slack = static_cast<std::int64_t>(pf.bram_total) - static_cast<std::int64_t>(rr.bram_total_used);
    if (v.dsp_slack < 0) v.violated.push_back("dsp");
    if (v.bram_slack < 0) v.violated.push_back("bram");
    if (bandwidth) {
        v.bandwidth = bandwidth(rr, pf);
        if (v.bandwidth == BandwidthStatus::Exceeded) v.violated.push_back("bw");
    }
    v.feasible = v.violated.empty();
    return v;
}

// ---------------------------------------------------------------------------
// Latency report

struct LatencyReport {
    Cycles cycles_attn = 0;
    Cycles cycles_msa = 0;
    Cycles cycles_moe = 0;  // slowest feed-forward block on the MoE-block kernel
    Cycles cycles_non_encoder = 0;
    Cycles cycles_total = 0;
    double clock_mhz = 0.0;

    static double to_ms(Cycles c, double clock_mhz) {
        return clock_mhz > 0.0 ? static_cast<double>(c) / (clock_mhz * 1e3) : 0.0;
    }
    double total_ms() const { return to_ms(cycles_total, clock_mhz); }
};

}  // namespace ubimoe
