// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Cost model of the reusable linear kernel and the expert-by-expert MoE
// block. These formulas extend the attention-kernel model in the same style
// (ceil-composed tiles, Psi(q) DSPs per multiplier, BRAM by width x depth)
// and are kept in this one file so an alternative model can replace them.
// kLinearModelFormulas is printed verbatim in reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ubimoe/bitwidth.hpp"
#include "ubimoe/common.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe {

inline constexpr const char* kLinearModelFormulas =
    "L_lin(t,i,o) = ceil(t/N_L)*ceil(i/T_in)*ceil(o/T_out) + overhead*ceil(i/T_in)*ceil(o/T_out); "
    "L_MoE = sum_{e: t_e>0} [L_lin(t_e,F,H) + L_lin(t_e,H,F) + ceil(2*F*H/(T_wt*rate))]; "
    "L_dense = L_lin(N,F,H) + L_lin(N,H,F) + ceil(2*F*H/(T_wt*rate)); "
    "DSP_lin = ceil(Psi(q)*T_in*T_out*N_L); "
    "BRAM_lin = N_L*ceil(q/bwidth)*ceil((max(F,H)+T_wt)/bdepth)";

inline Cycles latency_linear(std::size_t tokens, std::size_t in_dim, std::size_t out_dim,
                             const LinearKernelParams& lp, const LinearTimingOptions& timing = {}) {
    const Cycles tiles = linear_tile_count(in_dim, out_dim, lp);
    return ceil_div<Cycles>(tokens, lp.cus) * tiles + timing.tile_load_overhead * tiles;
}

inline Cycles latency_moe(const ModelConfig& cfg, const RoutingTable& routing,
                          const LinearKernelParams& lp, const LinearTimingOptions& timing = {}) {
    Cycles total = 0;
    for (std::size_t tokens_e : routing.load_per_expert()) {
        if (tokens_e == 0) continue;
        total += latency_linear(tokens_e, cfg.feat_dim, cfg.hidden_dim, lp, timing) +
                 latency_linear(tokens_e, cfg.hidden_dim, cfg.feat_dim, lp, timing) +
                 expert_weight_load_cycles(cfg.feat_dim, cfg.hidden_dim, lp, timing);
    }
    return total;
}

// Dense feed-forward block of a non-MoE encoder on the same kernel: one
// "expert" receiving every token.
inline Cycles latency_dense_ffn(const ModelConfig& cfg, const LinearKernelParams& lp,
                                const LinearTimingOptions& timing = {}) {
    return latency_linear(cfg.patches, cfg.feat_dim, cfg.hidden_dim, lp, timing) +
           latency_linear(cfg.patches, cfg.hidden_dim, cfg.feat_dim, lp, timing) +
           expert_weight_load_cycles(cfg.feat_dim, cfg.hidden_dim, lp, timing);
}

// Slowest feed-forward stage the MoE-block kernel runs across the model's
// layers. This is the block latency the search balances the MSA block against.
inline Cycles latency_ffn_block(const ModelConfig& cfg, const RoutingTable& routing,
                                const LinearKernelParams& lp, const LinearTimingOptions& timing = {}) {
    Cycles worst = 0;
    if (cfg.moe_layer_count() > 0) worst = std::max(worst, latency_moe(cfg, routing, lp, timing));
    if (cfg.dense_layer_count() > 0) worst = std::max(worst, latency_dense_ffn(cfg, lp, timing));
    return worst;
}

inline std::uint64_t dsp_linear(const LinearKernelParams& lp, unsigned q, double psi_32 = 4.0) {
    const double macs = static_cast<double>(lp.tile_in * lp.tile_out * lp.cus);
    return static_cast<std::uint64_t>(std::ceil(psi(q, psi_32) * macs));
}

// Per CU: an activation buffer of max(F, H) words plus one broadcast weight
// tile of T_wt words.
inline std::uint64_t bram_linear(const LinearKernelParams& lp, const ModelConfig& cfg,
                                 unsigned bwidth, std::uint64_t bdepth) {
    const std::uint64_t depth = std::max(cfg.feat_dim, cfg.hidden_dim) + lp.tile_wt();
    return static_cast<std::uint64_t>(lp.cus) * ceil_div<std::uint64_t>(cfg.bitwidth, bwidth) *
           ceil_div<std::uint64_t>(depth, bdepth);
}

}  // namespace ubimoe
