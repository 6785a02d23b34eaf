// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage hardware accelerator search.
//
//   1. MoE part 1: best feed-forward block latency L_MoE over the linear
//      kernel domain under the full platform budget.
//   2. MSA stage: for every num, a seeded GA over [T_a, N_a, T_in, T_out, N_L]
//      maximising L_MoE / L_MSA, stopping at the first generation that
//      reaches 1.
//   3. MoE part 2: cheapest MoE kernel (by DSPs) whose latency stays within
//      the MSA bound, found by bisection.
//
// The candidate that wins across num is the one with the lowest
// double-buffered stack latency. exhaustive_search enumerates the joint
// domain and serves as the test oracle.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ubimoe/common.hpp"
#include "ubimoe/costmodel.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/linear_model.hpp"
#include "ubimoe/simtime.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe {

struct SearchDomain {
    std::vector<std::size_t> num{0, 1, 2, 3, 4};
    std::vector<std::size_t> tile_a{1, 2, 4, 8, 16};
    std::vector<std::size_t> pes_a{1, 2, 4, 8};
    std::vector<std::size_t> tile_in{1, 2, 4, 8};
    std::vector<std::size_t> tile_out{1, 2, 4, 8};
    std::vector<std::size_t> cus{1, 2, 4, 8};

    void validate() const {
        auto check = [](const std::vector<std::size_t>& v, const char* name, std::size_t min) {
            if (v.empty()) throw DomainError(std::string("domain.") + name + " must be non-empty");
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (v[i] < min)
                    throw DomainError(std::string("domain.") + name + " values must be >= " + std::to_string(min));
                if (i > 0 && v[i] <= v[i - 1])
                    throw DomainError(std::string("domain.") + name + " must be strictly increasing");
            }
        };
        check(num, "num", 0);
        check(tile_a, "tile_a", 1);
        check(pes_a, "pes_a", 1);
        check(tile_in, "tile_in", 1);
        check(tile_out, "tile_out", 1);
        check(cus, "cus", 1);
    }

    std::uint64_t msa_size() const {
        return static_cast<std::uint64_t>(num.size()) * tile_a.size() * pes_a.size() * tile_in.size() *
               tile_out.size() * cus.size();
    }
    std::uint64_t moe_size() const {
        return static_cast<std::uint64_t>(tile_in.size()) * tile_out.size() * cus.size();
    }
    std::uint64_t joint_size() const { return msa_size() * moe_size(); }
};

struct GaConfig {
    std::size_t population_size = 64;
    std::size_t generations = 200;
    double crossover_rate = 0.8;
    double mutation_rate = 0.1;
    std::size_t tournament_size = 4;
    std::uint64_t seed = 1;

    void validate() const {
        if (population_size < 2) throw DomainError("ga.population_size must be >= 2");
        if (generations < 1) throw DomainError("ga.generations must be >= 1");
        if (crossover_rate < 0.0 || crossover_rate > 1.0) throw DomainError("ga.crossover_rate must lie in [0,1]");
        if (mutation_rate < 0.0 || mutation_rate > 1.0) throw DomainError("ga.mutation_rate must lie in [0,1]");
        if (tournament_size < 1) throw DomainError("ga.tournament_size must be >= 1");
    }
};

struct GenerationRecord {
    std::size_t generation = 0;
    double best_fitness = 0.0;
    Cycles best_l_msa = 0;
    std::uint64_t dsp_used = 0;
    std::uint64_t bram_used = 0;
};

struct SearchResult {
    HardwareParams params;
    LinearKernelParams moe;
    LatencyReport latency;
    ResourceReport resources;
    double fit_score = 0.0;  // L_MoE / L_MSA; +inf when the model has no MoE layer
    bool no_moe = false;
    Cycles moe_part1_latency = 0;
    std::vector<GenerationRecord> trace;
    std::vector<std::string> stage_log;
};

// ---------------------------------------------------------------------------
// MoE kernel candidates

struct MoeCandidate {
    LinearKernelParams params;
    Cycles latency = 0;  // feed-forward block latency
    std::uint64_t dsp = 0;
    std::uint64_t bram = 0;
};

// Every (T_in, T_out, N_L) domain point that fits the platform on its own,
// ordered by (dsp, latency, bram, domain order).
class MoeCandidateTable {
public:
    MoeCandidateTable(const SearchDomain& domain, const ModelConfig& cfg, const RoutingTable& routing,
                      const PlatformProfile& pf, const LinearTimingOptions& timing = {}) {
        for (std::size_t a : domain.tile_in)
            for (std::size_t b : domain.tile_out)
                for (std::size_t c : domain.cus) {
                    MoeCandidate m;
                    m.params = {a, b, c};
                    m.latency = latency_ffn_block(cfg, routing, m.params, timing);
                    m.dsp = dsp_linear(m.params, cfg.bitwidth, pf.psi_32);
                    m.bram = bram_linear(m.params, cfg, pf.bwidth, pf.bdepth);
                    ++scanned_;
                    if (m.dsp > pf.dsp_total) {
                        ++over_dsp_;
                        continue;
                    }
                    if (m.bram > pf.bram_total) {
                        ++over_bram_;
                        continue;
                    }
                    entries_.push_back(m);
                }
        std::stable_sort(entries_.begin(), entries_.end(), [](const MoeCandidate& x, const MoeCandidate& y) {
            if (x.dsp != y.dsp) return x.dsp < y.dsp;
            if (x.latency != y.latency) return x.latency < y.latency;
            return x.bram < y.bram;
        });
        // Best latency reachable with at most the DSPs of entry i.
        staircase_.resize(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i)
            staircase_[i] = i == 0 ? entries_[i].latency : std::min(staircase_[i - 1], entries_[i].latency);
    }

    const std::vector<MoeCandidate>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }

    // Resource that rules out the most candidates ("dsp" or "bram").
    std::string binding() const { return over_bram_ > over_dsp_ ? "bram" : "dsp"; }

    // Minimal latency; ties go to fewer DSPs, then BRAMs.
    const MoeCandidate& best() const {
        if (entries_.empty()) throw SearchError(SearchError::Kind::Infeasible, binding(),
                                                "no MoE kernel configuration fits the platform budget");
        const MoeCandidate* b = &entries_[0];
        for (const auto& e : entries_)
            if (e.latency < b->latency) b = &e;
        return *b;
    }

    // Cheapest entry (list order) with latency <= bound, by bisection over the
    // staircase, which is non-increasing by construction. The first staircase
    // index at or below the bound is an entry that itself attains it.
    std::optional<std::size_t> cheapest_within(Cycles bound) const {
        std::size_t lo = 0, hi = staircase_.size();
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (staircase_[mid] <= bound) hi = mid;
            else lo = mid + 1;
        }
        if (lo == staircase_.size()) return std::nullopt;
        return lo;
    }

    // Linear scan with the same ordering; the oracle for cheapest_within.
    std::optional<std::size_t> cheapest_within_scan(Cycles bound) const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].latency <= bound) return i;
        return std::nullopt;
    }

private:
    std::vector<MoeCandidate> entries_;
    std::vector<Cycles> staircase_;
    std::size_t scanned_ = 0, over_dsp_ = 0, over_bram_ = 0;
};

struct MoePart1 {
    Cycles latency = 0;
    LinearKernelParams params;
};

inline MoePart1 best_moe_latency(const PlatformProfile& pf, const ModelConfig& cfg,
                                 const RoutingTable& routing, const SearchDomain& domain,
                                 const LinearTimingOptions& timing = {}) {
    const MoeCandidateTable table(domain, cfg, routing, pf, timing);
    const auto& b = table.best();
    return {b.latency, b.params};
}

// Part 2: cheapest MoE kernel with latency <= bound. Falls back to the part-1
// optimum when nothing meets the bound.
inline LinearKernelParams binary_search_moe(Cycles bound, const MoeCandidateTable& table) {
    if (const auto i = table.cheapest_within(bound)) return table.entries()[*i].params;
    return table.best().params;
}

inline LinearKernelParams binary_search_moe(Cycles bound, const PlatformProfile& pf,
                                            const ModelConfig& cfg, const RoutingTable& routing,
                                            const SearchDomain& domain,
                                            const LinearTimingOptions& timing = {}) {
    return binary_search_moe(bound, MoeCandidateTable(domain, cfg, routing, pf, timing));
}

// ---------------------------------------------------------------------------
// Fitness

struct FitnessContext {
    const ModelConfig* cfg = nullptr;
    const PlatformProfile* pf = nullptr;
    LinearTimingOptions timing{};
    Cycles l_moe = 0;
    // When set, a candidate must leave room for the cheapest MoE kernel that
    // keeps up with it: latency <= max(L_MSA, L_MoE).
    const MoeCandidateTable* moe_table = nullptr;
};

struct FitnessEval {
    double score = 0.0;
    bool feasible = false;
    Cycles l_msa = 0;
    ResourceReport resources;   // MSA block plus the reserved MoE kernel
    LinearKernelParams moe;     // reserved MoE kernel
    std::vector<std::string> violated;
};

inline FitnessEval evaluate_fitness(const HardwareParams& hp, const FitnessContext& ctx) {
    FitnessEval ev;
    ev.l_msa = latency_msa(hp, *ctx.cfg, ctx.timing);
    if (ctx.moe_table) {
        const Cycles bound = std::max(ev.l_msa, ctx.l_moe);
        ev.moe = binary_search_moe(bound, *ctx.moe_table);
        ev.resources = design_resources(hp, ev.moe, *ctx.cfg, *ctx.pf);
    } else {
        ev.resources = resources_total(hp, *ctx.cfg, *ctx.pf);
    }
    const auto verdict = check_budget(ev.resources, *ctx.pf);
    ev.feasible = verdict.feasible;
    ev.violated = verdict.violated;
    ev.score = ev.feasible && ev.l_msa > 0
                   ? static_cast<double>(ctx.l_moe) / static_cast<double>(ev.l_msa)
                   : 0.0;
    return ev;
}

// L_MoE / L_MSA(candidate); 0 for candidates over budget.
inline double fitness(const HardwareParams& hp, Cycles l_moe, const ModelConfig& cfg,
                      const PlatformProfile& pf, const LinearTimingOptions& timing = {}) {
    FitnessContext ctx{&cfg, &pf, timing, l_moe, nullptr};
    return evaluate_fitness(hp, ctx).score;
}

// ---------------------------------------------------------------------------
// GA over the MSA genome

struct GaOutcome {
    HardwareParams params;
    FitnessEval eval;
    std::size_t generations_run = 0;
    bool early_stopped = false;
    std::vector<GenerationRecord> trace;
};

namespace detail {

// Genome as indices into the domain lists of [T_a, N_a, T_in, T_out, N_L].
using Genome = std::array<std::uint32_t, 5>;

inline HardwareParams decode(const Genome& g, std::size_t num, const SearchDomain& d) {
    return {num, d.tile_a[g[0]], d.pes_a[g[1]], d.tile_in[g[2]], d.tile_out[g[3]], d.cus[g[4]]};
}

inline std::array<std::size_t, 5> field_sizes(const SearchDomain& d) {
    return {d.tile_a.size(), d.pes_a.size(), d.tile_in.size(), d.tile_out.size(), d.cus.size()};
}

inline std::optional<Genome> encode(const HardwareParams& hp, const SearchDomain& d) {
    auto idx = [](const std::vector<std::size_t>& v, std::size_t x) -> std::optional<std::uint32_t> {
        const auto it = std::find(v.begin(), v.end(), x);
        if (it == v.end()) return std::nullopt;
        return static_cast<std::uint32_t>(it - v.begin());
    };
    const auto a = idx(d.tile_a, hp.tile_a), b = idx(d.pes_a, hp.pes_a), c = idx(d.tile_in, hp.tile_in),
               e = idx(d.tile_out, hp.tile_out), f = idx(d.cus, hp.cus);
    if (!a || !b || !c || !e || !f) return std::nullopt;
    return Genome{*a, *b, *c, *e, *f};
}

// Higher fitness first, then lower L_MSA, then fewer DSPs.
inline bool better(const FitnessEval& x, const FitnessEval& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.feasible && y.feasible && x.l_msa != y.l_msa) return x.l_msa < y.l_msa;
    return x.resources.dsp_total_used < y.resources.dsp_total_used;
}

// How far an infeasible candidate is over budget, relative to the budget.
inline double overflow(const FitnessEval& ev, const PlatformProfile& pf) {
    const double d = std::max(0.0, static_cast<double>(ev.resources.dsp_total_used) - pf.dsp_total) / pf.dsp_total;
    const double b = std::max(0.0, static_cast<double>(ev.resources.bram_total_used) - pf.bram_total) / pf.bram_total;
    return d + b;
}

}  // namespace detail

// Seeded GA with tournament selection, one-point crossover over the genome
// fields, per-field resampling mutation and one elite. Stops after the first
// generation containing an individual with fitness >= 1. `seeds` are placed
// at the front of the initial population.
inline GaOutcome ga_search_msa(const FitnessContext& ctx, const GaConfig& ga, std::size_t num,
                               const SearchDomain& domain, std::span<const HardwareParams> seeds = {}) {
    ga.validate();
    domain.validate();
    using detail::Genome;
    std::mt19937_64 rng(ga.seed);
    const auto sizes = detail::field_sizes(domain);
    std::map<Genome, FitnessEval> cache;
    auto eval = [&](const Genome& g) -> const FitnessEval& {
        auto it = cache.find(g);
        if (it == cache.end()) it = cache.emplace(g, evaluate_fitness(detail::decode(g, num, domain), ctx)).first;
        return it->second;
    };
    auto random_genome = [&] {
        Genome g{};
        for (std::size_t f = 0; f < g.size(); ++f) g[f] = static_cast<std::uint32_t>(uniform_index(rng, sizes[f]));
        return g;
    };

    std::vector<Genome> pop;
    for (const auto& s : seeds) {
        if (pop.size() == ga.population_size) break;
        if (const auto g = detail::encode(s, domain)) pop.push_back(*g);
        else throw DomainError("ga: seed individual lies outside the search domain");
    }
    while (pop.size() < ga.population_size) pop.push_back(random_genome());

    GaOutcome out;
    std::optional<Genome> best;
    std::optional<Genome> least_infeasible;
    for (std::size_t gen = 0; gen < ga.generations; ++gen) {
        std::size_t gen_best = 0;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            const auto& ev = eval(pop[i]);
            if (detail::better(ev, eval(pop[gen_best]))) gen_best = i;
            if (!ev.feasible &&
                (!least_infeasible || detail::overflow(ev, *ctx.pf) < detail::overflow(eval(*least_infeasible), *ctx.pf)))
                least_infeasible = pop[i];
        }
        const auto& gb = eval(pop[gen_best]);
        if (gb.feasible && (!best || detail::better(gb, eval(*best)))) best = pop[gen_best];
        out.trace.push_back({gen, gb.score, gb.l_msa, gb.resources.dsp_total_used, gb.resources.bram_total_used});
        out.generations_run = gen + 1;
        if (gb.feasible && gb.score >= 1.0) {
            out.early_stopped = true;
            break;
        }
        if (gen + 1 == ga.generations) break;

        auto tournament = [&]() -> const Genome& {
            std::size_t w = uniform_index(rng, pop.size());
            for (std::size_t t = 1; t < ga.tournament_size; ++t) {
                const std::size_t c = uniform_index(rng, pop.size());
                if (detail::better(eval(pop[c]), eval(pop[w]))) w = c;
            }
            return pop[w];
        };
        std::vector<Genome> next;
        next.reserve(pop.size());
        next.push_back(pop[gen_best]);
        while (next.size() < pop.size()) {
            Genome a = tournament();
            Genome b = tournament();
            if (uniform_unit(rng) < ga.crossover_rate) {
                const std::size_t cut = 1 + uniform_index(rng, a.size() - 1);
                for (std::size_t f = cut; f < a.size(); ++f) std::swap(a[f], b[f]);
            }
            for (Genome* child : {&a, &b})
                for (std::size_t f = 0; f < child->size(); ++f)
                    if (uniform_unit(rng) < ga.mutation_rate)
                        (*child)[f] = static_cast<std::uint32_t>(uniform_index(rng, sizes[f]));
            next.push_back(a);
            if (next.size() < pop.size()) next.push_back(b);
        }
        pop = std::move(next);
    }

    if (!best) {
        std::string binding = "dsp";
        std::ostringstream msg;
        msg << "no feasible MSA configuration for num=" << num;
        if (least_infeasible) {
            const auto& ev = eval(*least_infeasible);
            if (!ev.violated.empty()) binding = ev.violated.front();
            const auto hp = detail::decode(*least_infeasible, num, domain);
            msg << "; closest candidate T_a=" << hp.tile_a << " N_a=" << hp.pes_a << " T_in=" << hp.tile_in
                << " T_out=" << hp.tile_out << " N_L=" << hp.cus << " uses dsp=" << ev.resources.dsp_total_used
                << " bram=" << ev.resources.bram_total_used;
        }
        throw SearchError(SearchError::Kind::Infeasible, binding, msg.str());
    }
    out.params = detail::decode(*best, num, domain);
    out.eval = eval(*best);
    return out;
}

// ---------------------------------------------------------------------------
// Stack latency of a full design

struct DesignLatency {
    LatencyReport report;
    Timeline timeline;
};

inline DesignLatency design_latency(const ModelConfig& cfg, const HardwareParams& hp,
                                    const LinearKernelParams& moe, const RoutingTable& routing,
                                    const PlatformProfile& pf, const LinearTimingOptions& timing = {}) {
    DesignLatency d;
    auto& r = d.report;
    r.clock_mhz = pf.clock_mhz;
    r.cycles_attn = latency_attention(hp, cfg);
    r.cycles_msa = latency_msa(hp, cfg, timing);
    const Cycles l_moe = cfg.moe_layer_count() > 0 ? latency_moe(cfg, routing, moe, timing) : 0;
    const Cycles l_dense = cfg.dense_layer_count() > 0 ? latency_dense_ffn(cfg, moe, timing) : 0;
    r.cycles_moe = latency_ffn_block(cfg, routing, moe, timing);
    r.cycles_non_encoder = cfg.non_encoder_cycles;
    PipelineSpec spec{cfg.layers, r.cycles_msa, r.cycles_moe, cfg.non_encoder_cycles,
                      ffn_latencies(cfg, l_moe, l_dense)};
    auto pipe = simulate_layer_pipeline(spec);
    r.cycles_total = pipe.total;
    d.timeline = std::move(pipe.timeline);
    return d;
}

// ---------------------------------------------------------------------------
// Full search

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline SearchResult has_search(const PlatformProfile& pf, const ModelConfig& cfg, const RoutingTable& routing,
                               const GaConfig& ga, const SearchDomain& domain,
                               const LinearTimingOptions& timing = {}) {
    pf.validate();
    cfg.validate();
    ga.validate();
    domain.validate();
    if (cfg.moe_layer_count() > 0) {
        routing.validate();
        if (routing.token_count() != cfg.patches || routing.experts != cfg.experts)
            throw DomainError("routing table does not match the model (patches/experts)");
    }

    SearchResult res;
    res.no_moe = cfg.moe_layer_count() == 0;
    auto log = [&](const std::string& s) { res.stage_log.push_back(s); };

    const MoeCandidateTable table(domain, cfg, routing, pf, timing);
    if (table.empty()) {
        log("moe-part1: failed, no linear kernel configuration fits the budget (" + table.binding() + ")");
        throw SearchError(SearchError::Kind::Infeasible, table.binding(),
                          "no MoE kernel configuration fits the platform " + table.binding() + " budget");
    }
    const MoeCandidate& part1 = table.best();
    res.moe_part1_latency = part1.latency;
    {
        std::ostringstream s;
        s << "moe-part1: L_MoE=" << part1.latency << " with T_in=" << part1.params.tile_in
          << " T_out=" << part1.params.tile_out << " N_L=" << part1.params.cus << " dsp=" << part1.dsp
          << (res.no_moe ? " (no MoE layer: dense feed-forward bound)" : "");
        log(s.str());
    }

    const FitnessContext ctx{&cfg, &pf, timing, part1.latency, &table};
    std::optional<SearchResult> best;
    std::string last_binding = "dsp";
    std::string last_error;
    for (std::size_t num : domain.num) {
        GaConfig g = ga;
        g.seed = mix_seed(ga.seed, num);
        GaOutcome ga_out;
        try {
            ga_out = ga_search_msa(ctx, g, num, domain);
        } catch (const SearchError& e) {
            last_binding = e.binding();
            last_error = e.what();
            log("msa: num=" + std::to_string(num) + " infeasible (" + e.binding() + ")");
            continue;
        }
        const Cycles bound = std::max(ga_out.eval.l_msa, part1.latency);
        const LinearKernelParams moe = binary_search_moe(bound, table);

        SearchResult cand;
        cand.params = ga_out.params;
        cand.moe = moe;
        auto dl = design_latency(cfg, cand.params, moe, routing, pf, timing);
        cand.latency = dl.report;
        cand.resources = design_resources(cand.params, moe, cfg, pf);
        cand.fit_score = static_cast<double>(part1.latency) / static_cast<double>(cand.latency.cycles_msa);
        cand.trace = ga_out.trace;
        if (!check_budget(cand.resources, pf).feasible)
            throw SearchError(SearchError::Kind::Infeasible, "dsp", "internal: final design exceeds budget");
        std::ostringstream s;
        s << "msa: num=" << num << " generations=" << ga_out.generations_run
          << (ga_out.early_stopped ? " early-stop(fit>=1)" : " exhausted") << " L_MSA=" << cand.latency.cycles_msa
          << " fit=" << cand.fit_score << "; moe-part2: bound=" << bound << " T_in=" << moe.tile_in
          << " T_out=" << moe.tile_out << " N_L=" << moe.cus << "; total=" << cand.latency.cycles_total;
        log(s.str());
        if (!best || cand.latency.cycles_total < best->latency.cycles_total ||
            (cand.latency.cycles_total == best->latency.cycles_total &&
             cand.resources.dsp_total_used < best->resources.dsp_total_used))
            best = std::move(cand);
    }
    if (!best) {
        log("msa: failed for every num");
        throw SearchError(SearchError::Kind::Infeasible, last_binding,
                          last_error.empty() ? "no feasible design" : last_error);
    }
    best->stage_log = std::move(res.stage_log);
    best->no_moe = res.no_moe;
    best->moe_part1_latency = res.moe_part1_latency;
    if (best->no_moe) best->fit_score = std::numeric_limits<double>::infinity();
    std::ostringstream s;
    s << "done: num=" << best->params.num << " total=" << best->latency.cycles_total
      << " (num sweep keeps the lowest stack latency)";
    best->stage_log.push_back(s.str());
    return *best;
}

// ---------------------------------------------------------------------------
// Exhaustive joint search (oracle)

struct ExhaustiveResult {
    HardwareParams params;
    LinearKernelParams moe;
    Cycles total = 0;
    Cycles l_msa = 0;
    Cycles l_moe = 0;
    ResourceReport resources;
    std::uint64_t evaluated = 0;
    std::uint64_t feasible = 0;
};

inline constexpr std::uint64_t kExhaustiveCap = 1'000'000;

inline ExhaustiveResult exhaustive_search(const PlatformProfile& pf, const ModelConfig& cfg,
                                          const RoutingTable& routing, const SearchDomain& domain,
                                          const LinearTimingOptions& timing = {},
                                          std::uint64_t cap = kExhaustiveCap) {
    domain.validate();
    if (domain.joint_size() > cap)
        throw SearchError(SearchError::Kind::Refused, "",
                          "exhaustive search refused: joint domain of " + std::to_string(domain.joint_size()) +
                              " points exceeds the cap of " + std::to_string(cap));
    struct MoePoint {
        LinearKernelParams lp;
        Cycles l_moe, l_dense, block;
        std::uint64_t dsp, bram;
    };
    std::vector<MoePoint> moes;
    for (std::size_t a : domain.tile_in)
        for (std::size_t b : domain.tile_out)
            for (std::size_t c : domain.cus) {
                const LinearKernelParams lp{a, b, c};
                moes.push_back({lp, cfg.moe_layer_count() ? latency_moe(cfg, routing, lp, timing) : 0,
                                cfg.dense_layer_count() ? latency_dense_ffn(cfg, lp, timing) : 0,
                                latency_ffn_block(cfg, routing, lp, timing),
                                dsp_linear(lp, cfg.bitwidth, pf.psi_32), bram_linear(lp, cfg, pf.bwidth, pf.bdepth)});
            }

    std::optional<ExhaustiveResult> best;
    ExhaustiveResult tally;
    for (std::size_t num : domain.num)
        for (std::size_t ta : domain.tile_a)
            for (std::size_t na : domain.pes_a)
                for (std::size_t ti : domain.tile_in)
                    for (std::size_t to : domain.tile_out)
                        for (std::size_t nl : domain.cus) {
                            const HardwareParams hp{num, ta, na, ti, to, nl};
                            const auto msa_res = resources_total(hp, cfg, pf);
                            const Cycles l_msa = latency_msa(hp, cfg, timing);
                            for (const auto& m : moes) {
                                ++tally.evaluated;
                                if (msa_res.dsp_total_used + m.dsp > pf.dsp_total ||
                                    msa_res.bram_total_used + m.bram > pf.bram_total)
                                    continue;
                                ++tally.feasible;
                                // Round-barrier schedule, closed form per layer.
                                Cycles total = cfg.non_encoder_cycles + l_msa;
                                for (std::size_t i = 0; i < cfg.layers; ++i) {
                                    const Cycles f = cfg.is_moe_layer(i) ? m.l_moe : m.l_dense;
                                    total += (i + 1 < cfg.layers) ? std::max(l_msa, f) : f;
                                }
                                const std::uint64_t dsp = msa_res.dsp_total_used + m.dsp;
                                if (!best || total < best->total ||
                                    (total == best->total && dsp < best->resources.dsp_total_used)) {
                                    ExhaustiveResult r;
                                    r.params = hp;
                                    r.moe = m.lp;
                                    r.total = total;
                                    r.l_msa = l_msa;
                                    r.l_moe = m.block;
                                    r.resources = design_resources(hp, m.lp, cfg, pf);
                                    best = r;
                                }
                            }
                        }
    if (!best) throw SearchError(SearchError::Kind::Infeasible, "dsp", "exhaustive search: no feasible design");
    best->evaluated = tally.evaluated;
    best->feasible = tally.feasible;
    return *best;
}

}  // namespace ubimoe
