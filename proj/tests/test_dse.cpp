// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <limits>

#include "ubimoe/dse.hpp"
#include "ubimoe/verify.hpp"

using namespace ubimoe;

namespace {

ModelConfig small_model() {
    ModelConfig c;
    c.layers = 4, c.patches = 16, c.feat_dim = 32, c.hidden_dim = 64, c.heads = 2;
    c.experts = 4, c.top_k = 2, c.bitwidth = 16, c.non_encoder_cycles = 100;
    return c;
}

PlatformProfile platform(std::uint64_t dsp, std::uint64_t bram = 1000) {
    PlatformProfile p;
    p.name = "test";
    p.dsp_total = dsp;
    p.bram_total = bram;
    p.clock_mhz = 200;
    return p;
}

SearchDomain point_domain(std::size_t num, std::size_t ta, std::size_t na, std::size_t ti, std::size_t to,
                          std::size_t nl) {
    SearchDomain d;
    d.num = {num}, d.tile_a = {ta}, d.pes_a = {na}, d.tile_in = {ti}, d.tile_out = {to}, d.cus = {nl};
    return d;
}

// Independent brute-force MoE minimum: lowest block latency among points
// fitting DSP and BRAM alone, ties to fewer DSPs.
std::pair<Cycles, std::uint64_t> brute_moe(const SearchDomain& d, const ModelConfig& c, const RoutingTable& rt,
                                           const PlatformProfile& pf) {
    Cycles best = std::numeric_limits<Cycles>::max();
    std::uint64_t dsp = 0;
    for (auto a : d.tile_in)
        for (auto b : d.tile_out)
            for (auto n : d.cus) {
                const std::uint64_t macs = a * b * n;  // psi(16) = 1
                const std::uint64_t bram = n * ((std::max(c.feat_dim, c.hidden_dim) + a * b + 1023) / 1024);
                if (macs > pf.dsp_total || bram > pf.bram_total) continue;
                Cycles lat = 0;
                std::vector<std::size_t> load(c.experts);
                for (const auto& tok : rt.tokens)
                    for (const auto& r : tok) ++load[r.expert];
                auto lin = [&](std::size_t t, std::size_t i, std::size_t o) {
                    return ((t + n - 1) / n) * ((i + a - 1) / a) * ((o + b - 1) / b);
                };
                Cycles moe = 0;
                for (auto t : load)
                    if (t) moe += lin(t, c.feat_dim, c.hidden_dim) + lin(t, c.hidden_dim, c.feat_dim) +
                                  (2 * c.feat_dim * c.hidden_dim + a * b - 1) / (a * b);
                const Cycles dense = lin(c.patches, c.feat_dim, c.hidden_dim) + lin(c.patches, c.hidden_dim, c.feat_dim) +
                                     (2 * c.feat_dim * c.hidden_dim + a * b - 1) / (a * b);
                lat = std::max(moe, dense);
                if (lat < best || (lat == best && macs < dsp)) best = lat, dsp = macs;
            }
    return {best, dsp};
}

}  // namespace

TEST_CASE("search domain and GA config validation", "[dse]") {
    SearchDomain d;
    CHECK_NOTHROW(d.validate());
    d.tile_a = {2, 2};
    CHECK_THROWS_AS(d.validate(), DomainError);
    d.tile_a = {};
    CHECK_THROWS_AS(d.validate(), DomainError);
    GaConfig g;
    g.population_size = 1;
    CHECK_THROWS_AS(g.validate(), DomainError);
    g = {};
    g.mutation_rate = 1.5;
    CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("best MoE latency", "[dse][moe]") {
    const auto c = small_model();
    const auto rt = RoutingTable::uniform_random(16, 4, 2, 1);
    const auto one = point_domain(0, 1, 1, 4, 2, 3);
    const auto p1 = best_moe_latency(platform(100), c, rt, one);
    CHECK(p1.params == LinearKernelParams{4, 2, 3});

    SearchDomain big;
    const auto unbounded = best_moe_latency(platform(1'000'000, 1'000'000), c, rt, big);
    CHECK(unbounded.params == LinearKernelParams{8, 8, 8});

    SearchDomain d;
    d.tile_in = {1, 2, 3, 4, 6}, d.tile_out = {1, 2, 4, 5, 8}, d.cus = {1, 2, 3, 4};
    for (std::uint64_t budget : {8u, 24u, 50u, 97u, 400u}) {
        const auto got = best_moe_latency(platform(budget), c, rt, d);
        const auto [lat, dsp] = brute_moe(d, c, rt, platform(budget));
        CHECK(got.latency == lat);
        CHECK(dsp_linear(got.params, 16) == dsp);
    }
    CHECK_THROWS_AS(best_moe_latency(platform(1), c, rt, point_domain(0, 1, 1, 2, 2, 1)), SearchError);
}

TEST_CASE("fitness", "[dse]") {
    ModelConfig c;
    c.patches = 4, c.feat_dim = 8, c.hidden_dim = 8;
    const HardwareParams hp{4, 8, 4, 8, 8, 4};
    const Cycles l = latency_msa(hp, c);
    const auto pf = platform(100000);
    CHECK(fitness(hp, l, c, pf) == 1.0);
    CHECK(fitness(hp, l / 2, c, pf) == Catch::Approx(0.5).margin(1.0 / l));
    CHECK(fitness(hp, l, c, platform(1)) == 0.0);
}

TEST_CASE("GA basics", "[dse][ga]") {
    const auto c = small_model();
    const auto pf = platform(2000);
    GaConfig ga;
    ga.population_size = 8;
    ga.generations = 5;

    SECTION("single-point domain returns the point in generation 0") {
        const auto d = point_domain(1, 4, 2, 4, 4, 2);
        const FitnessContext ctx{&c, &pf, {}, 1, nullptr};
        const auto out = ga_search_msa(ctx, ga, 1, d);
        CHECK(out.params == HardwareParams{1, 4, 2, 4, 4, 2});
        CHECK(out.trace.front().generation == 0);
    }
    SECTION("planted fit >= 1 individual stops in generation 0") {
        SearchDomain d;
        const HardwareParams planted{2, 16, 8, 8, 8, 8};
        const FitnessContext ctx{&c, &pf, {}, latency_msa(planted, c), nullptr};
        ga.generations = 50;
        const std::vector<HardwareParams> seeds{planted};
        const auto out = ga_search_msa(ctx, ga, 2, d, seeds);
        CHECK(out.early_stopped);
        CHECK(out.generations_run == 1);
        CHECK(out.trace.size() == 1);
        CHECK(out.eval.score >= 1.0);
    }
    SECTION("no feasible individual") {
        const auto tiny = platform(3);
        const FitnessContext ctx{&c, &tiny, {}, 1, nullptr};
        try {
            ga_search_msa(ctx, ga, 0, SearchDomain{});
            FAIL("expected a search error");
        } catch (const SearchError& e) {
            CHECK(e.kind() == SearchError::Kind::Infeasible);
            CHECK(e.binding() == "dsp");
            CHECK(std::string(e.what()).find("closest candidate") != std::string::npos);
        }
    }
    SECTION("seed outside the domain") {
        const FitnessContext ctx{&c, &pf, {}, 1, nullptr};
        const std::vector<HardwareParams> seeds{{0, 3, 1, 1, 1, 1}};
        CHECK_THROWS_AS(ga_search_msa(ctx, ga, 0, SearchDomain{}, seeds), DomainError);
    }
}

TEST_CASE("GA vs exhaustive MSA optimum, seeds 1-3", "[dse][ga]") {
    const auto c = small_model();
    const auto pf = platform(300, 400);
    SearchDomain d;
    d.tile_a = {1, 2, 4, 8}, d.pes_a = {1, 2, 4, 8}, d.tile_in = {1, 2, 4, 8}, d.tile_out = {1, 2, 4}, d.cus = {1, 2, 4};
    // l_moe = 1: fitness never reaches 1, so the GA runs its full budget.
    const FitnessContext ctx{&c, &pf, {}, 1, nullptr};
    int within = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        GaConfig ga;
        ga.population_size = 32;
        ga.generations = 60;
        ga.seed = seed;
        const auto got = ga_search_msa(ctx, ga, 2, d);
        const auto opt = verify::exhaustive_msa(ctx, 2, d);
        REQUIRE(opt.found);
        CHECK(got.eval.l_msa >= opt.l_msa);
        CHECK(got.eval.feasible);
        within += static_cast<double>(got.eval.l_msa) <= 1.05 * static_cast<double>(opt.l_msa);
        // Early-stop rule never fired: every generation is below 1.
        for (const auto& g : got.trace) CHECK(g.best_fitness < 1.0);
    }
    CHECK(within >= 2);
}

TEST_CASE("binary search over the MoE table", "[dse][moe]") {
    const auto c = small_model();
    const auto rt = RoutingTable::uniform_random(16, 4, 2, 8);
    const auto pf = platform(400);
    SearchDomain d;
    d.tile_in = {1, 2, 3, 4, 8}, d.tile_out = {1, 2, 4, 6, 8}, d.cus = {1, 2, 3, 4, 8};
    const MoeCandidateTable t(d, c, rt, pf);
    REQUIRE_FALSE(t.empty());

    // +inf bound: cheapest point overall.
    const auto inf = binary_search_moe(std::numeric_limits<Cycles>::max(), t);
    std::uint64_t min_dsp = UINT64_MAX;
    for (const auto& e : t.entries()) min_dsp = std::min(min_dsp, e.dsp);
    CHECK(dsp_linear(inf, 16) == min_dsp);

    const auto best = t.best();
    const auto at_best = binary_search_moe(best.latency, t);
    CHECK(latency_ffn_block(c, rt, at_best) == best.latency);

    for (const auto& e : t.entries())
        for (Cycles b : {e.latency - 1, e.latency, e.latency + 1}) {
            const auto i = t.cheapest_within(b);
            CHECK(i == t.cheapest_within_scan(b));
            if (!i) continue;
            const auto& got = t.entries()[*i];
            CHECK(got.latency <= b);
            // No strictly cheaper entry meets the bound.
            for (const auto& o : t.entries())
                if (o.latency <= b) CHECK(o.dsp >= got.dsp);
        }
    // Below every latency: falls back to the part-1 optimum.
    CHECK(binary_search_moe(0, t) == best.params);
}

TEST_CASE("has_search end to end", "[dse][has]") {
    const auto c = small_model();
    const auto rt = RoutingTable::uniform_random(16, 4, 2, 11);
    const auto pf = platform(400, 400);
    SearchDomain d;
    d.num = {0, 2, 4}, d.tile_a = {2, 4, 8}, d.pes_a = {1, 2, 4}, d.tile_in = {2, 4}, d.tile_out = {2, 4}, d.cus = {1, 2, 4};
    REQUIRE(d.joint_size() <= 4096);
    GaConfig ga;
    ga.population_size = 32;
    ga.generations = 60;

    const auto r = has_search(pf, c, rt, ga, d);
    const auto ex = exhaustive_search(pf, c, rt, d);
    CHECK(r.latency.cycles_total >= ex.total);
    CHECK(static_cast<double>(r.latency.cycles_total) <= 1.05 * static_cast<double>(ex.total));
    CHECK(check_budget(r.resources, pf).feasible);
    CHECK(r.fit_score == Catch::Approx(static_cast<double>(r.moe_part1_latency) / r.latency.cycles_msa));
    // Part 2 never exceeds its bound. (With fit >= 1 the part-1 optimum is
    // already >= L_MSA, so L_MoE <= L_MSA alone cannot hold.)
    CHECK(r.latency.cycles_moe <= std::max(r.latency.cycles_msa, r.moe_part1_latency));
    if (r.fit_score >= 1.0) CHECK(r.latency.cycles_moe == r.moe_part1_latency);
    CHECK_FALSE(r.stage_log.empty());
    CHECK(r.stage_log.back().rfind("done:", 0) == 0);

    // Determinism.
    const auto again = has_search(pf, c, rt, ga, d);
    CHECK(again.params == r.params);
    CHECK(again.moe == r.moe);
    CHECK(again.latency.cycles_total == r.latency.cycles_total);
    CHECK(again.stage_log == r.stage_log);

    // Early stop: no later generation after the first fit >= 1 one.
    for (std::size_t i = 0; i + 1 < r.trace.size(); ++i) CHECK(r.trace[i].best_fitness < 1.0);
}

TEST_CASE("has_search degenerate and infeasible cases", "[dse][has]") {
    GaConfig ga;
    ga.population_size = 8;
    ga.generations = 10;
    SearchDomain d;
    d.num = {0, 1}, d.tile_a = {2, 4}, d.pes_a = {1, 2}, d.tile_in = {2, 4}, d.tile_out = {2}, d.cus = {1, 2};

    auto c = small_model();
    c.layers = 1;
    c.moe_alternate = false;
    const auto r = has_search(platform(500), c, RoutingTable{}, ga, d);
    CHECK(r.no_moe);
    CHECK(std::isinf(r.fit_score));

    try {
        has_search(platform(2), small_model(), RoutingTable::uniform_random(16, 4, 2, 1), ga, d);
        FAIL("expected a search error");
    } catch (const SearchError& e) {
        CHECK(e.kind() == SearchError::Kind::Infeasible);
        CHECK(e.binding() == "dsp");
    }
    CHECK_THROWS_AS(has_search(platform(500), small_model(), RoutingTable::uniform_random(8, 4, 2, 1), ga, d),
                    DomainError);
}

TEST_CASE("exhaustive search", "[dse][oracle]") {
    const auto c = small_model();
    const auto rt = RoutingTable::uniform_random(16, 4, 2, 2);
    const auto pf = platform(1000);
    const auto one = point_domain(1, 4, 2, 4, 2, 2);
    const auto ex = exhaustive_search(pf, c, rt, one);
    CHECK(ex.params == HardwareParams{1, 4, 2, 4, 2, 2});
    CHECK(ex.moe == LinearKernelParams{4, 2, 2});
    CHECK(ex.total == design_latency(c, ex.params, ex.moe, rt, pf).report.cycles_total);

    // MoE-only domain: the MSA side is fixed, so the FFN block is the part-1 optimum
    // whenever it dominates.
    SearchDomain moe_only = one;
    moe_only.tile_in = {1, 2, 4}, moe_only.tile_out = {1, 2, 4}, moe_only.cus = {1, 2, 4};
    const auto ex2 = exhaustive_search(platform(100000, 100000), c, rt, moe_only);
    const auto p1 = best_moe_latency(platform(100000, 100000), c, rt, moe_only);
    CHECK(ex2.l_moe == p1.latency);

    SearchDomain huge;
    huge.tile_a.resize(40);
    std::iota(huge.tile_a.begin(), huge.tile_a.end(), std::size_t{1});
    huge.pes_a = huge.tile_a;
    CHECK(huge.joint_size() > kExhaustiveCap);
    try {
        exhaustive_search(pf, c, rt, huge);
        FAIL("expected refusal");
    } catch (const SearchError& e) {
        CHECK(e.kind() == SearchError::Kind::Refused);
    }
}
