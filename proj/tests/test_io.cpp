// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "ubimoe/io.hpp"
#include "ubimoe/report.hpp"

using namespace ubimoe;
using nlohmann::json;

namespace {

std::string parse_error_field(auto&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.field();
    }
    return "<no error>";
}

json platform_json() {
    return json::parse(R"({"name": "p", "dsp_total": 100, "bram_total": 50, "clock_mhz": 250})");
}

json model_json() {
    return json::parse(R"({"layers": 2, "patches": 8, "feat_dim": 16, "hidden_dim": 32, "heads": 2,
                           "experts": 4, "top_k": 2, "bitwidth": 16, "moe_alternate": true})");
}

}  // namespace

TEST_CASE("platform parsing", "[io]") {
    const auto p = io::platform_from_json(platform_json());
    CHECK(p.name == "p");
    CHECK(p.dsp_total == 100);
    CHECK(p.clock_mhz == 250.0);
    CHECK(p.bwidth == 36);
    CHECK(p.d_exp == 5.0);
    CHECK(io::platform_from_json(io::to_json(p)).bram_total == 50);

    auto j = platform_json();
    j["dsp_total"] = -4;
    CHECK(parse_error_field([&] { io::platform_from_json(j); }) == "dsp_total");
    j = platform_json();
    j.erase("bram_total");
    CHECK(parse_error_field([&] { io::platform_from_json(j); }) == "bram_total");
    j = platform_json();
    j["clock_mhz"] = "fast";
    CHECK(parse_error_field([&] { io::platform_from_json(j); }) == "clock_mhz");
    j = platform_json();
    j["b_exp"] = -1.0;
    CHECK(parse_error_field([&] { io::platform_from_json(j); }) == "b_exp");
    CHECK(parse_error_field([&] { io::parse_json("{ not json", "platform"); }) == "platform");
}

TEST_CASE("model parsing", "[io]") {
    const auto c = io::model_from_json(model_json());
    CHECK(c.layers == 2);
    CHECK(c.moe_alternate);
    CHECK(io::model_from_json(io::to_json(c)).hidden_dim == 32);

    auto j = model_json();
    j["heads"] = 3;
    CHECK(parse_error_field([&] { io::model_from_json(j); }) == "heads");
    j = model_json();
    j["top_k"] = 5;
    CHECK(parse_error_field([&] { io::model_from_json(j); }) == "top_k");
    j = model_json();
    j["bitwidth"] = 64;
    CHECK(parse_error_field([&] { io::model_from_json(j); }) == "bitwidth");
    j = model_json();
    j["moe_alternate"] = 1;
    CHECK(parse_error_field([&] { io::model_from_json(j); }) == "moe_alternate");
    j = model_json();
    j["patches"] = 2.5;
    CHECK(parse_error_field([&] { io::model_from_json(j); }) == "patches");
}

TEST_CASE("search config parsing", "[io]") {
    auto s = io::search_from_json(json::parse(R"({"seed": 9, "domain": {"cus": [1, 3]}, "ga": {"generations": 7}})"));
    CHECK(s.seed == 9);
    CHECK(s.ga.seed == 9);
    CHECK(s.ga.generations == 7);
    CHECK(s.domain.cus == std::vector<std::size_t>{1, 3});
    CHECK(s.domain.tile_a == SearchDomain{}.tile_a);
    CHECK(parse_error_field([] { io::search_from_json(json::parse(R"({"domain": {"cus": [3, 1]}})")); }) == "domain");
    CHECK(parse_error_field([] { io::search_from_json(json::parse(R"({"domain": {"cus": [-1]}})")); }) ==
          "domain.cus");
    CHECK(parse_error_field([] { io::search_from_json(json::parse(R"({"ga": {"mutation_rate": 2}})")); }) == "ga");
    CHECK(parse_error_field([] { io::search_from_json(json::parse(R"({"ga": {"population_size": "x"}})")); }) ==
          "ga.population_size");
}

TEST_CASE("params parsing", "[io]") {
    const io::DesignParams p{{2, 4, 2, 4, 4, 2}, {8, 4, 2}};
    const auto back = io::params_from_json(io::to_json(p));
    CHECK(back.msa == p.msa);
    CHECK(back.moe == p.moe);
    json wrapped{{"params", io::to_json(p)}};
    CHECK(io::params_from_json(wrapped).moe == p.moe);
    auto j = io::to_json(p);
    j["msa"]["tile_a"] = 0;
    CHECK(parse_error_field([&] { io::params_from_json(j); }) == "msa.tile_a");
    j = io::to_json(p);
    j.erase("moe");
    CHECK(parse_error_field([&] { io::params_from_json(j); }) == "moe");
}

TEST_CASE("routing file round trip", "[io][routing]") {
    const auto rt = RoutingTable::uniform_random(12, 5, 3, 4);
    const auto text = io::write_routing(rt);
    const auto back = io::read_routing(text, 5);
    REQUIRE(back.token_count() == 12);
    for (std::size_t t = 0; t < 12; ++t)
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back.tokens[t][i].expert == rt.tokens[t][i].expert);
            CHECK(back.tokens[t][i].weight == rt.tokens[t][i].weight);
        }
    CHECK(io::write_routing(back) == text);

    const auto commented = io::read_routing("# header\n0 1:0.25 0:0.75\n\n1 2:1\n", 3);
    CHECK(commented.tokens[0][0].expert == 1);
    CHECK(commented.tokens[1][0].weight == 1.0);

    CHECK(parse_error_field([] { io::read_routing("1 0:1\n", 2); }) == "routing line 1");
    CHECK(parse_error_field([] { io::read_routing("0 0-1\n", 2); }) == "routing line 1");
    CHECK(parse_error_field([] { io::read_routing("0 0:0.5\n", 2); }) == "routing");
    CHECK(parse_error_field([] { io::read_routing("0 5:1\n", 2); }) == "routing");
    CHECK(parse_error_field([] { io::read_routing("0\n", 2); }) == "routing line 1");
}

TEST_CASE("trace CSV", "[io][report]") {
    CHECK(report::trace_csv(json::array()) == "generation,best_fitness,best_l_msa,dsp_used,bram_used\n");
    const json t = json::array({report::to_json(GenerationRecord{0, 0.5, 120, 30, 4}),
                                report::to_json(GenerationRecord{1, 1.25, 96, 40, 6})});
    CHECK(report::trace_csv(t) ==
          "generation,best_fitness,best_l_msa,dsp_used,bram_used\n0,0.5,120,30,4\n1,1.25,96,40,6\n");
}

TEST_CASE("search report schema", "[io][report]") {
    ModelConfig c = io::model_from_json(model_json());
    PlatformProfile pf = io::platform_from_json(platform_json());
    SearchResult r;
    r.params = {1, 2, 2, 2, 2, 1};
    r.moe = {2, 2, 1};
    r.latency = design_latency(c, r.params, r.moe, RoutingTable::uniform_random(8, 4, 2, 1), pf).report;
    r.resources = design_resources(r.params, r.moe, c, pf);
    r.fit_score = 0.75;
    r.trace = {{0, 0.5, 10, 20, 3}};
    report::RunManifest m;
    m.seed = 3;
    m.profile = pf.name;
    m.timestamp = "1970-01-01T00:00:00Z";
    const auto j = report::search_report(m, r, c, pf, {"synthetic", 3});
    CHECK_NOTHROW(report::validate_search_report(j));
    CHECK(j.at("throughput").at("gops").get<double>() ==
          Catch::Approx(throughput_gops(count_ops(c).total(), r.latency.cycles_total, pf.clock_mhz)));
    CHECK(j.at("ga_trace")[0].at("best_l_msa") == 10);

    auto broken = j;
    broken["latency"]["cycles"].erase("msa");
    CHECK(parse_error_field([&] { report::validate_search_report(broken); }) == "latency.cycles.msa");
    broken = j;
    broken["ga_trace"][0]["dsp_used"] = "many";
    CHECK(parse_error_field([&] { report::validate_search_report(broken); }) == "ga_trace[0].dsp_used");

    r.no_moe = true;
    r.fit_score = std::numeric_limits<double>::infinity();
    const auto nm = report::search_report(m, r, c, pf, {"synthetic", 3});
    CHECK(nm.at("fit_score") == "no-moe");
    CHECK_NOTHROW(report::validate_search_report(nm));

    const auto table = report::search_table(j);
    CHECK(table.find("fit_score") != std::string::npos);
    CHECK(table == report::search_table(j));
}
