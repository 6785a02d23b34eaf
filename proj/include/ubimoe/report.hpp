// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Machine-readable (JSON, CSV) and human-readable reports.

#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ubimoe/costmodel.hpp"
#include "ubimoe/dse.hpp"
#include "ubimoe/io.hpp"
#include "ubimoe/linear_model.hpp"
#include "ubimoe/simtime.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe::report {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kPipelineModel =
    "round-barrier double buffering: total = non_encoder + L_MSA + sum_{i<P-1} max(L_MSA, L_FFN_i) + L_FFN_{P-1}"
    " (conservative: MoE_i waits for the buffer swap, no finer-grained handoff)";

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::map<std::string, std::string> input_hashes;  // role -> sha256 hex
    std::uint64_t seed = 0;
    std::string profile;
    std::string timestamp;
    std::vector<std::string> stage_log_summary;
};

inline json to_json(const RunManifest& m) {
    return json{{"tool_version", m.tool_version}, {"input_hashes", m.input_hashes},
                {"seed", m.seed},                 {"profile", m.profile},
                {"timestamp", m.timestamp},       {"stage_log_summary", m.stage_log_summary}};
}

inline json to_json(const LatencyReport& l) {
    return json{{"cycles",
                 {{"attn", l.cycles_attn},
                  {"msa", l.cycles_msa},
                  {"moe", l.cycles_moe},
                  {"non_encoder", l.cycles_non_encoder},
                  {"total", l.cycles_total}}},
                {"clock_mhz", l.clock_mhz},
                {"ms", l.total_ms()}};
}

inline json to_json(const ResourceReport& r) {
    return json{{"dsp_attn", r.dsp_attn},       {"bram_attn", r.bram_attn},
                {"dsp_linear", r.dsp_linear},   {"bram_linear", r.bram_linear},
                {"dsp_moe", r.dsp_moe},         {"bram_moe", r.bram_moe},
                {"dsp_total_used", r.dsp_total_used}, {"bram_total_used", r.bram_total_used}};
}

inline json to_json(const BudgetVerdict& v) {
    return json{{"feasible", v.feasible},
                {"dsp_slack", v.dsp_slack},
                {"bram_slack", v.bram_slack},
                {"bandwidth", to_string(v.bandwidth)},
                {"violated", v.violated}};
}

inline json to_json(const GenerationRecord& g) {
    return json{{"generation", g.generation},
                {"best_fitness", g.best_fitness},
                {"best_l_msa", g.best_l_msa},
                {"dsp_used", g.dsp_used},
                {"bram_used", g.bram_used}};
}

inline json throughput_json(const ModelConfig& cfg, const LatencyReport& lat) {
    const auto ops = count_ops(cfg);
    return json{{"ops", ops.total()},
                {"gops", throughput_gops(ops.total(), lat.cycles_total, lat.clock_mhz)},
                {"formula", kOpCountFormula}};
}

inline json models_json() {
    return json{{"linear", kLinearModelFormulas}, {"msa", kMsaCompositionFormula}, {"pipeline", kPipelineModel}};
}

struct RoutingSource {
    std::string kind;  // "file" or "synthetic"
    std::uint64_t seed = 0;
};

inline json search_report(const RunManifest& manifest, const SearchResult& r, const ModelConfig& cfg,
                          const PlatformProfile& pf, const RoutingSource& routing) {
    json trace = json::array();
    for (const auto& g : r.trace) trace.push_back(to_json(g));
    json j;
    j["manifest"] = to_json(manifest);
    j["params"] = io::to_json(io::DesignParams{r.params, r.moe});
    j["latency"] = to_json(r.latency);
    j["resources"] = to_json(r.resources);
    j["budget"] = to_json(check_budget(r.resources, pf));
    if (r.no_moe || std::isinf(r.fit_score)) j["fit_score"] = "no-moe";
    else j["fit_score"] = r.fit_score;
    j["moe_part1_latency"] = r.moe_part1_latency;
    j["throughput"] = throughput_json(cfg, r.latency);
    j["models"] = models_json();
    j["routing"] = {{"source", routing.kind}, {"seed", routing.seed}};
    j["ga_trace"] = std::move(trace);
    j["stage_log"] = r.stage_log;
    return j;
}

// Checks the fields consumers depend on; throws ParseError naming the first
// missing or mistyped one.
inline void validate_search_report(const json& j) {
    auto need = [&](const json& obj, const std::string& key, const std::string& path, auto pred,
                    const char* type) -> const json& {
        if (!obj.is_object() || !obj.contains(key)) throw ParseError(path + key, "missing from report");
        if (!pred(obj.at(key))) throw ParseError(path + key, std::string("expected ") + type);
        return obj.at(key);
    };
    auto is_obj = [](const json& x) { return x.is_object(); };
    auto is_uint = [](const json& x) { return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0); };
    auto is_num = [](const json& x) { return x.is_number(); };
    auto is_arr = [](const json& x) { return x.is_array(); };
    auto is_str = [](const json& x) { return x.is_string(); };

    const auto& m = need(j, "manifest", "", is_obj, "object");
    need(m, "tool_version", "manifest.", is_str, "string");
    need(m, "input_hashes", "manifest.", is_obj, "object");
    need(m, "seed", "manifest.", is_uint, "integer");
    need(m, "profile", "manifest.", is_str, "string");
    need(m, "timestamp", "manifest.", is_str, "string");
    need(m, "stage_log_summary", "manifest.", is_arr, "array");
    io::params_from_json(need(j, "params", "", is_obj, "object"));
    const auto& lat = need(j, "latency", "", is_obj, "object");
    const auto& cyc = need(lat, "cycles", "latency.", is_obj, "object");
    for (const char* k : {"attn", "msa", "moe", "non_encoder", "total"}) need(cyc, k, "latency.cycles.", is_uint, "integer");
    need(lat, "ms", "latency.", is_num, "number");
    need(lat, "clock_mhz", "latency.", is_num, "number");
    const auto& res = need(j, "resources", "", is_obj, "object");
    for (const char* k : {"dsp_attn", "bram_attn", "dsp_linear", "bram_linear", "dsp_moe", "bram_moe",
                          "dsp_total_used", "bram_total_used"})
        need(res, k, "resources.", is_uint, "integer");
    need(j, "fit_score", "", [](const json& x) { return x.is_number() || x == "no-moe"; }, "number or \"no-moe\"");
    const auto& thr = need(j, "throughput", "", is_obj, "object");
    need(thr, "ops", "throughput.", is_uint, "integer");
    need(thr, "gops", "throughput.", is_num, "number");
    const auto& trace = need(j, "ga_trace", "", is_arr, "array");
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const std::string p = "ga_trace[" + std::to_string(i) + "].";
        need(trace[i], "generation", p, is_uint, "integer");
        need(trace[i], "best_fitness", p, is_num, "number");
        need(trace[i], "best_l_msa", p, is_uint, "integer");
        need(trace[i], "dsp_used", p, is_uint, "integer");
        need(trace[i], "bram_used", p, is_uint, "integer");
    }
    need(j, "stage_log", "", is_arr, "array");
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

// Plot data: one row per GA generation.
inline std::string trace_csv(const json& ga_trace) {
    std::ostringstream os;
    os << "generation,best_fitness,best_l_msa,dsp_used,bram_used\n";
    for (const auto& g : ga_trace)
        os << g.at("generation").get<std::uint64_t>() << ',' << format_double(g.at("best_fitness").get<double>())
           << ',' << g.at("best_l_msa").get<std::uint64_t>() << ',' << g.at("dsp_used").get<std::uint64_t>() << ','
           << g.at("bram_used").get<std::uint64_t>() << '\n';
    return os.str();
}

inline std::string search_table(const json& j) {
    validate_search_report(j);
    std::ostringstream os;
    const auto& p = j.at("params");
    const auto& lat = j.at("latency");
    const auto& cyc = lat.at("cycles");
    const auto& res = j.at("resources");
    auto row = [&](const std::string& k, const std::string& v) {
        os << "  " << std::left << std::setw(22) << k << v << '\n';
    };
    os << "UbiMoE-Sim search report (profile " << j.at("manifest").at("profile").get<std::string>()
       << ", seed " << j.at("manifest").at("seed").get<std::uint64_t>() << ")\n";
    os << "MSA block\n";
    for (const char* k : {"num", "tile_a", "pes_a", "tile_in", "tile_out", "cus"})
        row(k, std::to_string(p.at("msa").at(k).get<std::uint64_t>()));
    os << "MoE block\n";
    for (const char* k : {"tile_in", "tile_out", "cus"}) row(k, std::to_string(p.at("moe").at(k).get<std::uint64_t>()));
    os << "Latency (cycles)\n";
    for (const char* k : {"attn", "msa", "moe", "non_encoder", "total"})
        row(k, std::to_string(cyc.at(k).get<std::uint64_t>()));
    row("total_ms", format_double(lat.at("ms").get<double>()));
    os << "Resources\n";
    for (const char* k : {"dsp_attn", "bram_attn", "dsp_linear", "bram_linear", "dsp_moe", "bram_moe",
                          "dsp_total_used", "bram_total_used"})
        row(k, std::to_string(res.at(k).get<std::uint64_t>()));
    os << "Search\n";
    const auto& fit = j.at("fit_score");
    row("fit_score", fit.is_string() ? fit.get<std::string>() : format_double(fit.get<double>()));
    row("generations", std::to_string(j.at("ga_trace").size()));
    row("throughput_gops", format_double(j.at("throughput").at("gops").get<double>()));
    return os.str();
}

inline json timeline_json(const Timeline& tl) {
    json a = json::array();
    for (const auto& iv : tl.intervals)
        a.push_back({{"block", to_string(iv.block)}, {"layer", iv.layer}, {"start", iv.start}, {"end", iv.end}});
    return a;
}

}  // namespace ubimoe::report
