// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// ubimoe: search | simulate | verify | report
//
// Exit codes:
//   0  success
//   1  usage or internal error
//   2  parse / schema error (message names the field)
//   3  infeasible platform
//   4  search error (refused or failed)
//   5  verification or validation failure

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "ubimoe/ubimoe.hpp"
#include "ubimoe/verify.hpp"

namespace fs = std::filesystem;
using namespace ubimoe;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kParse = 2, kInfeasible = 3, kSearch = 4, kFailed = 5 };

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

struct Inputs {
    report::RunManifest manifest;
    std::optional<ModelConfig> model;
    std::optional<PlatformProfile> platform;

    std::string load(const std::string& role, const std::string& path) {
        auto text = io::read_file(path);
        manifest.input_hashes[role] = sha256_hex(text);
        return text;
    }
};

// Deterministic by default so reports regenerate byte-identically.
std::string timestamp(bool wall_clock) {
    std::time_t t = 0;
    if (wall_clock) t = std::time(nullptr);
    else if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

fs::path out_dir(const std::string& flag) {
    fs::path p = !flag.empty() ? fs::path(flag) : (std::getenv("UBIMOE_OUT_DIR") ? fs::path(std::getenv("UBIMOE_OUT_DIR")) : fs::path("out"));
    fs::create_directories(p);
    return p;
}

std::vector<std::string> summarize(const std::vector<std::string>& log) {
    std::vector<std::string> s;
    for (const auto& line : log) {
        auto stage = line.substr(0, line.find(':'));
        const auto num = line.find("num=");
        if (stage == "msa" && num != std::string::npos) stage += " " + line.substr(num, line.find(' ', num) - num);
        const bool failed = line.find("failed") != std::string::npos || line.find("infeasible") != std::string::npos;
        s.push_back(stage + (failed ? " failed" : " ok"));
    }
    return s;
}

RoutingTable load_routing(Inputs& in, const std::string& path, const ModelConfig& cfg, std::uint64_t seed,
                          report::RoutingSource& src) {
    if (!path.empty()) {
        src = {"file", 0};
        return io::read_routing(in.load("routing", path), cfg.experts);
    }
    src = {"synthetic", seed};
    return RoutingTable::uniform_random(cfg.patches, cfg.experts, cfg.top_k, seed);
}

void dump(const fs::path& p, const json& j) { io::write_file(p, j.dump(2) + "\n"); }

struct Common {
    std::string platform, model, routing, out;
    std::optional<std::uint64_t> seed;
    bool wall_clock = false;
};

int cmd_search(const Common& c, const std::string& search_path) {
    Inputs in;
    const auto pf = io::platform_from_json(io::parse_json(in.load("platform", c.platform), "platform"));
    const auto cfg = io::model_from_json(io::parse_json(in.load("model", c.model), "model"));
    auto sc = search_path.empty() ? io::SearchConfig{}
                                  : io::search_from_json(io::parse_json(in.load("search", search_path), "search"));
    if (c.seed) sc.seed = sc.ga.seed = *c.seed;
    report::RoutingSource src;
    const auto routing = load_routing(in, c.routing, cfg, sc.seed, src);

    in.manifest.seed = sc.seed;
    in.manifest.profile = pf.name;
    in.manifest.timestamp = timestamp(c.wall_clock);
    const auto result = has_search(pf, cfg, routing, sc.ga, sc.domain, sc.timing);
    in.manifest.stage_log_summary = summarize(result.stage_log);

    const json rep = report::search_report(in.manifest, result, cfg, pf, src);
    report::validate_search_report(rep);
    const auto dir = out_dir(c.out);
    dump(dir / "search_report.json", rep);
    io::write_file(dir / "ga_trace.csv", report::trace_csv(rep.at("ga_trace")));
    std::cout << report::search_table(rep);
    return kOk;
}

int cmd_simulate(const Common& c, const std::string& params_path) {
    Inputs in;
    const auto pf = io::platform_from_json(io::parse_json(in.load("platform", c.platform), "platform"));
    const auto cfg = io::model_from_json(io::parse_json(in.load("model", c.model), "model"));
    const auto dp = io::params_from_json(io::parse_json(in.load("params", params_path), "params"));
    dp.msa.validate();
    const std::uint64_t seed = c.seed.value_or(1);
    report::RoutingSource src;
    const auto routing = load_routing(in, c.routing, cfg, seed, src);
    if (cfg.moe_layer_count() > 0) routing.validate();

    // Replay the kernel schedules rather than evaluating the closed forms.
    LatencyReport lat;
    lat.clock_mhz = pf.clock_mhz;
    lat.cycles_attn = simulate_attention_cycles(cfg, dp.msa.attention());
    lat.cycles_msa = simulate_msa_cycles(cfg, dp.msa);
    const Cycles l_moe = cfg.moe_layer_count() ? simulate_moe_cycles(cfg, routing, dp.moe) : 0;
    const Cycles l_dense = cfg.dense_layer_count() ? simulate_dense_ffn_cycles(cfg, dp.moe) : 0;
    lat.cycles_moe = std::max(l_moe, l_dense);
    lat.cycles_non_encoder = cfg.non_encoder_cycles;
    const auto pipe = simulate_layer_pipeline(
        {cfg.layers, lat.cycles_msa, lat.cycles_moe, cfg.non_encoder_cycles, ffn_latencies(cfg, l_moe, l_dense)});
    lat.cycles_total = pipe.total;
    const auto res = design_resources(dp.msa, dp.moe, cfg, pf);

    in.manifest.seed = seed;
    in.manifest.profile = pf.name;
    in.manifest.timestamp = timestamp(c.wall_clock);
    in.manifest.stage_log_summary = {"simulate ok"};
    json j;
    j["manifest"] = report::to_json(in.manifest);
    j["params"] = io::to_json(dp);
    j["latency"] = report::to_json(lat);
    j["resources"] = report::to_json(res);
    j["budget"] = report::to_json(check_budget(res, pf));
    j["throughput"] = report::throughput_json(cfg, lat);
    j["models"] = report::models_json();
    j["routing"] = {{"source", src.kind}, {"seed", src.seed}};
    j["timeline"] = report::timeline_json(pipe.timeline);

    const auto dir = out_dir(c.out);
    dump(dir / "simulate_report.json", j);
    io::write_file(dir / "timeline.txt", export_timeline(pipe.timeline));
    std::cout << "total " << lat.cycles_total << " cycles (" << report::format_double(lat.total_ms()) << " ms at "
              << pf.clock_mhz << " MHz); msa " << lat.cycles_msa << ", ffn " << lat.cycles_moe << '\n';
    return kOk;
}

int cmd_verify(std::uint64_t seed, std::size_t instances, const std::string& property, bool inject) {
    verify::VerifyOptions o{seed, instances, inject};
    const auto results = verify::run(o, property);
    if (results.empty()) {
        std::cerr << "error: unknown property '" << property << "'\n";
        return kUsage;
    }
    bool ok = true;
    for (const auto& r : results) {
        ok = ok && r.passed;
        std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << r.name << " checks=" << r.checks
                  << " failures=" << r.failures << " time=" << std::fixed << std::setprecision(2) << r.seconds << "s"
                  << (r.detail.empty() ? "" : "  (" + r.detail + ")") << '\n';
    }
    return ok ? kOk : kFailed;
}

// Published latency/throughput pairs: implied operation count per row.
int report_published(const json& j) {
    std::cout << std::left << std::setw(16) << "row" << std::setw(14) << "latency_ms" << std::setw(12) << "gops"
              << "implied_gop\n";
    for (const auto& r : j.at("published")) {
        const double ms = io::detail::get_double(r, "latency_ms", "published."),
                     gops = io::detail::get_double(r, "gops", "published.");
        std::cout << std::setw(16) << r.value("name", "") << std::setw(14) << report::format_double(ms)
                  << std::setw(12) << report::format_double(gops) << report::format_double(implied_gop(gops, ms))
                  << '\n';
    }
    return kOk;
}

int cmd_report(const std::string& path, const std::string& out) {
    const auto j = io::parse_json(io::read_file(path), "result");
    if (j.contains("published")) return report_published(j);
    const auto table = report::search_table(j);
    const auto dir = out_dir(out);
    io::write_file(dir / "report.txt", table);
    io::write_file(dir / "frontier.csv", report::trace_csv(j.at("ga_trace")));
    std::cout << table;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UbiMoE-Sim: MoE-ViT accelerator kernels, cost model and design-space search"};
    app.require_subcommand(1);
    app.set_version_flag("--version", report::kToolVersion);

    Common c;
    std::uint64_t seed_value = 1;
    std::string search_path, params_path, property, result_path;
    std::size_t instances = 20;
    bool inject = false;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--platform", c.platform, "platform profile (JSON)")->required()->check(CLI::ExistingFile);
        s->add_option("--model", c.model, "model configuration (JSON)")->required()->check(CLI::ExistingFile);
        s->add_option("--routing", c.routing, "routing table (text); synthetic uniform routing when omitted")
            ->check(CLI::ExistingFile);
        s->add_option("--seed", seed_value, "seed for all randomness");
        s->add_option("--out-dir", c.out, "output directory (default: $UBIMOE_OUT_DIR or ./out)");
        s->add_flag("--wall-clock", c.wall_clock, "stamp the manifest with the current time");
    };
    auto* search = app.add_subcommand("search", "two-stage hardware search");
    add_common(search);
    search->add_option("--search", search_path, "search configuration (JSON)")->check(CLI::ExistingFile);

    auto* simulate = app.add_subcommand("simulate", "simulate a design and export its timeline");
    add_common(simulate);
    simulate->add_option("--params", params_path, "design parameters or a search report (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    auto* ver = app.add_subcommand("verify", "run the oracle cross-checks");
    ver->add_option("--seed", seed_value, "seed");
    ver->add_option("--instances", instances, "instances per property")->check(CLI::Range(1, 1000));
    ver->add_option("--property", property, "run a single property");
    ver->add_flag("--inject-failure", inject, "force every property to fail (harness self-test)");

    auto* rep = app.add_subcommand("report", "render a search report as a table and frontier CSV");
    rep->add_option("result", result_path, "search report (JSON)")->required()->check(CLI::ExistingFile);
    rep->add_option("--out-dir", c.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or the usage error
        return rc == 0 ? kOk : kUsage;
    }
    try {
        auto seeded = [&](CLI::App* s) {
            if (s->count("--seed")) c.seed = seed_value;
        };
        if (*search) return seeded(search), cmd_search(c, search_path);
        if (*simulate) return seeded(simulate), cmd_simulate(c, params_path);
        if (*ver) return cmd_verify(seed_value, instances, property, inject);
        if (*rep) return cmd_report(result_path, c.out);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const SearchError& e) {
        std::cerr << "search error: " << e.what() << (e.binding().empty() ? "" : " [binding: " + e.binding() + "]")
                  << '\n';
        return e.kind() == SearchError::Kind::Infeasible ? kInfeasible : kSearch;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
