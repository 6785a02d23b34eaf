// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// File formats: JSON model / platform / search / params files and the
// line-oriented routing table.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ubimoe/common.hpp"
#include "ubimoe/costmodel.hpp"
#include "ubimoe/dse.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path.string(), "cannot write file");
    out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(what, std::string("malformed JSON: ") + e.what());
    }
}

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& prefix) {
    if (!j.is_object()) throw ParseError(prefix.empty() ? "<root>" : prefix, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(prefix + key, "missing required field");
    return *it;
}

inline std::uint64_t get_uint(const json& j, const std::string& key, const std::string& prefix = "",
                              std::uint64_t min = 0) {
    const auto& v = field(j, key, prefix);
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < static_cast<std::int64_t>(min))
            throw ParseError(prefix + key, "must be >= " + std::to_string(min));
        return v.get<std::uint64_t>();
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d < static_cast<double>(min)) throw ParseError(prefix + key, "must be >= " + std::to_string(min));
        if (d != std::floor(d)) throw ParseError(prefix + key, "must be an integer");
        return static_cast<std::uint64_t>(d);
    }
    throw ParseError(prefix + key, "must be a number");
}

inline std::uint64_t get_uint_or(const json& j, const std::string& key, std::uint64_t fallback,
                                 const std::string& prefix = "", std::uint64_t min = 0) {
    return j.contains(key) ? get_uint(j, key, prefix, min) : fallback;
}

inline double get_double(const json& j, const std::string& key, const std::string& prefix = "") {
    const auto& v = field(j, key, prefix);
    if (!v.is_number()) throw ParseError(prefix + key, "must be a number");
    return v.get<double>();
}

inline double get_double_or(const json& j, const std::string& key, double fallback, const std::string& prefix = "") {
    return j.contains(key) ? get_double(j, key, prefix) : fallback;
}

inline std::vector<std::size_t> get_list(const json& j, const std::string& key, const std::string& prefix,
                                         const std::vector<std::size_t>& fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array()) throw ParseError(prefix + key, "must be a list of integers");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        if (!x.is_number_integer() || x.get<std::int64_t>() < 0)
            throw ParseError(prefix + key, "must be a list of non-negative integers");
        out.push_back(x.get<std::size_t>());
    }
    return out;
}

template <typename Validate>
void revalidate(Validate&& fn, const std::string& what) {
    try {
        fn();
    } catch (const DomainError& e) {
        throw ParseError(what, e.what());
    }
}

}  // namespace detail

// --- model -----------------------------------------------------------------

inline ModelConfig model_from_json(const json& j) {
    using namespace detail;
    ModelConfig c;
    c.layers = get_uint(j, "layers", "", 1);
    c.patches = get_uint(j, "patches", "", 1);
    c.feat_dim = get_uint(j, "feat_dim", "", 1);
    c.hidden_dim = get_uint(j, "hidden_dim", "", 1);
    c.heads = get_uint(j, "heads", "", 1);
    c.experts = get_uint(j, "experts", "", 1);
    c.top_k = get_uint(j, "top_k", "", 1);
    c.bitwidth = static_cast<unsigned>(get_uint(j, "bitwidth", "", 1));
    const auto& alt = field(j, "moe_alternate", "");
    if (!alt.is_boolean()) throw ParseError("moe_alternate", "must be true or false");
    c.moe_alternate = alt.get<bool>();
    c.non_encoder_cycles = get_uint_or(j, "non_encoder_cycles", 0);
    if (c.feat_dim % c.heads != 0) throw ParseError("heads", "feat_dim must be divisible by heads");
    if (c.top_k > c.experts) throw ParseError("top_k", "must not exceed experts");
    if (c.bitwidth < 4 || c.bitwidth > 32) throw ParseError("bitwidth", "must lie in [4, 32]");
    return c;
}

inline json to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},         {"patches", c.patches}, {"feat_dim", c.feat_dim},
                {"hidden_dim", c.hidden_dim}, {"heads", c.heads},     {"experts", c.experts},
                {"top_k", c.top_k},           {"bitwidth", c.bitwidth}, {"moe_alternate", c.moe_alternate},
                {"non_encoder_cycles", c.non_encoder_cycles}};
}

// --- platform --------------------------------------------------------------

inline PlatformProfile platform_from_json(const json& j) {
    using namespace detail;
    PlatformProfile p;
    const auto& name = field(j, "name", "");
    if (!name.is_string()) throw ParseError("name", "must be a string");
    p.name = name.get<std::string>();
    p.dsp_total = get_uint(j, "dsp_total", "", 1);
    p.bram_total = get_uint(j, "bram_total", "", 1);
    p.bw_total = get_uint_or(j, "bw_total", 0);
    p.clock_mhz = get_double(j, "clock_mhz");
    if (!(p.clock_mhz > 0.0)) throw ParseError("clock_mhz", "must be positive");
    p.d_exp = get_double_or(j, "d_exp", p.d_exp);
    if (p.d_exp < 0.0) throw ParseError("d_exp", "must be non-negative");
    p.b_exp = get_double_or(j, "b_exp", p.b_exp);
    if (p.b_exp < 0.0) throw ParseError("b_exp", "must be non-negative");
    p.bwidth = static_cast<unsigned>(get_uint_or(j, "bwidth", p.bwidth, "", 1));
    p.bdepth = get_uint_or(j, "bdepth", p.bdepth, "", 1);
    p.psi_32 = get_double_or(j, "psi_32", p.psi_32);
    if (p.psi_32 < 0.0) throw ParseError("psi_32", "must be non-negative");
    return p;
}

inline json to_json(const PlatformProfile& p) {
    return json{{"name", p.name},     {"dsp_total", p.dsp_total}, {"bram_total", p.bram_total},
                {"bw_total", p.bw_total}, {"clock_mhz", p.clock_mhz}, {"d_exp", p.d_exp},
                {"b_exp", p.b_exp},   {"bwidth", p.bwidth},       {"bdepth", p.bdepth},
                {"psi_32", p.psi_32}};
}

// --- search config ---------------------------------------------------------

struct SearchConfig {
    SearchDomain domain;
    GaConfig ga;
    std::uint64_t seed = 1;
    LinearTimingOptions timing;
};

inline SearchConfig search_from_json(const json& j) {
    using namespace detail;
    SearchConfig s;
    if (j.contains("domain")) {
        const auto& d = j.at("domain");
        s.domain.num = get_list(d, "num", "domain.", s.domain.num);
        s.domain.tile_a = get_list(d, "tile_a", "domain.", s.domain.tile_a);
        s.domain.pes_a = get_list(d, "pes_a", "domain.", s.domain.pes_a);
        s.domain.tile_in = get_list(d, "tile_in", "domain.", s.domain.tile_in);
        s.domain.tile_out = get_list(d, "tile_out", "domain.", s.domain.tile_out);
        s.domain.cus = get_list(d, "cus", "domain.", s.domain.cus);
    }
    revalidate([&] { s.domain.validate(); }, "domain");
    if (j.contains("ga")) {
        const auto& g = j.at("ga");
        s.ga.population_size = get_uint_or(g, "population_size", s.ga.population_size, "ga.");
        s.ga.generations = get_uint_or(g, "generations", s.ga.generations, "ga.");
        s.ga.crossover_rate = get_double_or(g, "crossover_rate", s.ga.crossover_rate, "ga.");
        s.ga.mutation_rate = get_double_or(g, "mutation_rate", s.ga.mutation_rate, "ga.");
        s.ga.tournament_size = get_uint_or(g, "tournament_size", s.ga.tournament_size, "ga.");
    }
    s.seed = get_uint_or(j, "seed", s.seed);
    s.ga.seed = s.seed;
    revalidate([&] { s.ga.validate(); }, "ga");
    if (j.contains("timing")) {
        const auto& t = j.at("timing");
        s.timing.tile_load_overhead = get_uint_or(t, "tile_load_overhead", 0, "timing.");
        s.timing.weight_tiles_per_cycle = get_uint_or(t, "weight_tiles_per_cycle", 1, "timing.", 1);
    }
    return s;
}

inline json to_json(const SearchDomain& d) {
    return json{{"num", d.num},         {"tile_a", d.tile_a},     {"pes_a", d.pes_a},
                {"tile_in", d.tile_in}, {"tile_out", d.tile_out}, {"cus", d.cus}};
}

inline json to_json(const GaConfig& g) {
    return json{{"population_size", g.population_size}, {"generations", g.generations},
                {"crossover_rate", g.crossover_rate},   {"mutation_rate", g.mutation_rate},
                {"tournament_size", g.tournament_size}, {"seed", g.seed}};
}

// --- design params ---------------------------------------------------------

struct DesignParams {
    HardwareParams msa;
    LinearKernelParams moe;
};

inline json to_json(const HardwareParams& hp) {
    return json{{"num", hp.num},         {"tile_a", hp.tile_a},     {"pes_a", hp.pes_a},
                {"tile_in", hp.tile_in}, {"tile_out", hp.tile_out}, {"cus", hp.cus}};
}

inline json to_json(const LinearKernelParams& lp) {
    return json{{"tile_in", lp.tile_in}, {"tile_out", lp.tile_out}, {"cus", lp.cus}};
}

inline json to_json(const DesignParams& p) { return json{{"msa", to_json(p.msa)}, {"moe", to_json(p.moe)}}; }

// Accepts a params file {"msa": {...}, "moe": {...}} or a search report,
// whose "params" member has that shape.
inline DesignParams params_from_json(const json& root) {
    using namespace detail;
    const json& j = root.contains("params") ? root.at("params") : root;
    DesignParams p;
    const auto& m = field(j, "msa", "");
    p.msa.num = get_uint(m, "num", "msa.");
    p.msa.tile_a = get_uint(m, "tile_a", "msa.", 1);
    p.msa.pes_a = get_uint(m, "pes_a", "msa.", 1);
    p.msa.tile_in = get_uint(m, "tile_in", "msa.", 1);
    p.msa.tile_out = get_uint(m, "tile_out", "msa.", 1);
    p.msa.cus = get_uint(m, "cus", "msa.", 1);
    const auto& e = field(j, "moe", "");
    p.moe.tile_in = get_uint(e, "tile_in", "moe.", 1);
    p.moe.tile_out = get_uint(e, "tile_out", "moe.", 1);
    p.moe.cus = get_uint(e, "cus", "moe.", 1);
    return p;
}

// --- routing table ---------------------------------------------------------

// One line per token: `token_id expert_id:weight [expert_id:weight ...]`.
// Blank lines and lines starting with '#' are ignored.
inline RoutingTable read_routing(const std::string& text, std::size_t experts) {
    RoutingTable rt;
    rt.experts = experts;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        const std::string where = "routing line " + std::to_string(lineno);
        long long token = -1;
        if (!(ls >> token) || token < 0) throw ParseError(where, "expected a token id");
        if (static_cast<std::size_t>(token) != rt.tokens.size())
            throw ParseError(where, "token ids must be consecutive from 0");
        std::vector<RouteEntry> entries;
        std::string pair;
        while (ls >> pair) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos) throw ParseError(where, "expected expert_id:weight");
            try {
                std::size_t pos = 0;
                const long long e = std::stoll(pair.substr(0, colon), &pos);
                if (pos != colon || e < 0) throw std::invalid_argument("expert");
                const std::string wtxt = pair.substr(colon + 1);
                const double w = std::stod(wtxt, &pos);
                if (pos != wtxt.size()) throw std::invalid_argument("weight");
                entries.push_back({static_cast<std::size_t>(e), w});
            } catch (const std::logic_error&) {
                throw ParseError(where, "malformed entry '" + pair + "'");
            }
        }
        if (entries.empty()) throw ParseError(where, "token has no experts");
        rt.tokens.push_back(std::move(entries));
    }
    detail::revalidate([&] { rt.validate(); }, "routing");
    return rt;
}

inline std::string write_routing(const RoutingTable& rt) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t t = 0; t < rt.tokens.size(); ++t) {
        os << t;
        for (const auto& r : rt.tokens[t]) os << ' ' << r.expert << ':' << r.weight;
        os << '\n';
    }
    return os.str();
}

}  // namespace ubimoe::io
