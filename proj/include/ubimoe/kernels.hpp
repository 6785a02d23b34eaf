// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Functional emulation of the two accelerator kernels.
//
// Streaming attention kernel: N_a PEs each pin one Q row for a full pass over
// the K stream (patch reorder), compute T_a-wide partial dot products per
// cycle, track the per-head row max online, and hand (score row, max) to the
// fused softmax stage which accumulates exp(s - max) * V and the denominator
// together and divides once per (row, head).
//
// Reusable linear kernel: N_L compute units fed by a round-robin router; the
// weight matrix is walked in T_in x T_out tiles and each tile is broadcast to
// every CU.
//
// Arithmetic is 32-bit float. The schedules are exposed as visitor templates
// so the timing simulator can replay them without doing the math.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ubimoe/common.hpp"
#include "ubimoe/workload.hpp"

namespace ubimoe {

struct AttentionKernelParams {
    std::size_t tile_a = 1;  // dot-product lanes per PE
    std::size_t pes_a = 1;   // PEs, one Q row each per round

    void validate() const {
        if (tile_a < 1 || pes_a < 1) throw DomainError("attention kernel params must be >= 1");
    }
};

struct LinearKernelParams {
    std::size_t tile_in = 1;
    std::size_t tile_out = 1;
    std::size_t cus = 1;

    std::size_t tile_wt() const { return tile_in * tile_out; }

    void validate() const {
        if (tile_in < 1 || tile_out < 1 || cus < 1)
            throw DomainError("linear kernel params must be >= 1");
    }

    friend bool operator==(const LinearKernelParams&, const LinearKernelParams&) = default;
};

// Knobs of the linear/MoE timing model shared by the emulator, the analytical
// model and the simulator.
struct LinearTimingOptions {
    Cycles tile_load_overhead = 0;        // extra cycles per weight tile in linear_forward
    std::size_t weight_tiles_per_cycle = 1;  // MoE weight streaming rate, in T_wt words
};

// ---------------------------------------------------------------------------
// Trace

enum class UnitKind : std::uint8_t { Pe, Cu, WeightBuffer };
enum class EventKind : std::uint8_t { QkTile, ExpAccumulate, Divide, WeightLoad, MacTile };

inline const char* to_string(UnitKind u) {
    switch (u) {
        case UnitKind::Pe: return "pe";
        case UnitKind::Cu: return "cu";
        case UnitKind::WeightBuffer: return "wbuf";
    }
    return "?";
}

inline const char* to_string(EventKind e) {
    switch (e) {
        case EventKind::QkTile: return "qk_tile";
        case EventKind::ExpAccumulate: return "exp_acc";
        case EventKind::Divide: return "div";
        case EventKind::WeightLoad: return "wt_load";
        case EventKind::MacTile: return "mac_tile";
    }
    return "?";
}

struct TraceEvent {
    Cycles cycle = 0;
    UnitKind unit = UnitKind::Pe;
    std::uint32_t unit_id = 0;
    EventKind kind = EventKind::QkTile;
};

class StreamTrace {
public:
    void emit(Cycles cycle, UnitKind unit, std::size_t unit_id, EventKind kind) {
        events_.push_back({cycle, unit, static_cast<std::uint32_t>(unit_id), kind});
    }

    const std::vector<TraceEvent>& events() const noexcept { return events_; }

    std::size_t count(EventKind kind) const {
        return static_cast<std::size_t>(std::count_if(
            events_.begin(), events_.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
    }

    // Cycles covered: last event cycle + 1, or 0 for an empty trace.
    Cycles span() const {
        Cycles last = 0;
        for (const auto& e : events_) last = std::max(last, e.cycle + 1);
        return events_.empty() ? 0 : last;
    }

    bool cycles_monotone_per_unit() const {
        std::vector<std::pair<std::uint64_t, Cycles>> last;
        for (const auto& e : events_) {
            const std::uint64_t key = (static_cast<std::uint64_t>(e.unit) << 32) | e.unit_id;
            auto it = std::find_if(last.begin(), last.end(),
                                   [&](const auto& p) { return p.first == key; });
            if (it == last.end()) {
                last.emplace_back(key, e.cycle);
            } else {
                if (e.cycle < it->second) return false;
                it->second = e.cycle;
            }
        }
        return true;
    }

    // `cycle unit_kind unit_id event_kind`, sorted by (cycle, unit kind,
    // unit id) with emission order as the final tie-break.
    std::string dump() const {
        std::vector<std::size_t> order(events_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& x = events_[a];
            const auto& y = events_[b];
            if (x.cycle != y.cycle) return x.cycle < y.cycle;
            if (x.unit != y.unit) return x.unit < y.unit;
            return x.unit_id < y.unit_id;
        });
        std::ostringstream os;
        for (std::size_t i : order) {
            const auto& e = events_[i];
            os << e.cycle << ' ' << to_string(e.unit) << ' ' << e.unit_id << ' '
               << to_string(e.kind) << '\n';
        }
        return os.str();
    }

private:
    std::vector<TraceEvent> events_;
};

// ---------------------------------------------------------------------------
// Attention kernel

// rounds[r][p] is the Q row PE p owns during round r, or nullopt when idle.
using QAssignment = std::vector<std::vector<std::optional<std::size_t>>>;

inline QAssignment reorder_assign_q(std::size_t patch_count, std::size_t pes_a) {
    if (pes_a < 1) throw DomainError("reorder: pes_a must be >= 1");
    QAssignment rounds(ceil_div(patch_count, pes_a));
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        rounds[r].resize(pes_a);
        for (std::size_t p = 0; p < pes_a; ++p) {
            const std::size_t row = r * pes_a + p;
            if (row < patch_count) rounds[r][p] = row;
        }
    }
    return rounds;
}

// Walks the attention QK stream in hardware order. For every round, every K
// row j of the broadcast stream and every T_a-wide feature tile, calls
//   visit(cycle, round, k_row, tile, tiles_per_row)
// once. One (round, k_row, tile) triple is one cycle for all active PEs.
template <typename Visit>
void visit_attention_schedule(std::size_t patches, std::size_t feat_dim,
                              const AttentionKernelParams& params, Visit&& visit) {
    params.validate();
    const std::size_t rounds = ceil_div(patches, params.pes_a);
    const std::size_t tiles = ceil_div(feat_dim, params.tile_a);
    Cycles cycle = 0;
    for (std::size_t r = 0; r < rounds; ++r)
        for (std::size_t j = 0; j < patches; ++j)
            for (std::size_t t = 0; t < tiles; ++t) visit(cycle++, r, j, t, tiles);
}

struct RowScores {
    std::vector<float> scores;
    float row_max = 0.0f;
};

// Score row of one Q row (one head) against the streamed K rows. The dot
// product is accumulated T_a lanes at a time; the max is updated as each
// K row completes.
inline RowScores streamed_row_scores(std::span<const float> q_row, const Matrix<float>& k_mat,
                                     std::size_t tile_a, StreamTrace* trace = nullptr,
                                     std::size_t pe = 0, Cycles cycle0 = 0) {
    if (tile_a < 1) throw DomainError("streamed scores: tile_a must be >= 1");
    if (k_mat.cols() != q_row.size() || q_row.empty())
        throw DomainError("streamed scores: K width must equal the Q row length");
    const float scale = 1.0f / std::sqrt(static_cast<float>(q_row.size()));
    const std::size_t tiles = ceil_div(q_row.size(), tile_a);
    RowScores rs;
    rs.scores.resize(k_mat.rows());
    Cycles cycle = cycle0;
    for (std::size_t j = 0; j < k_mat.rows(); ++j) {
        float acc = 0.0f;
        for (std::size_t t = 0; t < tiles; ++t) {
            float partial = 0.0f;
            const std::size_t lo = t * tile_a, hi = std::min(q_row.size(), lo + tile_a);
            for (std::size_t d = lo; d < hi; ++d) partial += q_row[d] * k_mat(j, d);
            acc += partial;
            if (trace) trace->emit(cycle, UnitKind::Pe, pe, EventKind::QkTile);
            ++cycle;
        }
        rs.scores[j] = acc * scale;
        rs.row_max = j == 0 ? rs.scores[j] : std::max(rs.row_max, rs.scores[j]);
    }
    return rs;
}

enum class SoftmaxMode {
    TwoStage,       // max is final before the exp stage runs
    OnlineRescale,  // running max with rescaling of the partial sums
};

struct FusedRow {
    std::vector<float> out;
    float denominator = 0.0f;
    unsigned divisions = 0;
};

// exp(s_i - max) * V_i and the denominator are accumulated in one pass over
// the score row; the accumulated vector is divided by the denominator once.
// `v_mat` columns [col_off, col_off + width) are the head's slice of V.
inline FusedRow fused_softmax_weighted_sum(std::span<const float> scores, float row_max,
                                           const Matrix<float>& v_mat, std::size_t col_off,
                                           std::size_t width,
                                           SoftmaxMode mode = SoftmaxMode::TwoStage) {
    if (scores.empty()) throw DomainError("fused softmax: empty score row");
    if (v_mat.rows() != scores.size() || col_off + width > v_mat.cols())
        throw DomainError("fused softmax: V shape does not match the score row");
    float true_max = scores[0];
    for (float s : scores) true_max = std::max(true_max, s);
    if (std::abs(static_cast<double>(true_max) - static_cast<double>(row_max)) > 1e-9)
        throw ContractViolation("fused softmax: supplied row max differs from the score max");

    FusedRow r;
    std::vector<float> acc(width, 0.0f);
    float l = 0.0f;
    if (mode == SoftmaxMode::TwoStage) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const float e = std::exp(scores[i] - row_max);
            l += e;
            for (std::size_t d = 0; d < width; ++d) acc[d] += e * v_mat(i, col_off + d);
        }
    } else {
        float m = scores[0];
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > m) {
                const float c = std::exp(m - scores[i]);
                l *= c;
                for (float& a : acc) a *= c;
                m = scores[i];
            }
            const float e = std::exp(scores[i] - m);
            l += e;
            for (std::size_t d = 0; d < width; ++d) acc[d] += e * v_mat(i, col_off + d);
        }
    }
    const float inv = 1.0f / l;
    ++r.divisions;
    for (float& a : acc) a *= inv;
    r.out = std::move(acc);
    r.denominator = l;
    return r;
}

inline FusedRow fused_softmax_weighted_sum(std::span<const float> scores, float row_max,
                                           const Matrix<float>& v_mat,
                                           SoftmaxMode mode = SoftmaxMode::TwoStage) {
    return fused_softmax_weighted_sum(scores, row_max, v_mat, 0, v_mat.cols(), mode);
}

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
    Matrix<To> out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = static_cast<To>(m(r, c));
    return out;
}

struct KernelResult {
    TokenMatrix out;
    StreamTrace trace;
    std::uint64_t divisions = 0;
};

inline KernelResult attention_forward(const TokenMatrix& q, const TokenMatrix& k,
                                      const TokenMatrix& v, std::size_t heads,
                                      const AttentionKernelParams& params,
                                      SoftmaxMode mode = SoftmaxMode::TwoStage) {
    if (!q.same_shape(k) || !q.same_shape(v))
        throw DomainError("attention kernel: Q, K, V must share one shape");
    if (heads == 0 || q.cols() % heads != 0)
        throw DomainError("attention kernel: feature dim must be divisible by heads");
    params.validate();
    const std::size_t n = q.rows(), f = q.cols(), dh = f / heads;
    const auto qf = matrix_cast<float>(q);
    const auto kf = matrix_cast<float>(k);
    const auto vf = matrix_cast<float>(v);
    const auto assign = reorder_assign_q(n, params.pes_a);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    KernelResult res;
    res.out = TokenMatrix(n, f);
    // Per PE, per head: running partial dot for the current K row, the
    // finished score row, and the max register.
    std::vector<float> partial(params.pes_a * heads, 0.0f);
    std::vector<std::vector<float>> scores(params.pes_a * heads, std::vector<float>(n));
    std::vector<float> max_reg(params.pes_a * heads, 0.0f);

    auto finish_round = [&](std::size_t round, Cycles end_cycle) {
        for (std::size_t p = 0; p < params.pes_a; ++p) {
            if (!assign[round][p]) continue;
            const std::size_t row = *assign[round][p];
            for (std::size_t h = 0; h < heads; ++h) {
                const auto fr = fused_softmax_weighted_sum(scores[p * heads + h], max_reg[p * heads + h],
                                                           vf, h * dh, dh, mode);
                res.divisions += fr.divisions;
                res.trace.emit(end_cycle, UnitKind::Pe, p, EventKind::Divide);
                for (std::size_t d = 0; d < dh; ++d) res.out(row, h * dh + d) = fr.out[d];
            }
        }
    };

    visit_attention_schedule(n, f, params,
        [&](Cycles cycle, std::size_t round, std::size_t j, std::size_t t, std::size_t tiles) {
            const std::size_t lo = t * params.tile_a, hi = std::min(f, lo + params.tile_a);
            for (std::size_t p = 0; p < params.pes_a; ++p) {
                if (!assign[round][p]) continue;
                const std::size_t row = *assign[round][p];
                // A tile may straddle a head boundary; each lane feeds its head.
                for (std::size_t d = lo; d < hi; ++d)
                    partial[p * heads + d / dh] += qf(row, d) * kf(j, d);
                res.trace.emit(cycle, UnitKind::Pe, p, EventKind::QkTile);
                if (t + 1 == tiles) {
                    for (std::size_t h = 0; h < heads; ++h) {
                        const std::size_t idx = p * heads + h;
                        const float s = partial[idx] * scale;
                        partial[idx] = 0.0f;
                        scores[idx][j] = s;
                        max_reg[idx] = j == 0 ? s : std::max(max_reg[idx], s);
                    }
                    res.trace.emit(cycle, UnitKind::Pe, p, EventKind::ExpAccumulate);
                }
            }
            if (j + 1 == n && t + 1 == tiles) finish_round(round, cycle);
        });
    return res;
}

// ---------------------------------------------------------------------------
// Linear kernel

// Position j of `pending` goes to CU j mod N_L.
inline std::vector<std::vector<std::size_t>> router_round_robin(std::span<const std::size_t> pending,
                                                                std::size_t cus) {
    if (cus < 1) throw DomainError("router: cus must be >= 1");
    std::vector<std::vector<std::size_t>> lists(cus);
    for (std::size_t j = 0; j < pending.size(); ++j) lists[j % cus].push_back(pending[j]);
    return lists;
}

// Inverse of router_round_robin: take one entry from each CU list in turn.
inline std::vector<std::size_t> interleave_round_robin(
    const std::vector<std::vector<std::size_t>>& lists) {
    std::vector<std::size_t> out;
    std::size_t longest = 0;
    for (const auto& l : lists) longest = std::max(longest, l.size());
    for (std::size_t w = 0; w < longest; ++w)
        for (const auto& l : lists)
            if (w < l.size()) out.push_back(l[w]);
    return out;
}

inline std::size_t linear_tile_count(std::size_t in_dim, std::size_t out_dim,
                                     const LinearKernelParams& p) {
    return ceil_div(in_dim, p.tile_in) * ceil_div(out_dim, p.tile_out);
}

// Walks the linear kernel schedule starting at `cycle0`. For every weight
// tile (output tiles outer, input tiles inner) calls
//   on_load(cycle, in_tile, out_tile)
// then, for every token wave, on_wave(cycle, wave, in_tile, out_tile).
// Returns the cycle after the last wave.
template <typename OnLoad, typename OnWave>
Cycles visit_linear_schedule(std::size_t tokens, std::size_t in_dim, std::size_t out_dim,
                             const LinearKernelParams& params, Cycles tile_load_overhead,
                             Cycles cycle0, OnLoad&& on_load, OnWave&& on_wave) {
    params.validate();
    const std::size_t waves = ceil_div(tokens, params.cus);
    const std::size_t in_tiles = ceil_div(in_dim, params.tile_in);
    const std::size_t out_tiles = ceil_div(out_dim, params.tile_out);
    Cycles cycle = cycle0;
    for (std::size_t to = 0; to < out_tiles; ++to)
        for (std::size_t ti = 0; ti < in_tiles; ++ti) {
            on_load(cycle, ti, to);
            cycle += tile_load_overhead;
            for (std::size_t w = 0; w < waves; ++w) on_wave(cycle++, w, ti, to);
        }
    return cycle;
}

namespace detail {

// One linear layer on the CU array. `rows` selects which rows of `x` are
// pending (in router order); results land in `out` rows of the same index.
inline Cycles run_linear(const Matrix<float>& x, std::span<const std::size_t> rows,
                         const Matrix<float>& w, const LinearKernelParams& params,
                         Cycles tile_load_overhead, Cycles cycle0, bool emit_loads,
                         Matrix<float>& out, StreamTrace& trace) {
    const auto lists = router_round_robin(rows, params.cus);
    return visit_linear_schedule(
        rows.size(), w.rows(), w.cols(), params, tile_load_overhead, cycle0,
        [&](Cycles c, std::size_t, std::size_t) {
            if (emit_loads) trace.emit(c, UnitKind::WeightBuffer, 0, EventKind::WeightLoad);
        },
        [&](Cycles c, std::size_t wave, std::size_t ti, std::size_t to) {
            const std::size_t i_lo = ti * params.tile_in, i_hi = std::min(w.rows(), i_lo + params.tile_in);
            const std::size_t o_lo = to * params.tile_out, o_hi = std::min(w.cols(), o_lo + params.tile_out);
            for (std::size_t cu = 0; cu < params.cus; ++cu) {
                if (wave >= lists[cu].size()) continue;
                const std::size_t row = lists[cu][wave];
                for (std::size_t o = o_lo; o < o_hi; ++o) {
                    float s = 0.0f;
                    for (std::size_t i = i_lo; i < i_hi; ++i) s += x(row, i) * w(i, o);
                    out(row, o) += s;
                }
                trace.emit(c, UnitKind::Cu, cu, EventKind::MacTile);
            }
        });
}

}  // namespace detail

inline KernelResult linear_forward(const TokenMatrix& tokens, const TokenMatrix& weight,
                                   const LinearKernelParams& params,
                                   const LinearTimingOptions& timing = {}) {
    if (weight.rows() != tokens.cols())
        throw DomainError("linear kernel: weight rows must equal token feature dim");
    params.validate();
    const auto xf = matrix_cast<float>(tokens);
    const auto wf = matrix_cast<float>(weight);
    std::vector<std::size_t> pending(tokens.rows());
    for (std::size_t i = 0; i < pending.size(); ++i) pending[i] = i;
    Matrix<float> out(tokens.rows(), weight.cols());
    KernelResult res;
    detail::run_linear(xf, pending, wf, params, timing.tile_load_overhead, 0, true, out, res.trace);
    res.out = matrix_cast<double>(out);
    return res;
}

// Weight tiles one expert streams in (W1 then W2).
inline std::size_t expert_tile_count(std::size_t feat_dim, std::size_t hidden_dim,
                                     const LinearKernelParams& p) {
    return linear_tile_count(feat_dim, hidden_dim, p) + linear_tile_count(hidden_dim, feat_dim, p);
}

// Cycles to stream one expert's weights at `weight_tiles_per_cycle` tiles of
// T_wt words per cycle.
inline Cycles expert_weight_load_cycles(std::size_t feat_dim, std::size_t hidden_dim,
                                        const LinearKernelParams& p,
                                        const LinearTimingOptions& timing) {
    const std::uint64_t words = 2ull * feat_dim * hidden_dim;
    const std::uint64_t per_cycle = static_cast<std::uint64_t>(p.tile_wt()) *
                                    std::max<std::size_t>(1, timing.weight_tiles_per_cycle);
    return ceil_div(words, per_cycle);
}

// Expert-major MoE schedule. For every expert with at least one routed
// token: on_expert(e, tokens_e, load_start, load_cycles) followed by the W1
// and W2 linear schedules back to back. Returns the total cycle count.
template <typename OnExpert, typename OnLoad, typename OnWave>
Cycles visit_moe_schedule(std::size_t feat_dim, std::size_t hidden_dim, const RoutingTable& routing,
                          const LinearKernelParams& params, const LinearTimingOptions& timing,
                          OnExpert&& on_expert, OnLoad&& on_load, OnWave&& on_wave) {
    Cycles cycle = 0;
    for (std::size_t e = 0; e < routing.experts; ++e) {
        const auto toks = routing.tokens_for(e);
        if (toks.empty()) continue;
        const Cycles load = expert_weight_load_cycles(feat_dim, hidden_dim, params, timing);
        on_expert(e, toks, cycle, load);
        cycle += load;
        cycle = visit_linear_schedule(toks.size(), feat_dim, hidden_dim, params,
                                      timing.tile_load_overhead, cycle, on_load,
                                      [&](Cycles c, std::size_t w, std::size_t ti, std::size_t to) {
                                          on_wave(c, 0, w, ti, to);
                                      });
        cycle = visit_linear_schedule(toks.size(), hidden_dim, feat_dim, params,
                                      timing.tile_load_overhead, cycle, on_load,
                                      [&](Cycles c, std::size_t w, std::size_t ti, std::size_t to) {
                                          on_wave(c, 1, w, ti, to);
                                      });
    }
    return cycle;
}

inline KernelResult moe_forward(const TokenMatrix& tokens, const RoutingTable& routing,
                                std::span<const ExpertWeights> experts,
                                const LinearKernelParams& params,
                                const LinearTimingOptions& timing = {}) {
    if (routing.token_count() != tokens.rows())
        throw DomainError("moe kernel: routing must cover every token");
    for (const auto& tok : routing.tokens)
        for (const auto& r : tok)
            if (r.expert >= experts.size()) throw DomainError("moe kernel: expert id out of range");
    params.validate();
    const std::size_t f = tokens.cols();
    const std::size_t hid = experts.empty() ? 0 : experts[0].w1.cols();
    for (const auto& ew : experts)
        if (ew.w1.rows() != f || ew.w1.cols() != hid || ew.w2.rows() != hid || ew.w2.cols() != f)
            throw DomainError("moe kernel: expert weight shapes do not match");

    const auto xf = matrix_cast<float>(tokens);
    Matrix<float> out(tokens.rows(), f);
    KernelResult res;
    const std::size_t tiles_per_expert = expert_tile_count(f, hid, params);
    Cycles cycle = 0;
    for (std::size_t e = 0; e < experts.size(); ++e) {
        const auto toks = routing.tokens_for(e);
        if (toks.empty()) continue;
        // Weight streaming phase: every tile of W1 and W2 passes the buffer.
        const Cycles load = expert_weight_load_cycles(f, hid, params, timing);
        for (std::size_t i = 0; i < tiles_per_expert; ++i)
            res.trace.emit(cycle + (i * load) / tiles_per_expert, UnitKind::WeightBuffer, 0,
                           EventKind::WeightLoad);
        cycle += load;

        const auto w1 = matrix_cast<float>(experts[e].w1);
        const auto w2 = matrix_cast<float>(experts[e].w2);
        Matrix<float> hidden(tokens.rows(), hid);
        cycle = detail::run_linear(xf, toks, w1, params, timing.tile_load_overhead, cycle, false,
                                   hidden, res.trace);
        for (std::size_t t : toks)
            for (std::size_t j = 0; j < hid; ++j)
                hidden(t, j) = static_cast<float>(gelu(static_cast<double>(hidden(t, j))));
        Matrix<float> y(tokens.rows(), f);
        cycle = detail::run_linear(hidden, toks, w2, params, timing.tile_load_overhead, cycle, false,
                                   y, res.trace);
        for (std::size_t t : toks) {
            float gw = 0.0f;
            for (const auto& r : routing.tokens[t])
                if (r.expert == e) gw = static_cast<float>(r.weight);
            for (std::size_t c = 0; c < f; ++c) out(t, c) += gw * y(t, c);
        }
    }
    res.out = matrix_cast<double>(out);
    return res;
}

}  // namespace ubimoe
