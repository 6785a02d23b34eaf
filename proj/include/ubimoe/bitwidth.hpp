// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ubimoe/common.hpp"

namespace ubimoe {

// Psi(q): DSP blocks consumed by one multiplier at bit-width q. Above 16 bits
// the value is a per-platform constant.
inline double psi(unsigned q, double psi_32 = 4.0) {
    if (q < 1 || q > 32) throw DomainError("psi: bit-width must lie in [1, 32]");
    if (q <= 4) return 0.0;
    if (q <= 8) return 0.5;
    if (q <= 16) return 1.0;
    return psi_32;
}

}  // namespace ubimoe
