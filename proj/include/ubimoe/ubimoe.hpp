// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ubimoe/common.hpp"
#include "ubimoe/bitwidth.hpp"
#include "ubimoe/workload.hpp"
#include "ubimoe/kernels.hpp"
#include "ubimoe/linear_model.hpp"
#include "ubimoe/costmodel.hpp"
#include "ubimoe/simtime.hpp"
#include "ubimoe/dse.hpp"
#include "ubimoe/io.hpp"
#include "ubimoe/report.hpp"
