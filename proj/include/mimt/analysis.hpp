// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/analysis/heatmap.hpp"
#include "mimt/analysis/histogram.hpp"
#include "mimt/analysis/keywords.hpp"
#include "mimt/analysis/metrics.hpp"
#include "mimt/analysis/quartiles.hpp"
#include "mimt/analysis/scoring.hpp"
