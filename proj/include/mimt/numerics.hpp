// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/numerics/autograd.hpp"
#include "mimt/numerics/debug.hpp"
#include "mimt/numerics/gradcheck.hpp"
#include "mimt/numerics/ops.hpp"
#include "mimt/numerics/rng.hpp"
#include "mimt/numerics/tensor.hpp"
