// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/training/config.hpp"
#include "mimt/training/optim.hpp"
#include "mimt/training/trainer.hpp"
