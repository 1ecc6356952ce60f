// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/objective/objective.hpp"
