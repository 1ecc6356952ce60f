// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/model/checkpoint.hpp"
#include "mimt/model/config.hpp"
#include "mimt/model/decode.hpp"
#include "mimt/model/forward.hpp"
#include "mimt/model/params.hpp"
