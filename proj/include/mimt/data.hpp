// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mimt/data/batching.hpp"
#include "mimt/data/corpus.hpp"
#include "mimt/data/synthetic.hpp"
#include "mimt/data/vocab.hpp"
