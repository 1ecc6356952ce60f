// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iomanip>
#include <ostream>

#include "mimt/numerics/tensor.hpp"

namespace mimt::numerics {

// TSV dump: one header line with the shape, then the values of each row
// (last axis) on its own line.
inline void dump_tsv(std::ostream& os, const Tensor& t) {
  os << "shape";
  for (auto d : t.shape()) os << '\t' << d;
  os << '\n';
  const std::size_t n = t.shape().back();
  const auto values = t.values();
  os << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << values[i] << ((i + 1) % n == 0 ? '\n' : '\t');
}

}  // namespace mimt::numerics
