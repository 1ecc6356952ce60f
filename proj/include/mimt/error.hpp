// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimt {

// Base of every error the library throws. The exit code is what the CLI
// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class ShapeError : public NumericError {
 public:
  ShapeError(std::string op, std::vector<std::size_t> lhs, std::vector<std::size_t> rhs)
      : NumericError(op + ": incompatible shapes " + shape_to_string(lhs) + " and " +
                     shape_to_string(rhs)),
        op_(std::move(op)),
        lhs_(std::move(lhs)),
        rhs_(std::move(rhs)) {}

  const std::string& op() const noexcept { return op_; }
  const std::vector<std::size_t>& lhs() const noexcept { return lhs_; }
  const std::vector<std::size_t>& rhs() const noexcept { return rhs_; }

 private:
  std::string op_;
  std::vector<std::size_t> lhs_;
  std::vector<std::size_t> rhs_;
};

}  // namespace mimt
