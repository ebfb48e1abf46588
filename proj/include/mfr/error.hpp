// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MFR_ERROR_HPP_
#define MFR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mfr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A row that cannot be normalized (collapsed embedding or template).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// An operation would have produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation graph: non-scalar output, foreign input,
// wrong derivative mode.
class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// File-level failure: missing file, truncation, bad magic, checksum or
// version mismatch.
class IoError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step, long episode)
      : Error(what), step_(step), episode_(episode) {}
  long step() const { return step_; }
  long episode() const { return episode_; }

 private:
  long step_;
  long episode_;
};

}  // namespace mfr

#endif  // MFR_ERROR_HPP_
