#pragma once

#include "irpinn/tape.hpp"

#include <vector>

namespace irpinn {

// Flat parameter storage with a layout mapping offsets to matrix blocks.
struct LayoutEntry {
  int offset = 0;
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
};

struct ParamVector {
  Vec values;
  std::vector<LayoutEntry> layout;

  int size() const { return static_cast<int>(values.size()); }
  Mat block(int i) const;
  void set_block(int i, const Mat& m);
  void validate() const;  // contiguous, non-overlapping, covering
};

// Parameter blocks materialized as leaves on a tape for one evaluation.
struct BoundParams {
  std::vector<Var> blocks;
};

BoundParams bind_params(Tape& tape, const ParamVector& params);

// Gradient of the tape's scalar output with respect to the bound parameters,
// in the same flat layout. Runs the reverse sweep if it has not run yet.
ParamVector reverse_gradient(Tape& tape, const ParamVector& params, const BoundParams& bound);

}  // namespace irpinn
