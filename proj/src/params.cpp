#include "irpinn/params.hpp"

#include <stdexcept>

namespace irpinn {

Mat ParamVector::block(int i) const {
  const LayoutEntry& e = layout[static_cast<std::size_t>(i)];
  Mat m(e.rows, e.cols);
  for (int c = 0; c < e.cols; ++c)
    for (int r = 0; r < e.rows; ++r) m(r, c) = values[e.offset + c * e.rows + r];
  return m;
}

void ParamVector::set_block(int i, const Mat& m) {
  const LayoutEntry& e = layout[static_cast<std::size_t>(i)];
  if (m.rows() != e.rows || m.cols() != e.cols)
    throw std::invalid_argument("block shape mismatch");
  for (int c = 0; c < e.cols; ++c)
    for (int r = 0; r < e.rows; ++r) values[e.offset + c * e.rows + r] = m(r, c);
}

void ParamVector::validate() const {
  int at = 0;
  for (const auto& e : layout) {
    if (e.offset != at) throw std::invalid_argument("layout offsets not contiguous");
    at += e.size();
  }
  if (at != size()) throw std::invalid_argument("layout does not cover parameter vector");
}

BoundParams bind_params(Tape& tape, const ParamVector& params) {
  params.validate();
  BoundParams b;
  b.blocks.reserve(params.layout.size());
  for (std::size_t i = 0; i < params.layout.size(); ++i)
    b.blocks.push_back(tape.leaf(params.block(static_cast<int>(i))));
  return b;
}

ParamVector reverse_gradient(Tape& tape, const ParamVector& params, const BoundParams& bound) {
  if (!tape.output().valid()) throw std::logic_error("reverse_gradient: tape output not set");
  tape.backward();
  ParamVector g;
  g.layout = params.layout;
  g.values = Vec::Zero(params.size());
  for (std::size_t i = 0; i < bound.blocks.size(); ++i) {
    const LayoutEntry& e = params.layout[i];
    const Mat& gm = tape.grad(bound.blocks[i]);
    if (gm.size() == 0) continue;  // parameter unused by the output
    for (int c = 0; c < e.cols; ++c)
      for (int r = 0; r < e.rows; ++r) g.values[e.offset + c * e.rows + r] = gm(r, c);
  }
  return g;
}

}  // namespace irpinn
