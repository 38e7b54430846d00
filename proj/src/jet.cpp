#include "irpinn/jet.hpp"

namespace irpinn {

Jet jet_lift(double value, bool tracked, int order) {
  if (order < 0 || order > kMaxJetOrder)
    throw std::invalid_argument("jet order must be in [0, 4], got " + std::to_string(order));
  Jet j;
  j.c.assign(static_cast<std::size_t>(order) + 1, 0.0);
  j.c[0] = value;
  if (tracked && order >= 1) j.c[1] = 1.0;
  return j;
}

Jet jet_primitive(JetPrimitive kind, const Jet& a, const Jet* b, int n) {
  auto need_b = [&]() -> const Jet& {
    if (b == nullptr) throw std::invalid_argument("binary jet primitive needs two operands");
    return *b;
  };
  switch (kind) {
    case JetPrimitive::Add: return jet_add(a, need_b());
    case JetPrimitive::Sub: return jet_sub(a, need_b());
    case JetPrimitive::Mul: return jet_mul(a, need_b());
    case JetPrimitive::Div: {
      const Jet& d = need_b();
      if (d.c[0] == 0.0) throw std::domain_error("jet division by series with zero constant term");
      return jet_div(a, d);
    }
    case JetPrimitive::PowInt: return jet_pow_int(a, n);
    case JetPrimitive::Tanh: return jet_tanh(a);
    case JetPrimitive::Exp: return jet_exp(a);
    case JetPrimitive::Sin: return jet_sin(a);
    case JetPrimitive::Cos: return jet_cos(a);
  }
  throw std::invalid_argument("unknown jet primitive");
}

JetVar jet_lift_batch(Tape& tape, const Vec& values, const Vec& seeds, int order,
                      bool constant_inputs) {
  if (order < 0 || order > kMaxJetOrder)
    throw std::invalid_argument("jet order must be in [0, 4]");
  if (values.size() != seeds.size())
    throw std::invalid_argument("values/seeds length mismatch");
  JetVar j;
  auto make = [&](const Mat& m) {
    return constant_inputs ? tape.constant(m) : tape.leaf(m);
  };
  j.c.push_back(make(values));
  if (order >= 1) j.c.push_back(make(seeds));
  for (int k = 2; k <= order; ++k)
    j.c.push_back(tape.constant(Mat::Zero(values.size(), 1)));
  return j;
}

}  // namespace irpinn
