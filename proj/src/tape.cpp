#include "irpinn/tape.hpp"

#include <cmath>

namespace irpinn {

const Tape::Node& Tape::node(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.idx)];
}

Tape::Node& Tape::node_mut(Var v) {
  check(v);
  return nodes_[static_cast<std::size_t>(v.idx)];
}

void Tape::check(Var v) const {
  if (v.tape != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Var does not belong to this tape");
}

Var Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Mat value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

namespace {
void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("shape mismatch in ") + what);
}
}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  if (va.cols() != vb.rows()) throw std::invalid_argument("shape mismatch in matmul");
  Node n;
  n.op = Op::MatMul;
  n.args = {a.idx, b.idx};
  n.value.noalias() = va * vb;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

#define IRPINN_BINARY(NAME, OP, EXPR)                           \
  Var Tape::NAME(Var a, Var b) {                                \
    const Mat& va = node(a).value;                              \
    const Mat& vb = node(b).value;                              \
    require_same_shape(va, vb, #NAME);                          \
    Node n;                                                     \
    n.op = Op::OP;                                              \
    n.args = {a.idx, b.idx};                                    \
    n.value = EXPR;                                             \
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;    \
    return push(std::move(n));                                  \
  }

IRPINN_BINARY(add, Add, va + vb)
IRPINN_BINARY(sub, Sub, va - vb)
IRPINN_BINARY(cwise_mul, CwiseMul, va.cwiseProduct(vb))
#undef IRPINN_BINARY

Var Tape::cwise_div(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  require_same_shape(va, vb, "cwise_div");
  Node n;
  n.op = Op::CwiseDiv;
  n.args = {a.idx, b.idx};
  n.value = va.cwiseQuotient(vb);
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

#define IRPINN_UNARY(NAME, OP, EXPR)         \
  Var Tape::NAME(Var a) {                    \
    const Mat& va = node(a).value;           \
    Node n;                                  \
    n.op = Op::OP;                           \
    n.args = {a.idx};                        \
    n.value = EXPR;                          \
    n.needs_grad = node(a).needs_grad;       \
    return push(std::move(n));               \
  }

IRPINN_UNARY(tanh, Tanh, va.array().tanh().matrix())
IRPINN_UNARY(exp, Exp, va.array().exp().matrix())
IRPINN_UNARY(sin, Sin, va.array().sin().matrix())
IRPINN_UNARY(cos, Cos, va.array().cos().matrix())
#undef IRPINN_UNARY

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.args = {a.idx};
  n.scalar = s;
  n.value = node(a).value * s;
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::shift(Var a, double s) {
  Node n;
  n.op = Op::Shift;
  n.args = {a.idx};
  n.scalar = s;
  n.value = node(a).value.array() + s;
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
  const Mat& va = node(a).value;
  const Mat& vr = node(row).value;
  if (vr.rows() != 1 || vr.cols() != va.cols())
    throw std::invalid_argument("shape mismatch in add_row");
  Node n;
  n.op = Op::AddRow;
  n.args = {a.idx, row.idx};
  n.value = va.rowwise() + vr.row(0);
  n.needs_grad = node(a).needs_grad || node(row).needs_grad;
  return push(std::move(n));
}

Var Tape::mul_col(Var a, Var colv) {
  const Mat& va = node(a).value;
  const Mat& vc = node(colv).value;
  if (vc.cols() != 1 || vc.rows() != va.rows())
    throw std::invalid_argument("shape mismatch in mul_col");
  Node n;
  n.op = Op::MulCol;
  n.args = {a.idx, colv.idx};
  n.value = va.array().colwise() * vc.col(0).array();
  n.needs_grad = node(a).needs_grad || node(colv).needs_grad;
  return push(std::move(n));
}

Var Tape::col(Var a, int j) {
  const Mat& va = node(a).value;
  if (j < 0 || j >= va.cols()) throw std::invalid_argument("column index out of range");
  Node n;
  n.op = Op::Col;
  n.args = {a.idx};
  n.aux = j;
  n.value = va.col(j);
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

Var Tape::hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat of nothing");
  Eigen::Index rows = node(parts[0]).value.rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (Var p : parts) {
    const Mat& v = node(p).value;
    if (v.rows() != rows) throw std::invalid_argument("row mismatch in hcat");
    cols += v.cols();
    needs = needs || node(p).needs_grad;
  }
  Node n;
  n.op = Op::HCat;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Mat& v = node(p).value;
    n.value.middleCols(at, v.cols()) = v;
    at += v.cols();
    n.args.push_back(p.idx);
  }
  n.needs_grad = needs;
  return push(std::move(n));
}

Var Tape::sum_all(Var a) {
  Node n;
  n.op = Op::SumAll;
  n.args = {a.idx};
  n.value = Mat::Constant(1, 1, node(a).value.sum());
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

void Tape::set_output(Var v) {
  check(v);
  if (node(v).value.rows() != 1 || node(v).value.cols() != 1)
    throw std::invalid_argument("tape output must be scalar (1x1)");
  output_ = v;
}

const Mat& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!swept_) throw std::logic_error("backward() has not been run");
  return n.grad;
}

void Tape::backward() {
  if (!output_.valid()) throw std::logic_error("tape output not set");
  visit_count_ = 0;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  auto& out = nodes_[static_cast<std::size_t>(output_.idx)];
  out.grad = Mat::Ones(1, 1);

  auto acc = [&](int idx, const Mat& g) {
    Node& t = nodes_[static_cast<std::size_t>(idx)];
    if (!t.needs_grad) return;
    if (t.grad.size() == 0)
      t.grad = g;
    else
      t.grad += g;
  };

  for (int i = output_.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    ++visit_count_;
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatMul: {
        const Mat& va = nodes_[n.args[0]].value;
        const Mat& vb = nodes_[n.args[1]].value;
        if (nodes_[n.args[0]].needs_grad) {
          Node& t = nodes_[n.args[0]];
          if (t.grad.size() == 0) t.grad = Mat::Zero(va.rows(), va.cols());
          t.grad.noalias() += g * vb.transpose();
        }
        if (nodes_[n.args[1]].needs_grad) {
          Node& t = nodes_[n.args[1]];
          if (t.grad.size() == 0) t.grad = Mat::Zero(vb.rows(), vb.cols());
          t.grad.noalias() += va.transpose() * g;
        }
        break;
      }
      case Op::Add:
        acc(n.args[0], g);
        acc(n.args[1], g);
        break;
      case Op::Sub:
        acc(n.args[0], g);
        acc(n.args[1], -g);
        break;
      case Op::CwiseMul:
        acc(n.args[0], g.cwiseProduct(nodes_[n.args[1]].value));
        acc(n.args[1], g.cwiseProduct(nodes_[n.args[0]].value));
        break;
      case Op::CwiseDiv: {
        const Mat& vb = nodes_[n.args[1]].value;
        acc(n.args[0], g.cwiseQuotient(vb));
        acc(n.args[1], -(g.cwiseProduct(n.value).cwiseQuotient(vb)));
        break;
      }
      case Op::Scale:
        acc(n.args[0], g * n.scalar);
        break;
      case Op::Shift:
        acc(n.args[0], g);
        break;
      case Op::Tanh:
        acc(n.args[0], (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::Exp:
        acc(n.args[0], g.cwiseProduct(n.value));
        break;
      case Op::Sin:
        acc(n.args[0], (g.array() * nodes_[n.args[0]].value.array().cos()).matrix());
        break;
      case Op::Cos:
        acc(n.args[0], (-g.array() * nodes_[n.args[0]].value.array().sin()).matrix());
        break;
      case Op::AddRow:
        acc(n.args[0], g);
        acc(n.args[1], g.colwise().sum());
        break;
      case Op::MulCol: {
        const Mat& va = nodes_[n.args[0]].value;
        const Mat& vc = nodes_[n.args[1]].value;
        acc(n.args[0], (g.array().colwise() * vc.col(0).array()).matrix());
        acc(n.args[1], g.cwiseProduct(va).rowwise().sum());
        break;
      }
      case Op::Col: {
        Node& t = nodes_[n.args[0]];
        if (t.needs_grad) {
          if (t.grad.size() == 0) t.grad = Mat::Zero(t.value.rows(), t.value.cols());
          t.grad.col(n.aux) += g;
        }
        break;
      }
      case Op::HCat: {
        Eigen::Index at = 0;
        for (int a : n.args) {
          Node& t = nodes_[static_cast<std::size_t>(a)];
          acc(a, g.middleCols(at, t.value.cols()));
          at += t.value.cols();
        }
        break;
      }
      case Op::SumAll:
        acc(n.args[0], Mat::Constant(nodes_[n.args[0]].value.rows(),
                                     nodes_[n.args[0]].value.cols(), g(0, 0)));
        break;
    }
  }
  swept_ = true;
}

}  // namespace irpinn
