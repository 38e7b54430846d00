#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace irpinn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid until assigned.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

enum class Op : std::uint8_t {
  Leaf,      // trainable input
  Constant,  // no gradient
  MatMul,    // a * b
  Add,       // a + b, same shape
  Sub,       // a - b
  CwiseMul,  // a .* b
  CwiseDiv,  // a ./ b
  Scale,     // a * s
  Shift,     // a + s
  Tanh,
  Exp,
  Sin,
  Cos,
  AddRow,   // a (n x m) + row (1 x m), broadcast over rows
  MulCol,   // a (n x m) .* col (n x 1), broadcast over columns
  Col,      // column slice
  HCat,     // horizontal concatenation
  SumAll,   // 1x1 sum of all entries
};

// Append-only record of batched matrix operations. Values are computed
// eagerly on recording; a reverse sweep from a scalar output accumulates
// adjoints. Single-writer: one evaluation per tape.
class Tape {
 public:
  struct Node {
    Op op;
    std::vector<int> args;
    double scalar = 0.0;
    int aux = 0;  // column index for Col
    Mat value;
    Mat grad;
    bool needs_grad = false;
  };

  Var leaf(Mat value);
  Var constant(Mat value);
  Var constant(double value);  // 1x1

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var cwise_div(Var a, Var b);
  Var scale(Var a, double s);
  Var shift(Var a, double s);
  Var tanh(Var a);
  Var exp(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var add_row(Var a, Var row);
  Var mul_col(Var a, Var col);
  Var col(Var a, int j);
  Var hcat(const std::vector<Var>& parts);
  Var sum_all(Var a);

  const Mat& value(Var v) const { return node(v).value; }
  const Mat& grad(Var v) const;

  void set_output(Var v);
  Var output() const { return output_; }

  // Reverse sweep from the recorded output (must be 1x1). Each node is
  // visited exactly once; visit_count() reports the sweep cost.
  void backward();

  std::size_t size() const { return nodes_.size(); }
  std::size_t visit_count() const { return visit_count_; }

  const Node& node(Var v) const;

 private:
  Node& node_mut(Var v);
  Var push(Node&& n);
  void check(Var v) const;

  std::vector<Node> nodes_;
  Var output_{};
  std::size_t visit_count_ = 0;
  bool swept_ = false;
};

// --- generic value operations -----------------------------------------------
//
// The jet recurrences are written once against this overload set and
// instantiated both for plain doubles and for tape variables.

inline double add(double a, double b) { return a + b; }
inline double sub(double a, double b) { return a - b; }
inline double mul(double a, double b) { return a * b; }
inline double div(double a, double b) { return a / b; }
inline double scale(double a, double s) { return a * s; }
inline double shift(double a, double s) { return a + s; }
inline double tanh(double a) { return std::tanh(a); }
inline double exp(double a) { return std::exp(a); }
inline double sin(double a) { return std::sin(a); }
inline double cos(double a) { return std::cos(a); }
inline double zeros_like(double) { return 0.0; }
inline double value_of(double a) { return a; }

inline Var add(Var a, Var b) { return a.tape->add(a, b); }
inline Var sub(Var a, Var b) { return a.tape->sub(a, b); }
inline Var mul(Var a, Var b) { return a.tape->cwise_mul(a, b); }
inline Var div(Var a, Var b) { return a.tape->cwise_div(a, b); }
inline Var scale(Var a, double s) { return a.tape->scale(a, s); }
inline Var shift(Var a, double s) { return a.tape->shift(a, s); }
inline Var tanh(Var a) { return a.tape->tanh(a); }
inline Var exp(Var a) { return a.tape->exp(a); }
inline Var sin(Var a) { return a.tape->sin(a); }
inline Var cos(Var a) { return a.tape->cos(a); }
inline Var zeros_like(Var a) {
  return a.tape->constant(Mat::Zero(a.tape->value(a).rows(), a.tape->value(a).cols()));
}

}  // namespace irpinn
