#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// Reverse-mode autodiff over Tensor values. A Var is a handle to a graph
// node; ops build the tape, backward() walks it once in reverse topological
// order. Graphs are per-forward-pass and discarded after the step.

namespace ad {
struct Node;
}

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }
  static Var scalar(double v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;  // valid after backward(); zeros if untouched
  bool requires_grad() const;
  const std::vector<int>& shape() const { return value().shape(); }
  int size() const { return value().size(); }

  // Runs reverse-mode accumulation from this scalar node.
  void backward() const;

  explicit Var(std::shared_ptr<ad::Node> n) : node_(std::move(n)) {}
  const std::shared_ptr<ad::Node>& node() const { return node_; }

 private:
  std::shared_ptr<ad::Node> node_;
};

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var pow_elem(const Var& a, double p);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);              // [m,k]x[k,n]
Var transpose2d(const Var& a);
Var linear(const Var& x, const Var& w, const Var& b);  // [n,din]x[din,dout] + row bias
Var linear_vec(const Var& x, const Var& w, const Var& b);  // [din] -> [dout]

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var concat_cols(const std::vector<Var>& xs);          // [n,ci] -> [n, sum ci]
Var concat_rows(const std::vector<Var>& xs);          // [ni,d] -> [sum ni, d]
Var concat_channels(const std::vector<Var>& xs);      // [d0,d1,ci] -> [d0,d1,sum ci]
Var slice_cols(const Var& x, int c0, int c1);         // [n,c] -> [n, c1-c0)
Var slice_rows(const Var& x, int r0, int r1);         // [n,d] -> [r1-r0, d]
Var select_row(const Var& x, int r);                  // [n,d] -> [d]
Var stack_rows(const std::vector<Var>& rows);         // K x [d] -> [K,d]
Var broadcast_rows(const Var& v, int n);              // [d] -> [n,d]
Var broadcast_spatial(const Var& v, int d0, int d1);  // [c] -> [d0,d1,c]

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_rows(const Var& a);     // [n,d] -> [d]
Var max_rows(const Var& a);      // [n,d] -> [d], argmax routing per column
Var spatial_mean(const Var& a);  // [d0,d1,c] -> [c]
Var reduce_min_all(const Var& a);  // -> scalar, grad to first arg-min
Var reduce_max_all(const Var& a);

// ---- nonlinear blocks ----
Var softmax_rows(const Var& x);  // [n,d]
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var cross_entropy_logits(const Var& logits, int label);  // [c] -> scalar

// ---- convolution ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// ---- gather / scatter ----
struct Point {
  int x = 0, y = 0;  // x indexes dim0, y indexes dim1
};
Var gather_points(const Var& x, const std::vector<Point>& pts);           // [d0,d1,c] -> [K,c]
Var gather_patches(const Var& x, const std::vector<Point>& centers, int window);  // [K,w*w*c]
// Symmetric K x K matrix from per-pair scalars; entry (i,j)=(j,i)=pafs[l].
Var scatter_symmetric(const Var& pafs, const std::vector<std::pair<int, int>>& pairs, int k);

// ---- zero rows by mask (keypoint confidence gating) ----
Var mask_rows(const Var& x, const std::vector<bool>& keep);

// Min-max normalization of a square matrix over its off-diagonal entries,
// diagonal pinned to zero. Degenerate range (max == min) maps to the zero
// matrix. Backward routes the min/max dependence to the first extreme entry
// in row-major order.
Var minmax_normalize_offdiag(const Var& a);

}  // namespace reid
