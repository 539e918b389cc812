#include "reid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "reid/kernels.hpp"

namespace reid {

namespace ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace ad

using ad::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

Tensor& grad_buf(Node& n) {
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
  for (int i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

bool any_requires(const std::vector<NodePtr>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

Var make(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (any_requires(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Var(n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

const Tensor& Var::value() const { return node_->value; }

const Tensor& Var::grad() const {
  if (node_->grad.empty()) node_->grad = Tensor::zeros(node_->value.shape());
  return node_->grad;
}

bool Var::requires_grad() const { return node_->requires_grad; }

void Var::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar root");
  // Iterative post-order DFS for reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  grad_buf(*node_)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
    if (n.parents[0]->requires_grad) axpy(grad_buf(*n.parents[0]), n.grad);
    if (n.parents[1]->requires_grad) axpy(grad_buf(*n.parents[1]), n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
    if (n.parents[0]->requires_grad) axpy(grad_buf(*n.parents[0]), n.grad);
    if (n.parents[1]->requires_grad) axpy(grad_buf(*n.parents[1]), n.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& g = grad_buf(*n.parents[0]);
      for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = grad_buf(*n.parents[1]);
      for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return make(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& g = grad_buf(*n.parents[0]);
      for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = grad_buf(*n.parents[1]);
      for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] *= s;
  return make(std::move(out), {a.node()},
              [s](Node& n) { axpy(grad_buf(*n.parents[0]), n.grad, s); });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] += s;
  return make(std::move(out), {a.node()},
              [](Node& n) { axpy(grad_buf(*n.parents[0]), n.grad); });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make(std::move(out), {a.node()}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) g[i] += n.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Tensor y = out;
  return make(std::move(out), {a.node()}, [y](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var pow_elem(const Var& a, double p) {
  Tensor out = a.value();
  for (int i = 0; i < out.size(); ++i) out[i] = std::pow(out[i], p);
  return make(std::move(out), {a.node()}, [p](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * p * std::pow(x[i], p - 1.0);
  });
}

// ---------------- linear algebra ----------------

Var matmul(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().dim(1) != b.value().dim(0))
    throw ShapeError("matmul: incompatible " + a.value().shape_str() + " x " +
                     b.value().shape_str());
  const int m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  Tensor out({m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  return make(std::move(out), {a.node(), b.node()}, [m, k, n](Node& nd) {
    const Tensor& av = nd.parents[0]->value;
    const Tensor& bv = nd.parents[1]->value;
    if (nd.parents[0]->requires_grad) {
      Tensor tmp({m, k});
      kernels::matmul_nt(nd.grad.data(), bv.data(), tmp.data(), m, n, k);
      axpy(grad_buf(*nd.parents[0]), tmp);
    }
    if (nd.parents[1]->requires_grad) {
      Tensor tmp({k, n});
      kernels::matmul_tn(av.data(), nd.grad.data(), tmp.data(), k, m, n);
      axpy(grad_buf(*nd.parents[1]), tmp);
    }
  });
}

Var transpose2d(const Var& a) {
  if (a.value().ndim() != 2) throw ShapeError("transpose2d: need 2D tensor");
  const int r = a.value().dim(0), c = a.value().dim(1);
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  return make(std::move(out), {a.node()}, [r, c](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g.at(i, j) += n.grad.at(j, i);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Var y = matmul(x, w);
  if (!b.defined()) return y;
  return add(y, broadcast_rows(b, y.value().dim(0)));
}

Var linear_vec(const Var& x, const Var& w, const Var& b) {
  Var row = reshape(x, {1, x.value().size()});
  Var y = linear(row, w, b);
  return reshape(y, {y.value().dim(1)});
}

// ---------------- shape ----------------

Var reshape(const Var& a, std::vector<int> shape) {
  if (shape_size(shape) != a.value().size())
    throw ShapeError("reshape: size mismatch to " + shape_to_string(shape));
  Tensor out(std::move(shape), std::vector<double>(a.value().data(),
                                                   a.value().data() + a.value().size()));
  return make(std::move(out), {a.node()},
              [](Node& n) { axpy(grad_buf(*n.parents[0]), n.grad); });
}

namespace {

// Concat along last axis for tensors that agree on all leading axes.
Var concat_last(const std::vector<Var>& xs, std::vector<int> out_shape, int lead, int total_c) {
  std::vector<int> widths;
  Tensor out(std::move(out_shape));
  int off = 0;
  std::vector<NodePtr> parents;
  for (const auto& x : xs) {
    const int c = x.value().size() / lead;
    widths.push_back(c);
    for (int i = 0; i < lead; ++i)
      for (int j = 0; j < c; ++j) out[i * total_c + off + j] = x.value()[i * c + j];
    off += c;
    parents.push_back(x.node());
  }
  return make(std::move(out), std::move(parents), [widths, lead, total_c](Node& n) {
    int off2 = 0;
    for (size_t p = 0; p < n.parents.size(); ++p) {
      const int c = widths[p];
      if (n.parents[p]->requires_grad) {
        Tensor& g = grad_buf(*n.parents[p]);
        for (int i = 0; i < lead; ++i)
          for (int j = 0; j < c; ++j) g[i * c + j] += n.grad[i * total_c + off2 + j];
      }
      off2 += c;
    }
  });
}

}  // namespace

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input");
  const int n = xs[0].value().dim(0);
  int total = 0;
  for (const auto& x : xs) {
    if (x.value().ndim() != 2 || x.value().dim(0) != n)
      throw ShapeError("concat_cols: row mismatch");
    total += x.value().dim(1);
  }
  return concat_last(xs, {n, total}, n, total);
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input");
  const int d0 = xs[0].value().dim(0), d1 = xs[0].value().dim(1);
  int total = 0;
  for (const auto& x : xs) {
    if (x.value().ndim() != 3 || x.value().dim(0) != d0 || x.value().dim(1) != d1)
      throw ShapeError("concat_channels: spatial mismatch");
    total += x.value().dim(2);
  }
  return concat_last(xs, {d0, d1, total}, d0 * d1, total);
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty input");
  const int d = xs[0].value().dim(1);
  int total = 0;
  for (const auto& x : xs) {
    if (x.value().ndim() != 2 || x.value().dim(1) != d)
      throw ShapeError("concat_rows: column mismatch");
    total += x.value().dim(0);
  }
  Tensor out({total, d});
  std::vector<NodePtr> parents;
  std::vector<int> heights;
  int off = 0;
  for (const auto& x : xs) {
    const int h = x.value().dim(0);
    for (int i = 0; i < h * d; ++i) out[off * d + i] = x.value()[i];
    off += h;
    heights.push_back(h);
    parents.push_back(x.node());
  }
  return make(std::move(out), std::move(parents), [heights, d](Node& n) {
    int off2 = 0;
    for (size_t p = 0; p < n.parents.size(); ++p) {
      if (n.parents[p]->requires_grad) {
        Tensor& g = grad_buf(*n.parents[p]);
        for (int i = 0; i < heights[p] * d; ++i) g[i] += n.grad[off2 * d + i];
      }
      off2 += heights[p];
    }
  });
}

Var slice_cols(const Var& x, int c0, int c1) {
  const int n = x.value().dim(0), c = x.value().dim(1);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out({n, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = x.value().at(i, c0 + j);
  return make(std::move(out), {x.node()}, [n, c, c0, w](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) g[i * c + c0 + j] += nd.grad[i * w + j];
  });
}

Var slice_rows(const Var& x, int r0, int r1) {
  const int n = x.value().dim(0), d = x.value().dim(1);
  if (r0 < 0 || r1 > n || r0 >= r1) throw ShapeError("slice_rows: bad range");
  const int h = r1 - r0;
  Tensor out({h, d});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.value().at(r0 + i, j);
  return make(std::move(out), {x.node()}, [r0, h, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < d; ++j) g[(r0 + i) * d + j] += nd.grad[i * d + j];
  });
}

Var select_row(const Var& x, int r) {
  const int n = x.value().dim(0), d = x.value().dim(1);
  if (r < 0 || r >= n) throw ShapeError("select_row: index out of range");
  Tensor out({d});
  for (int j = 0; j < d; ++j) out[j] = x.value().at(r, j);
  return make(std::move(out), {x.node()}, [r, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int j = 0; j < d; ++j) g[r * d + j] += nd.grad[j];
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  const int d = rows[0].value().size();
  Tensor out({static_cast<int>(rows.size()), d});
  std::vector<NodePtr> parents;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].value().size() != d) throw ShapeError("stack_rows: width mismatch");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = rows[i].value()[j];
    parents.push_back(rows[i].node());
  }
  return make(std::move(out), std::move(parents), [d](Node& nd) {
    for (size_t i = 0; i < nd.parents.size(); ++i) {
      if (!nd.parents[i]->requires_grad) continue;
      Tensor& g = grad_buf(*nd.parents[i]);
      for (int j = 0; j < d; ++j) g[j] += nd.grad[static_cast<int>(i) * d + j];
    }
  });
}

Var broadcast_rows(const Var& v, int n) {
  const int d = v.value().size();
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = v.value()[j];
  return make(std::move(out), {v.node()}, [n, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) g[j] += nd.grad[i * d + j];
  });
}

Var broadcast_spatial(const Var& v, int d0, int d1) {
  const int c = v.value().size();
  Tensor out({d0, d1, c});
  for (int i = 0; i < d0 * d1; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = v.value()[j];
  return make(std::move(out), {v.node()}, [d0, d1, c](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < d0 * d1; ++i)
      for (int j = 0; j < c; ++j) g[j] += nd.grad[i * c + j];
  });
}

// ---------------- reductions ----------------

Var sum_all(const Var& a) {
  double s = 0.0;
  for (int i = 0; i < a.value().size(); ++i) s += a.value()[i];
  return make(Tensor::scalar(s), {a.node()}, [](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / a.value().size()); }

Var mean_rows(const Var& a) {
  const int n = a.value().dim(0), d = a.value().dim(1);
  Tensor out({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += a.value().at(i, j);
  for (int j = 0; j < d; ++j) out[j] /= n;
  return make(std::move(out), {a.node()}, [n, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) g[i * d + j] += nd.grad[j] / n;
  });
}

Var max_rows(const Var& a) {
  const int n = a.value().dim(0), d = a.value().dim(1);
  Tensor out({d});
  std::vector<int> arg(static_cast<size_t>(d), 0);
  for (int j = 0; j < d; ++j) {
    double best = a.value().at(0, j);
    for (int i = 1; i < n; ++i)
      if (a.value().at(i, j) > best) {
        best = a.value().at(i, j);
        arg[static_cast<size_t>(j)] = i;
      }
    out[j] = best;
  }
  return make(std::move(out), {a.node()}, [arg, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int j = 0; j < d; ++j) g[arg[static_cast<size_t>(j)] * d + j] += nd.grad[j];
  });
}

Var spatial_mean(const Var& a) {
  const int lead = a.value().dim(0) * a.value().dim(1), c = a.value().dim(2);
  Tensor out({c});
  for (int i = 0; i < lead; ++i)
    for (int j = 0; j < c; ++j) out[j] += a.value()[i * c + j];
  for (int j = 0; j < c; ++j) out[j] /= lead;
  return make(std::move(out), {a.node()}, [lead, c](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < lead; ++i)
      for (int j = 0; j < c; ++j) g[i * c + j] += nd.grad[j] / lead;
  });
}

namespace {

Var reduce_extreme(const Var& a, bool want_max) {
  int arg = 0;
  double best = a.value()[0];
  for (int i = 1; i < a.value().size(); ++i) {
    const double v = a.value()[i];
    if (want_max ? v > best : v < best) {
      best = v;
      arg = i;
    }
  }
  return make(Tensor::scalar(best), {a.node()},
              [arg](Node& n) { grad_buf(*n.parents[0])[arg] += n.grad[0]; });
}

}  // namespace

Var reduce_min_all(const Var& a) { return reduce_extreme(a, false); }
Var reduce_max_all(const Var& a) { return reduce_extreme(a, true); }

// ---------------- nonlinear blocks ----------------

Var softmax_rows(const Var& x) {
  const int n = x.value().dim(0), d = x.value().dim(1);
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    double m = x.value().at(i, 0);
    for (int j = 1; j < d; ++j) m = std::max(m, x.value().at(i, j));
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      out.at(i, j) = std::exp(x.value().at(i, j) - m);
      z += out.at(i, j);
    }
    for (int j = 0; j < d; ++j) out.at(i, j) /= z;
  }
  Tensor y = out;
  return make(std::move(out), {x.node()}, [y, n, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += nd.grad[i * d + j] * y[i * d + j];
      for (int j = 0; j < d; ++j) g[i * d + j] += y[i * d + j] * (nd.grad[i * d + j] - dot);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int n = x.value().dim(0), d = x.value().dim(1);
  if (gain.value().size() != d || bias.value().size() != d)
    throw ShapeError("layer_norm_rows: gain/bias width mismatch");
  Tensor out({n, d});
  Tensor xh({n, d});
  std::vector<double> inv_sigma(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x.value().at(i, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = x.value().at(i, j) - mu;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      xh.at(i, j) = (x.value().at(i, j) - mu) * is;
      out.at(i, j) = gain.value()[j] * xh.at(i, j) + bias.value()[j];
    }
  }
  return make(std::move(out), {x.node(), gain.node(), bias.node()},
              [xh, inv_sigma, n, d](Node& nd) {
                const Tensor& gv = nd.parents[1]->value;
                if (nd.parents[1]->requires_grad) {
                  Tensor& gg = grad_buf(*nd.parents[1]);
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gg[j] += nd.grad[i * d + j] * xh[i * d + j];
                }
                if (nd.parents[2]->requires_grad) {
                  Tensor& gb = grad_buf(*nd.parents[2]);
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gb[j] += nd.grad[i * d + j];
                }
                if (nd.parents[0]->requires_grad) {
                  Tensor& gx = grad_buf(*nd.parents[0]);
                  for (int i = 0; i < n; ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                      const double t = nd.grad[i * d + j] * gv[j];
                      m1 += t;
                      m2 += t * xh[i * d + j];
                    }
                    m1 /= d;
                    m2 /= d;
                    for (int j = 0; j < d; ++j) {
                      const double t = nd.grad[i * d + j] * gv[j];
                      gx[i * d + j] += inv_sigma[static_cast<size_t>(i)] *
                                       (t - m1 - xh[i * d + j] * m2);
                    }
                  }
                }
              });
}

Var cross_entropy_logits(const Var& logits, int label) {
  const int c = logits.value().size();
  if (label < 0 || label >= c)
    throw ContractError("cross_entropy_logits: label " + std::to_string(label) +
                        " outside [0," + std::to_string(c) + ")");
  double m = logits.value()[0];
  for (int i = 1; i < c; ++i) m = std::max(m, logits.value()[i]);
  double z = 0.0;
  for (int i = 0; i < c; ++i) z += std::exp(logits.value()[i] - m);
  const double loss = m + std::log(z) - logits.value()[label];
  Tensor probs({c});
  for (int i = 0; i < c; ++i) probs[i] = std::exp(logits.value()[i] - m) / z;
  return make(Tensor::scalar(loss), {logits.node()}, [probs, label, c](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (int i = 0; i < c; ++i) g[i] += n.grad[0] * (probs[i] - (i == label ? 1.0 : 0.0));
  });
}

// ---------------- convolution ----------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.value().ndim() != 3 || w.value().ndim() != 4)
    throw ShapeError("conv2d: x must be 3D, w must be 4D");
  kernels::Conv2dDims dims;
  dims.d0 = x.value().dim(0);
  dims.d1 = x.value().dim(1);
  dims.cin = x.value().dim(2);
  dims.k = w.value().dim(0);
  dims.cout = w.value().dim(3);
  dims.stride = stride;
  dims.pad = pad;
  if (w.value().dim(1) != dims.k || w.value().dim(2) != dims.cin)
    throw ShapeError("conv2d: weight shape " + w.value().shape_str() + " incompatible with input " +
                     x.value().shape_str());
  if (b.defined() && b.value().size() != dims.cout) throw ShapeError("conv2d: bias width mismatch");
  if (dims.o0() <= 0 || dims.o1() <= 0) throw ShapeError("conv2d: empty output");
  Tensor out({dims.o0(), dims.o1(), dims.cout});
  kernels::conv2d_forward(x.value().data(), w.value().data(),
                          b.defined() ? b.value().data() : nullptr, out.data(), dims);
  std::vector<NodePtr> parents = {x.node(), w.node()};
  if (b.defined()) parents.push_back(b.node());
  return make(std::move(out), std::move(parents), [dims](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& wv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor tmp(xv.shape());
      kernels::conv2d_backward_input(n.grad.data(), wv.data(), tmp.data(), dims);
      axpy(grad_buf(*n.parents[0]), tmp);
    }
    const bool need_w = n.parents[1]->requires_grad;
    const bool need_b = n.parents.size() > 2 && n.parents[2]->requires_grad;
    if (need_w || need_b) {
      Tensor tw(wv.shape());
      Tensor tb({dims.cout});
      kernels::conv2d_backward_weights(n.grad.data(), xv.data(), tw.data(),
                                       need_b ? tb.data() : nullptr, dims);
      if (need_w) axpy(grad_buf(*n.parents[1]), tw);
      if (need_b) axpy(grad_buf(*n.parents[2]), tb);
    }
  });
}

// ---------------- gather / scatter ----------------

namespace {
int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }
}  // namespace

Var gather_points(const Var& x, const std::vector<Point>& pts) {
  const int d0 = x.value().dim(0), d1 = x.value().dim(1), c = x.value().dim(2);
  const int k = static_cast<int>(pts.size());
  Tensor out({k, c});
  std::vector<int> flat(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int px = clampi(pts[static_cast<size_t>(i)].x, 0, d0 - 1);
    const int py = clampi(pts[static_cast<size_t>(i)].y, 0, d1 - 1);
    flat[static_cast<size_t>(i)] = px * d1 + py;
    for (int j = 0; j < c; ++j) out.at(i, j) = x.value()[(px * d1 + py) * c + j];
  }
  return make(std::move(out), {x.node()}, [flat, c](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (size_t i = 0; i < flat.size(); ++i)
      for (int j = 0; j < c; ++j) g[flat[i] * c + j] += n.grad[static_cast<int>(i) * c + j];
  });
}

Var gather_patches(const Var& x, const std::vector<Point>& centers, int window) {
  if (window % 2 == 0) throw ConfigError("gather_patches: window must be odd");
  const int d0 = x.value().dim(0), d1 = x.value().dim(1), c = x.value().dim(2);
  const int k = static_cast<int>(centers.size());
  const int h = window / 2;
  const int row_w = window * window * c;
  Tensor out({k, row_w});
  std::vector<int> flat(static_cast<size_t>(k) * window * window);
  for (int i = 0; i < k; ++i) {
    int o = 0;
    for (int du = -h; du <= h; ++du) {
      for (int dv = -h; dv <= h; ++dv, ++o) {
        const int px = clampi(centers[static_cast<size_t>(i)].x + du, 0, d0 - 1);
        const int py = clampi(centers[static_cast<size_t>(i)].y + dv, 0, d1 - 1);
        flat[static_cast<size_t>(i) * window * window + o] = px * d1 + py;
        for (int j = 0; j < c; ++j) out[i * row_w + o * c + j] = x.value()[(px * d1 + py) * c + j];
      }
    }
  }
  return make(std::move(out), {x.node()}, [flat, c, window, row_w](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    const int cells = window * window;
    for (size_t i = 0; i < flat.size() / cells; ++i)
      for (int o = 0; o < cells; ++o)
        for (int j = 0; j < c; ++j)
          g[flat[i * cells + o] * c + j] += n.grad[static_cast<int>(i) * row_w + o * c + j];
  });
}

Var scatter_symmetric(const Var& pafs, const std::vector<std::pair<int, int>>& pairs, int k) {
  if (static_cast<int>(pairs.size()) != pafs.value().size())
    throw ShapeError("scatter_symmetric: pair/score count mismatch");
  Tensor out({k, k});
  for (size_t l = 0; l < pairs.size(); ++l) {
    const auto [i, j] = pairs[l];
    if (i < 0 || i >= k || j < 0 || j >= k || i == j)
      throw ContractError("scatter_symmetric: bad pair index");
    out.at(i, j) = pafs.value()[static_cast<int>(l)];
    out.at(j, i) = pafs.value()[static_cast<int>(l)];
  }
  return make(std::move(out), {pafs.node()}, [pairs, k](Node& n) {
    Tensor& g = grad_buf(*n.parents[0]);
    for (size_t l = 0; l < pairs.size(); ++l) {
      const auto [i, j] = pairs[l];
      g[static_cast<int>(l)] += n.grad[i * k + j] + n.grad[j * k + i];
    }
  });
}

Var minmax_normalize_offdiag(const Var& a) {
  if (a.value().ndim() != 2 || a.value().dim(0) != a.value().dim(1))
    throw ShapeError("minmax_normalize_offdiag: need a square matrix");
  const int k = a.value().dim(0);
  if (k < 2) throw ShapeError("minmax_normalize_offdiag: need k >= 2");
  int arg_min = -1, arg_max = -1;
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double v = a.value().at(i, j);
      if (arg_min < 0 || v < lo) {
        lo = v;
        arg_min = i * k + j;
      }
      if (arg_max < 0 || v > hi) {
        hi = v;
        arg_max = i * k + j;
      }
    }
  const double range = hi - lo;
  Tensor out({k, k});
  const bool degenerate = range < 1e-12;
  if (!degenerate) {
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) out.at(i, j) = (a.value().at(i, j) - lo) / range;
  }
  return make(std::move(out), {a.node()},
              [k, lo, hi, range, arg_min, arg_max, degenerate](Node& n) {
                if (degenerate) return;
                const Tensor& av = n.parents[0]->value;
                Tensor& g = grad_buf(*n.parents[0]);
                double dm = 0.0, dM = 0.0;  // accumulated onto the extreme entries
                for (int i = 0; i < k; ++i)
                  for (int j = 0; j < k; ++j) {
                    if (i == j) continue;
                    const double go = n.grad[i * k + j];
                    if (go == 0.0) continue;
                    g[i * k + j] += go / range;
                    dm += go * (av[i * k + j] - hi) / (range * range);
                    dM += go * (lo - av[i * k + j]) / (range * range);
                  }
                g[arg_min] += dm;
                g[arg_max] += dM;
              });
}

Var mask_rows(const Var& x, const std::vector<bool>& keep) {
  const int n = x.value().dim(0), d = x.value().dim(1);
  if (static_cast<int>(keep.size()) != n) throw ShapeError("mask_rows: mask length mismatch");
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    if (keep[static_cast<size_t>(i)])
      for (int j = 0; j < d; ++j) out.at(i, j) = x.value().at(i, j);
  return make(std::move(out), {x.node()}, [keep, d](Node& nd) {
    Tensor& g = grad_buf(*nd.parents[0]);
    for (size_t i = 0; i < keep.size(); ++i)
      if (keep[i])
        for (int j = 0; j < d; ++j)
          g[static_cast<int>(i) * d + j] += nd.grad[static_cast<int>(i) * d + j];
  });
}

}  // namespace reid
