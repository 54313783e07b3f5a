#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sketchlab/tensor.hpp"

namespace sketchlab {

// ---------------------------------------------------------------------------
// Reverse-mode automatic differentiation over Tensor.
//
// Graphs are built eagerly: every op returns a Var (shared_ptr<Node>) whose
// backprop closure knows how to push its output gradient onto its parents.
// backward(loss, targets) walks the graph once in reverse topological order,
// visiting only nodes that can actually reach one of the target parameters,
// so the three differently-routed losses of the trainer each pay only for
// the subgraph they need.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated; empty until first accumulation
  bool requires_grad = false;
  bool is_param = false;
  std::vector<Var> parents;
  // Backprop receives the node itself (never captured in the closure: that
  // would create a shared_ptr cycle and leak the whole graph).
  std::function<void(Node&)> backprop;
  uint8_t flags = 0;  // traversal scratch, always reset by backward()

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    return grad;
  }
};

// --- gradient mode ----------------------------------------------------------

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// RAII guard: disables graph construction (pure inference) in its scope.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// --- node construction ------------------------------------------------------

inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

inline Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

inline Var make_param(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->is_param = true;
  return n;
}

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents)
      if (p->requires_grad) any = true;
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
  }
  return n;
}

namespace detail {
constexpr uint8_t kVisited = 1, kUseful = 2, kOrdered = 4;
}

// True when a backward pass should spend time producing p's gradient: the
// node requires grad and, inside a pruned backward, lies on a path to one of
// the targets.  (Outside backward all flags are clear, so this is just
// requires_grad.)
inline bool wants_grad(const Var& p) {
  if (!p->requires_grad) return false;
  if ((p->flags & detail::kVisited) && !(p->flags & detail::kUseful))
    return false;
  return true;
}

// Accumulate gradient g onto parent p, reducing over broadcast dims.
inline void accum_grad(const Var& p, const Tensor& g) {
  if (!wants_grad(p)) return;
  if (g.shape() == p->value.shape()) {
    p->ensure_grad() += g;
  } else {
    p->ensure_grad() += reduce_to(g, p->value.shape());
  }
}

// --- backward ---------------------------------------------------------------

// Propagates d(loss)/d(node) from a scalar loss to the target parameters.
// Only subgraph nodes from which a target is reachable are visited; target
// parameter grads ACCUMULATE (call zero_grad between steps).  Gradients on
// non-parameter intermediates are cleared on exit so a later backward pass
// over a shared subgraph starts from a clean slate.
inline void backward(const Var& loss, const std::vector<Var>& targets) {
  SK_CHECK(loss->value.size() == 1, "backward needs a scalar loss, got "
                                        << shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  using detail::kOrdered;
  using detail::kUseful;
  using detail::kVisited;

  std::unordered_set<Node*> target_set;
  for (const auto& t : targets) target_set.insert(t.get());

  // Iterative reverse-topological ordering from the loss (children before
  // parents).  Recursion is avoided: step counts reach thousands of nodes.
  std::vector<Node*> topo;
  {
    std::vector<std::pair<Node*, size_t>> stack;
    loss->flags |= kVisited;
    stack.emplace_back(loss.get(), 0);
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && !(p->flags & kVisited)) {
          p->flags |= kVisited;
          stack.emplace_back(p, 0);
        }
      } else {
        if (!(n->flags & kOrdered)) {
          n->flags |= kOrdered;
          topo.push_back(n);
        }
        stack.pop_back();
      }
    }
  }
  // topo is post-order: parents (leaf side) first, loss last.

  // A node is useful iff it is a target or any of its parents is useful;
  // post-order guarantees parents are classified before their consumers.
  for (Node* n : topo) {
    if (target_set.count(n)) n->flags |= kUseful;
    if (!(n->flags & kUseful)) {
      for (const auto& p : n->parents) {
        if (p->flags & kUseful) {
          n->flags |= kUseful;
          break;
        }
      }
    }
  }

  loss->ensure_grad().fill(1.0);
  for (size_t i = topo.size(); i-- > 0;) {  // loss first, leaves last
    Node* n = topo[i];
    if (!(n->flags & kUseful)) continue;
    if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
  }

  for (Node* n : topo) {
    n->flags = 0;
    if (!n->is_param) n->grad = Tensor();  // release; keeps reruns clean
  }
}

inline void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params)
    if (p->grad.size()) p->grad.zero();
}

// --- elementwise ops --------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  Tensor v = broadcast_binary(a->value, b->value,
                              [](double x, double y) { return x + y; });
  return make_op(std::move(v), {a, b}, [a, b](Node& self) {
    accum_grad(a, self.grad);
    accum_grad(b, self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tensor v = broadcast_binary(a->value, b->value,
                              [](double x, double y) { return x - y; });
  return make_op(std::move(v), {a, b}, [a, b](Node& self) {
    accum_grad(a, self.grad);
    Tensor neg = self.grad;
    neg *= -1.0;
    accum_grad(b, neg);
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tensor v = broadcast_binary(a->value, b->value,
                              [](double x, double y) { return x * y; });
  return make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (wants_grad(a))
      accum_grad(a, broadcast_binary(self.grad, b->value,
                                     [](double g, double y) { return g * y; }));
    if (wants_grad(b))
      accum_grad(b, broadcast_binary(self.grad, a->value,
                                     [](double g, double x) { return g * x; }));
  });
}

inline Var div(const Var& a, const Var& b) {
  Tensor v = broadcast_binary(a->value, b->value,
                              [](double x, double y) { return x / y; });
  return make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (wants_grad(a))
      accum_grad(a, broadcast_binary(self.grad, b->value,
                                     [](double g, double y) { return g / y; }));
    if (wants_grad(b)) {
      Tensor gy = broadcast_binary(self.grad, a->value,
                                   [](double g, double x) { return g * x; });
      accum_grad(b, broadcast_binary(gy, b->value, [](double gx, double y) {
                   return -gx / (y * y);
                 }));
    }
  });
}

inline Var neg(const Var& a) {
  Tensor v = a->value;
  v *= -1.0;
  return make_op(std::move(v), {a}, [a](Node& self) {
    Tensor g = self.grad;
    g *= -1.0;
    accum_grad(a, g);
  });
}

inline Var add_scalar(const Var& a, double s) {
  Tensor v = a->value;
  for (long i = 0; i < v.size(); ++i) v[i] += s;
  return make_op(std::move(v), {a},
                 [a](Node& self) { accum_grad(a, self.grad); });
}

inline Var mul_scalar(const Var& a, double s) {
  Tensor v = a->value;
  v *= s;
  return make_op(std::move(v), {a}, [a, s](Node& self) {
    Tensor g = self.grad;
    g *= s;
    accum_grad(a, g);
  });
}

namespace detail {
// Unary elementwise helper; dfn receives (input, output) and returns d out/d in.
inline Var unary(const Var& a, double (*fn)(double),
                 double (*dfn)(double, double)) {
  Tensor v(a->value.shape());
  for (long i = 0; i < v.size(); ++i) v[i] = fn(a->value[i]);
  return make_op(std::move(v), {a}, [a, dfn](Node& self) {
    Tensor g(self.value.shape());
    for (long i = 0; i < g.size(); ++i)
      g[i] = self.grad[i] * dfn(a->value[i], self.value[i]);
    accum_grad(a, g);
  });
}
}  // namespace detail

inline Var exp(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

// Branch keeps exp() in the underflow-safe direction for both signs.
inline double sigmoid_scalar(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, &sigmoid_scalar,
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope) {
  Tensor v(a->value.shape());
  for (long i = 0; i < v.size(); ++i) {
    double x = a->value[i];
    v[i] = x > 0 ? x : slope * x;
  }
  return make_op(std::move(v), {a}, [a, slope](Node& self) {
    Tensor g(self.value.shape());
    for (long i = 0; i < g.size(); ++i)
      g[i] = self.grad[i] * (a->value[i] > 0 ? 1.0 : slope);
    accum_grad(a, g);
  });
}

// --- reductions -------------------------------------------------------------

inline Var sum(const Var& a) {
  Tensor v = Tensor::scalar(a->value.sum());
  return make_op(std::move(v), {a}, [a](Node& self) {
    Tensor g = Tensor::full(a->value.shape(), self.grad[0]);
    accum_grad(a, g);
  });
}

inline Var mean(const Var& a) {
  long n = a->value.size();
  SK_CHECK(n > 0, "mean of empty tensor");
  Tensor v = Tensor::scalar(a->value.sum() / static_cast<double>(n));
  return make_op(std::move(v), {a}, [a, n](Node& self) {
    Tensor g = Tensor::full(a->value.shape(), self.grad[0] / n);
    accum_grad(a, g);
  });
}

// Sum over the last axis, keeping it as size 1: [..., N] -> [..., 1].
inline Var sum_last(const Var& a) {
  const Shape& s = a->value.shape();
  SK_CHECK(!s.empty(), "sum_last needs rank >= 1");
  int n = s.back();
  long rows = a->value.size() / std::max(1, n);
  Shape os = s;
  os.back() = 1;
  Tensor v(os);
  for (long r = 0; r < rows; ++r) {
    double acc = 0;
    for (int j = 0; j < n; ++j) acc += a->value[r * n + j];
    v[r] = acc;
  }
  return make_op(std::move(v), {a}, [a, rows, n](Node& self) {
    Tensor g(a->value.shape());
    for (long r = 0; r < rows; ++r)
      for (int j = 0; j < n; ++j) g[r * n + j] = self.grad[r];
    accum_grad(a, g);
  });
}

// --- shape ops ---------------------------------------------------------------

inline Var reshape(const Var& a, Shape s) {
  Tensor v = a->value.reshaped(std::move(s));
  return make_op(std::move(v), {a}, [a](Node& self) {
    accum_grad(a, self.grad.reshaped(a->value.shape()));
  });
}

// Concatenate along the last axis; all leading axes must match.
inline Var concat_last(const Var& a, const Var& b) {
  const Shape& sa = a->value.shape();
  const Shape& sb = b->value.shape();
  SK_CHECK(sa.size() == sb.size() && !sa.empty(),
           "concat_last rank mismatch " << shape_str(sa) << " vs "
                                        << shape_str(sb));
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    SK_CHECK(sa[i] == sb[i], "concat_last leading dims differ: "
                                 << shape_str(sa) << " vs " << shape_str(sb));
  int na = sa.back(), nb = sb.back();
  long rows = a->value.size() / std::max(1, na);
  Shape os = sa;
  os.back() = na + nb;
  Tensor v(os);
  for (long r = 0; r < rows; ++r) {
    for (int j = 0; j < na; ++j) v[r * (na + nb) + j] = a->value[r * na + j];
    for (int j = 0; j < nb; ++j)
      v[r * (na + nb) + na + j] = b->value[r * nb + j];
  }
  return make_op(std::move(v), {a, b}, [a, b, rows, na, nb](Node& self) {
    if (wants_grad(a)) {
      Tensor ga(a->value.shape());
      for (long r = 0; r < rows; ++r)
        for (int j = 0; j < na; ++j)
          ga[r * na + j] = self.grad[r * (na + nb) + j];
      accum_grad(a, ga);
    }
    if (wants_grad(b)) {
      Tensor gb(b->value.shape());
      for (long r = 0; r < rows; ++r)
        for (int j = 0; j < nb; ++j)
          gb[r * nb + j] = self.grad[r * (na + nb) + na + j];
      accum_grad(b, gb);
    }
  });
}

// Slice [start, start+len) of the last axis.
inline Var slice_last(const Var& a, int start, int len) {
  const Shape& s = a->value.shape();
  SK_CHECK(!s.empty(), "slice_last needs rank >= 1");
  int n = s.back();
  SK_CHECK(start >= 0 && len > 0 && start + len <= n,
           "slice_last [" << start << "," << start + len << ") out of " << n);
  long rows = a->value.size() / n;
  Shape os = s;
  os.back() = len;
  Tensor v(os);
  for (long r = 0; r < rows; ++r)
    for (int j = 0; j < len; ++j) v[r * len + j] = a->value[r * n + start + j];
  return make_op(std::move(v), {a}, [a, rows, n, start, len](Node& self) {
    Tensor g(a->value.shape());
    for (long r = 0; r < rows; ++r)
      for (int j = 0; j < len; ++j)
        g[r * n + start + j] = self.grad[r * len + j];
    accum_grad(a, g);
  });
}

// Value copy that blocks gradient flow.
inline Var detach(const Var& a) { return constant(a->value); }

// --- matrix products ---------------------------------------------------------

// 2-D matrix product with optional transposes: op(a) @ op(b).
inline Var matmul(const Var& a, const Var& b, bool ta = false,
                  bool tb = false) {
  SK_CHECK(a->value.rank() == 2 && b->value.rank() == 2,
           "matmul expects rank-2 inputs, got " << shape_str(a->value.shape())
                                                << " and "
                                                << shape_str(b->value.shape()));
  long am = a->value.dim(0), an = a->value.dim(1);
  long bm = b->value.dim(0), bn = b->value.dim(1);
  long M = ta ? an : am, Ka = ta ? am : an;
  long Kb = tb ? bn : bm, N = tb ? bm : bn;
  SK_CHECK(Ka == Kb, "matmul inner dims differ: " << Ka << " vs " << Kb);
  Tensor v({static_cast<int>(M), static_cast<int>(N)});
  {
    ECMap A = a->value.cmat(am, an);
    ECMap B = b->value.cmat(bm, bn);
    EMap C = v.mat(M, N);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return make_op(std::move(v), {a, b},
                 [a, b, ta, tb, am, an, bm, bn, M, N](Node& self) {
                   ECMap G = self.grad.cmat(M, N);
                   ECMap A = a->value.cmat(am, an);
                   ECMap B = b->value.cmat(bm, bn);
                   if (wants_grad(a)) {
                     Tensor ga({static_cast<int>(am), static_cast<int>(an)});
                     EMap GA = ga.mat(am, an);
                     if (!ta && !tb)
                       GA.noalias() = G * B.transpose();
                     else if (ta && !tb)
                       GA.noalias() = B * G.transpose();
                     else if (!ta && tb)
                       GA.noalias() = G * B;
                     else
                       GA.noalias() = B.transpose() * G.transpose();
                     accum_grad(a, ga);
                   }
                   if (wants_grad(b)) {
                     Tensor gb({static_cast<int>(bm), static_cast<int>(bn)});
                     EMap GB = gb.mat(bm, bn);
                     if (!ta && !tb)
                       GB.noalias() = A.transpose() * G;
                     else if (ta && !tb)
                       GB.noalias() = A * G;
                     else if (!ta && tb)
                       GB.noalias() = G.transpose() * A;
                     else
                       GB.noalias() = G.transpose() * A.transpose();
                     accum_grad(b, gb);
                   }
                 });
}

// Batched matrix product: [B,M,K] @ [B,K,N] -> [B,M,N], with transposes
// applied to the two trailing axes of each operand.
inline Var bmm(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  SK_CHECK(a->value.rank() == 3 && b->value.rank() == 3,
           "bmm expects rank-3 inputs, got " << shape_str(a->value.shape())
                                             << " and "
                                             << shape_str(b->value.shape()));
  int Ba = a->value.dim(0), ar = a->value.dim(1), ac = a->value.dim(2);
  int Bb = b->value.dim(0), br = b->value.dim(1), bc = b->value.dim(2);
  SK_CHECK(Ba == Bb, "bmm batch dims differ: " << Ba << " vs " << Bb);
  long M = ta ? ac : ar, Ka = ta ? ar : ac;
  long Kb = tb ? bc : br, N = tb ? br : bc;
  SK_CHECK(Ka == Kb, "bmm inner dims differ: " << Ka << " vs " << Kb);
  Tensor v({Ba, static_cast<int>(M), static_cast<int>(N)});
  for (int i = 0; i < Ba; ++i) {
    ECMap A(a->value.data() + static_cast<long>(i) * ar * ac, ar, ac);
    ECMap B(b->value.data() + static_cast<long>(i) * br * bc, br, bc);
    EMap C(v.data() + static_cast<long>(i) * M * N, M, N);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return make_op(
      std::move(v), {a, b}, [a, b, ta, tb, Ba, ar, ac, br, bc, M, N](Node& self) {
        Tensor ga, gb;
        if (wants_grad(a)) ga = Tensor(a->value.shape());
        if (wants_grad(b)) gb = Tensor(b->value.shape());
        for (int i = 0; i < Ba; ++i) {
          ECMap G(self.grad.data() + static_cast<long>(i) * M * N, M, N);
          ECMap A(a->value.data() + static_cast<long>(i) * ar * ac, ar, ac);
          ECMap B(b->value.data() + static_cast<long>(i) * br * bc, br, bc);
          if (wants_grad(a)) {
            EMap GA(ga.data() + static_cast<long>(i) * ar * ac, ar, ac);
            if (!ta && !tb)
              GA.noalias() = G * B.transpose();
            else if (ta && !tb)
              GA.noalias() = B * G.transpose();
            else if (!ta && tb)
              GA.noalias() = G * B;
            else
              GA.noalias() = B.transpose() * G.transpose();
          }
          if (wants_grad(b)) {
            EMap GB(gb.data() + static_cast<long>(i) * br * bc, br, bc);
            if (!ta && !tb)
              GB.noalias() = A.transpose() * G;
            else if (ta && !tb)
              GB.noalias() = A * G;
            else if (!ta && tb)
              GB.noalias() = G.transpose() * A;
            else
              GB.noalias() = G.transpose() * A.transpose();
          }
        }
        if (wants_grad(a)) accum_grad(a, ga);
        if (wants_grad(b)) accum_grad(b, gb);
      });
}

}  // namespace sketchlab
