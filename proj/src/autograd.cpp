#include "badcm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "badcm/error.hpp"

namespace badcm::ag {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Var Var::constant(Shape shape, std::vector<double> values) {
  if (values.size() != numel_of(shape)) throw ValidationError("tensor value size does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Var(std::move(n));
}

Var Var::constant(Shape shape, double fill) {
  const std::size_t count = numel_of(shape);
  return constant(std::move(shape), std::vector<double>(count, fill));
}

Var Var::parameter(Shape shape, std::vector<double> values) {
  Var v = constant(std::move(shape), std::move(values));
  v.node_->requires_grad = true;
  return v;
}

double Var::item() const {
  if (numel() != 1) throw ValidationError("item() on a non-scalar tensor");
  return node_->value[0];
}

Var Var::detach() const { return constant(node_->shape, node_->value); }

void Var::backward() const {
  if (numel() != 1) throw ValidationError("backward() requires a scalar");
  if (!node_->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed after the pass.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.clear();
  }
}

Var make_op(Shape shape, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (auto& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) throw ValidationError(std::string(op) + ": shape mismatch");
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, deriv](Node& self) {
    if (!an->requires_grad) return;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(an->value[i], self.value[i]);
  });
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  const double s = std::accumulate(a.value().begin(), a.value().end(), 0.0);
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](Node& self) {
    auto& g = an->grad_buffer();
    for (auto& x : g) x += self.grad[0];
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.numel());
  const double s = std::accumulate(a.value().begin(), a.value().end(), 0.0) / n;
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an, n](Node& self) {
    auto& g = an->grad_buffer();
    for (auto& x : g) x += self.grad[0] / n;
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw ValidationError("weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) s += weights[i] * scalars[i].item();
  std::vector<Var> parents(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return make_op({1}, {s}, parents, [parents, w](Node& self) {
    for (std::size_t i = 0; i < parents.size(); ++i) {
      auto& p = parents[i].node();
      if (p->requires_grad) p->grad_buffer()[0] += w[i] * self.grad[0];
    }
  });
}

namespace {

// Output columns ox for which ox*stride + k - pad lies in [0, size).
std::pair<int, int> valid_range(int out_size, int in_size, int k, int stride, int pad) {
  int lo = 0;
  while (lo < out_size && lo * stride + k - pad < 0) ++lo;
  int hi = out_size;
  while (hi > lo && (hi - 1) * stride + k - pad >= in_size) --hi;
  return {lo, hi};
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  if (x.shape().size() != 4 || weight.shape().size() != 4) throw ValidationError("conv2d expects 4-d tensors");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int CO = weight.dim(0), K = weight.dim(2);
  if (weight.dim(1) != C || weight.dim(3) != K) throw ValidationError("conv2d: weight shape mismatch");
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(CO)) throw ValidationError("conv2d: bias size");
  const int OH = (H + 2 * pad - K) / stride + 1;
  const int OW = (W + 2 * pad - K) / stride + 1;

  std::vector<double> out(static_cast<std::size_t>(N) * CO * OH * OW, 0.0);
  const double* xv = x.value().data();
  const double* wv = weight.value().data();

  std::vector<std::pair<int, int>> ry(K), rx(K);
  for (int k = 0; k < K; ++k) {
    ry[k] = valid_range(OH, H, k, stride, pad);
    rx[k] = valid_range(OW, W, k, stride, pad);
  }

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < CO; ++co) {
      double* o = out.data() + (static_cast<std::size_t>(n) * CO + co) * OH * OW;
      if (bias.defined()) std::fill(o, o + OH * OW, bias.value()[co]);
      for (int ci = 0; ci < C; ++ci) {
        const double* xi = xv + (static_cast<std::size_t>(n) * C + ci) * H * W;
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const double w = wv[((static_cast<std::size_t>(co) * C + ci) * K + ky) * K + kx];
            for (int oy = ry[ky].first; oy < ry[ky].second; ++oy) {
              const double* xrow = xi + static_cast<std::size_t>(oy * stride + ky - pad) * W;
              double* orow = o + static_cast<std::size_t>(oy) * OW;
              for (int ox = rx[kx].first; ox < rx[kx].second; ++ox) orow[ox] += w * xrow[ox * stride + kx - pad];
            }
          }
        }
      }
    }
  }

  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op({N, CO, OH, OW}, std::move(out), parents,
                 [=](Node& self) {
                   const double* go = self.grad.data();
                   double* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
                   double* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
                   const double* xv2 = xn->value.data();
                   const double* wv2 = wn->value.data();
                   if (bn && bn->requires_grad) {
                     auto& gb = bn->grad_buffer();
                     for (int n = 0; n < N; ++n)
                       for (int co = 0; co < CO; ++co) {
                         const double* g = go + (static_cast<std::size_t>(n) * CO + co) * OH * OW;
                         gb[co] += std::accumulate(g, g + OH * OW, 0.0);
                       }
                   }
                   for (int n = 0; n < N; ++n) {
                     for (int co = 0; co < CO; ++co) {
                       const double* g = go + (static_cast<std::size_t>(n) * CO + co) * OH * OW;
                       for (int ci = 0; ci < C; ++ci) {
                         const std::size_t xoff = (static_cast<std::size_t>(n) * C + ci) * H * W;
                         for (int ky = 0; ky < K; ++ky) {
                           for (int kx = 0; kx < K; ++kx) {
                             const std::size_t widx = ((static_cast<std::size_t>(co) * C + ci) * K + ky) * K + kx;
                             const double w = wv2[widx];
                             double wacc = 0.0;
                             for (int oy = ry[ky].first; oy < ry[ky].second; ++oy) {
                               const std::size_t row = xoff + static_cast<std::size_t>(oy * stride + ky - pad) * W;
                               const double* grow = g + static_cast<std::size_t>(oy) * OW;
                               for (int ox = rx[kx].first; ox < rx[kx].second; ++ox) {
                                 const std::size_t xi = row + ox * stride + kx - pad;
                                 if (gx) gx[xi] += w * grow[ox];
                                 wacc += xv2[xi] * grow[ox];
                               }
                             }
                             if (gw) gw[widx] += wacc;
                           }
                         }
                       }
                     }
                   }
                 });
}

Var upsample2x(const Var& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(N) * C * 4 * H * W);
  const double* xv = x.value().data();
  for (int p = 0; p < N * C; ++p)
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx)
        out[(static_cast<std::size_t>(p) * 2 * H + y) * 2 * W + xx] = xv[(static_cast<std::size_t>(p) * H + y / 2) * W + xx / 2];
  auto xn = x.node();
  return make_op({N, C, 2 * H, 2 * W}, std::move(out), {x}, [=](Node& self) {
    auto& g = xn->grad_buffer();
    for (int p = 0; p < N * C; ++p)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx)
          g[(static_cast<std::size_t>(p) * H + y / 2) * W + xx / 2] += self.grad[(static_cast<std::size_t>(p) * 2 * H + y) * 2 * W + xx];
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const int N = a.dim(0), CA = a.dim(1), CB = b.dim(1), H = a.dim(2), W = a.dim(3);
  if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W) throw ValidationError("concat_channels: shape mismatch");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> out(static_cast<std::size_t>(N) * (CA + CB) * plane);
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.value().data() + n * CA * plane, CA * plane, out.data() + n * (CA + CB) * plane);
    std::copy_n(b.value().data() + n * CB * plane, CB * plane, out.data() + (n * (CA + CB) + CA) * plane);
  }
  auto an = a.node(), bn = b.node();
  return make_op({N, CA + CB, H, W}, std::move(out), {a, b}, [=](Node& self) {
    for (int n = 0; n < N; ++n) {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < CA * plane; ++i) g[n * CA * plane + i] += self.grad[n * (CA + CB) * plane + i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < CB * plane; ++i) g[n * CB * plane + i] += self.grad[(n * (CA + CB) + CA) * plane + i];
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const int N = x.dim(0), IN = x.dim(1), OUT = weight.dim(0);
  if (weight.dim(1) != IN) throw ValidationError("linear: weight shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(N) * OUT);
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < OUT; ++o) {
      double s = bias.defined() ? bias.value()[o] : 0.0;
      for (int i = 0; i < IN; ++i) s += wv[o * IN + i] * xv[n * IN + i];
      out[n * OUT + o] = s;
    }
  auto xn = x.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op({N, OUT}, std::move(out), parents, [=](Node& self) {
    const double* g = self.grad.data();
    if (xn->requires_grad) {
      auto& gx = xn->grad_buffer();
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < OUT; ++o)
          for (int i = 0; i < IN; ++i) gx[n * IN + i] += g[n * OUT + o] * wn->value[o * IN + i];
    }
    if (wn->requires_grad) {
      auto& gw = wn->grad_buffer();
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < OUT; ++o)
          for (int i = 0; i < IN; ++i) gw[o * IN + i] += g[n * OUT + o] * xn->value[n * IN + i];
    }
    if (bn && bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < OUT; ++o) gb[o] += g[n * OUT + o];
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const int N = a.dim(0), D = a.dim(1), M = b.dim(0);
  if (b.dim(1) != D) throw ValidationError("matmul_nt: inner dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(N) * M);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < M; ++j) {
      double s = 0.0;
      for (int d = 0; d < D; ++d) s += a.value()[i * D + d] * b.value()[j * D + d];
      out[i * M + j] = s;
    }
  auto an = a.node(), bn = b.node();
  return make_op({N, M}, std::move(out), {a, b}, [=](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j)
          for (int d = 0; d < D; ++d) ga[i * D + d] += self.grad[i * M + j] * bn->value[j * D + d];
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j)
          for (int d = 0; d < D; ++d) gb[j * D + d] += self.grad[i * M + j] * an->value[i * D + d];
    }
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  const int N = a.dim(0), D = a.dim(1);
  std::vector<double> out(a.numel()), norms(N);
  for (int i = 0; i < N; ++i) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += a.value()[i * D + d] * a.value()[i * D + d];
    norms[i] = std::sqrt(s) + eps;
    for (int d = 0; d < D; ++d) out[i * D + d] = a.value()[i * D + d] / norms[i];
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [=](Node& self) {
    auto& g = an->grad_buffer();
    for (int i = 0; i < N; ++i) {
      double dot = 0.0;
      for (int d = 0; d < D; ++d) dot += self.grad[i * D + d] * self.value[i * D + d];
      for (int d = 0; d < D; ++d) g[i * D + d] += (self.grad[i * D + d] - self.value[i * D + d] * dot) / norms[i];
    }
  });
}

Var cosine_rows(const Var& a, const Var& b, double eps) {
  require_same_shape(a, b, "cosine_rows");
  const int N = a.dim(0), D = a.dim(1);
  std::vector<double> out(N), na(N), nb(N), dots(N);
  for (int i = 0; i < N; ++i) {
    double sa = 0, sb = 0, sd = 0;
    for (int d = 0; d < D; ++d) {
      const double x = a.value()[i * D + d], y = b.value()[i * D + d];
      sa += x * x;
      sb += y * y;
      sd += x * y;
    }
    na[i] = std::sqrt(sa);
    nb[i] = std::sqrt(sb);
    dots[i] = sd;
    const double denom = na[i] * nb[i];
    out[i] = denom > eps ? sd / denom : 0.0;
  }
  auto an = a.node(), bn = b.node();
  return make_op({N}, std::move(out), {a, b}, [=](Node& self) {
    for (int i = 0; i < N; ++i) {
      const double denom = na[i] * nb[i];
      if (denom <= eps) continue;
      const double g = self.grad[i], c = self.value[i];
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (int d = 0; d < D; ++d)
          ga[i * D + d] += g * (bn->value[i * D + d] / denom - c * an->value[i * D + d] / (na[i] * na[i]));
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (int d = 0; d < D; ++d)
          gb[i * D + d] += g * (an->value[i * D + d] / denom - c * bn->value[i * D + d] / (nb[i] * nb[i]));
      }
    }
  });
}

Var bce_with_logits(const Var& logits, std::span<const double> targets) {
  if (targets.size() != logits.numel()) throw ValidationError("bce_with_logits: target size mismatch");
  const double n = static_cast<double>(logits.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) s += softplus(logits.value()[i]) - targets[i] * logits.value()[i];
  auto ln = logits.node();
  std::vector<double> t(targets.begin(), targets.end());
  return make_op({1}, {s / n}, {logits}, [ln, t, n](Node& self) {
    auto& g = ln->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * (sigmoid_scalar(ln->value[i]) - t[i]) / n;
  });
}

Var bce_with_logits(const Var& logits, double target) {
  std::vector<double> t(logits.numel(), target);
  return bce_with_logits(logits, t);
}

Var cross_entropy_diagonal(const Var& logits) {
  const int N = logits.dim(0);
  if (logits.dim(1) != N) throw ValidationError("cross_entropy_diagonal expects square logits");
  std::vector<double> probs(static_cast<std::size_t>(N) * N);
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const double* row = logits.value().data() + i * N;
    const double mx = *std::max_element(row, row + N);
    double z = 0.0;
    for (int j = 0; j < N; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < N; ++j) probs[i * N + j] = std::exp(row[j] - lse);
    total += lse - row[i];
  }
  auto ln = logits.node();
  return make_op({1}, {total / N}, {logits}, [ln, probs, N](Node& self) {
    auto& g = ln->grad_buffer();
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) g[i * N + j] += self.grad[0] * (probs[i * N + j] - (i == j ? 1.0 : 0.0)) / N;
  });
}

}  // namespace badcm::ag

namespace badcm::ag {

Var cross_entropy_positives(const Var& logits, std::span<const std::uint8_t> positive) {
  if (logits.shape().size() != 2) throw ValidationError("cross_entropy_positives expects [N,M] logits");
  const int N = logits.dim(0), M = logits.dim(1);
  if (positive.size() != static_cast<std::size_t>(N) * M) throw ValidationError("positive mask shape mismatch");
  std::vector<double> coeff(static_cast<std::size_t>(N) * M, 0.0);
  double total = 0.0;
  int rows = 0;
  for (int i = 0; i < N; ++i) {
    const double* row = logits.value().data() + static_cast<std::size_t>(i) * M;
    const std::uint8_t* pos = positive.data() + static_cast<std::size_t>(i) * M;
    if (std::none_of(pos, pos + M, [](std::uint8_t p) { return p != 0; })) continue;
    const double mx = *std::max_element(row, row + M);
    double z_all = 0.0, z_pos = 0.0;
    for (int j = 0; j < M; ++j) {
      const double e = std::exp(row[j] - mx);
      z_all += e;
      if (pos[j]) z_pos += e;
    }
    total += std::log(z_all) - std::log(z_pos);
    for (int j = 0; j < M; ++j) {
      const double e = std::exp(row[j] - mx);
      coeff[static_cast<std::size_t>(i) * M + j] = e / z_all - (pos[j] ? e / z_pos : 0.0);
    }
    ++rows;
  }
  if (rows == 0) return Var::constant({1}, 0.0);
  auto ln = logits.node();
  return make_op({1}, {total / rows}, {logits}, [ln, coeff = std::move(coeff), rows](Node& self) {
    auto& g = ln->grad_buffer();
    for (std::size_t k = 0; k < coeff.size(); ++k) g[k] += self.grad[0] * coeff[k] / rows;
  });
}

}  // namespace badcm::ag
