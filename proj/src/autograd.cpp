#include "cvos/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace cvos::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(std::vector<double>& d, int rows, int cols) {
  return MapMat(d.data(), rows, cols);
}
ConstMapMat as_mat(const std::vector<double>& d, int rows, int cols) {
  return ConstMapMat(d.data(), rows, cols);
}

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("autograd: ") + what);
}

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col[(c*k + ky)*k + kx, oy*wo + ox] = x[c, oy*s - p + ky, ox*s - p + kx]
void im2col(const double* x, int channels, int h, int w, int k, int stride,
            int pad, double* col) {
  const int ho = conv_out(h, k, stride, pad);
  const int wo = conv_out(w, k, stride, pad);
  const int plane = ho * wo;
  for (int c = 0; c < channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int h, int w, int k, int stride,
            int pad, double* x) {
  const int ho = conv_out(h, k, stride, pad);
  const int wo = conv_out(w, k, stride, pad);
  const int plane = ho * wo;
  for (int c = 0; c < channels; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + static_cast<std::size_t>((c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * wo;
          double* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void accumulate(Node& parent, const Tensor& g) {
  if (!parent.requires_grad) return;
  Tensor& dst = parent.grad_buffer();
  for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
}

}  // namespace

Tensor::Tensor(std::vector<int> s, double fill)
    : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  require(data.size() == shape_numel(shape), "tensor data/shape mismatch");
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("autograd: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor& Node::grad_buffer() {
  if (grad.data.size() != value.data.size()) {
    grad = Tensor(value.shape, 0.0);
  }
  return grad;
}

Var Var::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var Var::leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->grad.data.size() == node_->value.data.size()) return node_->grad;
  return Tensor(node_->value.shape, 0.0);
}

Var make_op(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

Var make_op(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return make_op(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                 std::move(fn));
}

void backward(const Var& root) {
  require(root.defined() && root.size() == 1, "backward root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.data.size() == n->value.data.size()) {
      n->backward_fn(*n);
    }
  }
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require(x.value().rank() == 3 && w.value().rank() == 4, "conv2d ranks");
  const int c = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
  const int o = w.value().dim(0), k = w.value().dim(2);
  require(w.value().dim(1) == c && w.value().dim(3) == k, "conv2d weight shape");
  require(b.size() == static_cast<std::size_t>(o), "conv2d bias shape");
  const int ho = conv_out(h, k, stride, pad), wo = conv_out(wd, k, stride, pad);
  require(ho > 0 && wo > 0, "conv2d output empty");
  const int ckk = c * k * k, plane = ho * wo;

  std::vector<double> col(static_cast<std::size_t>(ckk) * plane);
  im2col(x.value().data.data(), c, h, wd, k, stride, pad, col.data());

  Tensor out({o, ho, wo});
  auto out_m = as_mat(out.data, o, plane);
  out_m.noalias() = as_mat(w.value().data, o, ckk) * as_mat(col, ckk, plane);
  for (int i = 0; i < o; ++i) out_m.row(i).array() += b.value().data[i];

  return make_op(
      std::move(out), {x, w, b},
      [col = std::move(col), c, h, wd, k, stride, pad, o, ckk, plane](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        auto g = as_mat(self.grad.data, o, plane);
        if (pw.requires_grad) {
          as_mat(pw.grad_buffer().data, o, ckk).noalias() +=
              g * as_mat(col, ckk, plane).transpose();
        }
        if (pb.requires_grad) {
          Tensor& gb = pb.grad_buffer();
          for (int i = 0; i < o; ++i) gb.data[i] += g.row(i).sum();
        }
        if (px.requires_grad) {
          std::vector<double> dcol(static_cast<std::size_t>(ckk) * plane);
          as_mat(dcol, ckk, plane).noalias() =
              as_mat(pw.value.data, o, ckk).transpose() * g;
          col2im(dcol.data(), c, h, wd, k, stride, pad, px.grad_buffer().data.data());
        }
      });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require(x.value().rank() == 3 && w.value().rank() == 4, "conv_transpose2d ranks");
  const int cin = x.value().dim(0), h = x.value().dim(1), wd = x.value().dim(2);
  const int cout = w.value().dim(1), k = w.value().dim(2);
  require(w.value().dim(0) == cin && w.value().dim(3) == k, "conv_transpose2d weight shape");
  require(b.size() == static_cast<std::size_t>(cout), "conv_transpose2d bias shape");
  const int ho = (h - 1) * stride - 2 * pad + k;
  const int wo = (wd - 1) * stride - 2 * pad + k;
  require(ho > 0 && wo > 0, "conv_transpose2d output empty");
  require(conv_out(ho, k, stride, pad) == h && conv_out(wo, k, stride, pad) == wd,
          "conv_transpose2d geometry");
  const int ckk = cout * k * k, plane = h * wd;

  std::vector<double> col(static_cast<std::size_t>(ckk) * plane);
  as_mat(col, ckk, plane).noalias() =
      as_mat(w.value().data, cin, ckk).transpose() * as_mat(x.value().data, cin, plane);
  Tensor out({cout, ho, wo});
  col2im(col.data(), cout, ho, wo, k, stride, pad, out.data.data());
  const int oplane = ho * wo;
  for (int i = 0; i < cout; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * oplane;
    const double bi = b.value().data[i];
    for (int j = 0; j < oplane; ++j) row[j] += bi;
  }

  return make_op(
      std::move(out), {x, w, b},
      [cin, cout, ho, wo, k, stride, pad, ckk, plane, oplane](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (pb.requires_grad) {
          Tensor& gb = pb.grad_buffer();
          for (int i = 0; i < cout; ++i) {
            const double* row = self.grad.data.data() + static_cast<std::size_t>(i) * oplane;
            double s = 0.0;
            for (int j = 0; j < oplane; ++j) s += row[j];
            gb.data[i] += s;
          }
        }
        if (!px.requires_grad && !pw.requires_grad) return;
        std::vector<double> dcol(static_cast<std::size_t>(ckk) * plane);
        im2col(self.grad.data.data(), cout, ho, wo, k, stride, pad, dcol.data());
        if (pw.requires_grad) {
          as_mat(pw.grad_buffer().data, cin, ckk).noalias() +=
              as_mat(px.value.data, cin, plane) * as_mat(dcol, ckk, plane).transpose();
        }
        if (px.requires_grad) {
          as_mat(px.grad_buffer().data, cin, plane).noalias() +=
              as_mat(pw.value.data, cin, ckk) * as_mat(dcol, ckk, plane);
        }
      });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (p.value.data[i] > 0.0) g.data[i] += self.grad.data[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double s = self.value.data[i];
      g.data[i] += self.grad.data[i] * s * (1.0 - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Var sub_scalar(const Var& x, double c) {
  Tensor out = x.value();
  for (double& v : out.data) v -= c;
  return make_op(std::move(out), {x},
                 [](Node& self) { accumulate(*self.parents[0], self.grad); });
}

Var scale(const Var& x, double c) {
  Tensor out = x.value();
  for (double& v : out.data) v *= c;
  return make_op(std::move(out), {x}, [c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * self.grad.data[i];
  });
}

Var sum(const Var& x) {
  const double s = std::accumulate(x.value().data.begin(), x.value().data.end(), 0.0);
  return make_op(Tensor({1}, s), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double go = self.grad.data[0];
    for (double& v : g.data) v += go;
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum arity");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].size() == 1, "weighted_sum expects scalars");
    s += weights[i] * terms[i].value().data[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_op(Tensor({1}, s), terms, [w = std::move(w)](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.grad_buffer().data[0] += w[i] * self.grad.data[0];
    }
  });
}

Var concat0(std::span<const Var> parts) {
  require(!parts.empty(), "concat0 of nothing");
  std::vector<int> shape = parts[0].shape();
  require(!shape.empty(), "concat0 of scalars");
  int lead = 0;
  for (const Var& p : parts) {
    require(p.value().rank() == static_cast<int>(shape.size()), "concat0 rank mismatch");
    for (std::size_t d = 1; d < shape.size(); ++d) {
      require(p.shape()[d] == shape[d], "concat0 trailing dims mismatch");
    }
    lead += p.shape()[0];
  }
  shape[0] = lead;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + off);
    off += p.size();
  }
  return make_op(std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (!p.requires_grad) continue;
      Tensor& g = p.grad_buffer();
      const double* src = self.grad.data.data() + offsets[i];
      for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] += src[j];
    }
  });
}

Var slice0(const Var& x, int begin, int count) {
  std::vector<int> shape = x.shape();
  require(!shape.empty() && begin >= 0 && count > 0 && begin + count <= shape[0], "slice0 range");
  const std::size_t inner = x.size() / static_cast<std::size_t>(shape[0]);
  shape[0] = count;
  const std::size_t off = inner * static_cast<std::size_t>(begin);
  Tensor out(shape);
  std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(off), out.data.size(), out.data.begin());
  return make_op(std::move(out), {x}, [off](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t j = 0; j < self.grad.data.size(); ++j) g.data[off + j] += self.grad.data[j];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  require(shape_numel(shape) == x.size(), "reshape size mismatch");
  Tensor out(std::move(shape), x.value().data);
  return make_op(std::move(out), {x},
                 [](Node& self) { accumulate(*self.parents[0], self.grad); });
}

Var transpose2d(const Var& x) {
  require(x.value().rank() == 2, "transpose2d expects a matrix");
  const int r = x.shape()[0], c = x.shape()[1];
  Tensor out({c, r});
  as_mat(out.data, c, r) = as_mat(x.value().data, r, c).transpose();
  return make_op(std::move(out), {x}, [r, c](Node& self) {
    as_mat(self.parents[0]->grad_buffer().data, r, c) +=
        as_mat(self.grad.data, c, r).transpose();
  });
}

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul expects matrices");
  const int ar = a.shape()[0], ac = a.shape()[1];
  const int br = b.shape()[0], bc = b.shape()[1];
  const int m = ta ? ac : ar, ka = ta ? ar : ac;
  const int kb = tb ? bc : br, n = tb ? br : bc;
  require(ka == kb, "matmul inner dims mismatch");
  Tensor out({m, n});
  auto am = as_mat(a.value().data, ar, ac);
  auto bm = as_mat(b.value().data, br, bc);
  auto om = as_mat(out.data, m, n);
  if (!ta && !tb) om.noalias() = am * bm;
  else if (ta && !tb) om.noalias() = am.transpose() * bm;
  else if (!ta && tb) om.noalias() = am * bm.transpose();
  else om.noalias() = am.transpose() * bm.transpose();

  return make_op(std::move(out), {a, b}, [ar, ac, br, bc, m, n, ta, tb](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto g = as_mat(self.grad.data, m, n);
    auto av = as_mat(pa.value.data, ar, ac);
    auto bv = as_mat(pb.value.data, br, bc);
    if (pa.requires_grad) {
      auto ga = as_mat(pa.grad_buffer().data, ar, ac);
      // d op(A) = G op(B)^T
      if (!ta && !tb) ga.noalias() += g * bv.transpose();
      else if (!ta && tb) ga.noalias() += g * bv;
      else if (ta && !tb) ga.noalias() += bv * g.transpose();
      else ga.noalias() += bv.transpose() * g.transpose();
    }
    if (pb.requires_grad) {
      auto gb = as_mat(pb.grad_buffer().data, br, bc);
      // d op(B) = op(A)^T G
      if (!ta && !tb) gb.noalias() += av.transpose() * g;
      else if (ta && !tb) gb.noalias() += av * g;
      else if (!ta && tb) gb.noalias() += g.transpose() * av;
      else gb.noalias() += g.transpose() * av.transpose();
    }
  });
}

Var softmax_rows(const Var& x) {
  require(x.value().rank() == 2, "softmax_rows expects a matrix");
  const int r = x.shape()[0], c = x.shape()[1];
  Tensor out = x.value();
  for (int i = 0; i < r; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= s;
  }
  return make_op(std::move(out), {x}, [r, c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += self.grad.data[base + j] * self.value.data[base + j];
      for (int j = 0; j < c; ++j) {
        g.data[base + j] += self.value.data[base + j] * (self.grad.data[base + j] - dot);
      }
    }
  });
}

Var normalize_rows(const Var& x, double eps) {
  require(x.value().rank() == 2, "normalize_rows expects a matrix");
  const int r = x.shape()[0], c = x.shape()[1];
  Tensor out = x.value();
  std::vector<double> norms(r);
  for (int i = 0; i < r; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * c;
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += row[j] * row[j];
    norms[i] = std::sqrt(s) + eps;
    for (int j = 0; j < c; ++j) row[j] /= norms[i];
  }
  return make_op(std::move(out), {x}, [r, c, norms = std::move(norms)](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += self.grad.data[base + j] * self.value.data[base + j];
      for (int j = 0; j < c; ++j) {
        g.data[base + j] += (self.grad.data[base + j] - dot * self.value.data[base + j]) / norms[i];
      }
    }
  });
}

Var pad_replicate(const Var& x, int bottom, int right) {
  require(x.value().rank() == 3 && bottom >= 0 && right >= 0, "pad_replicate args");
  if (bottom == 0 && right == 0) return x;
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int hp = h + bottom, wp = w + right;
  Tensor out({c, hp, wp});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < hp; ++y) {
      const int sy = std::min(y, h - 1);
      for (int xx = 0; xx < wp; ++xx) {
        const int sx = std::min(xx, w - 1);
        out.data[(static_cast<std::size_t>(ch) * hp + y) * wp + xx] =
            x.value().data[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
      }
    }
  }
  return make_op(std::move(out), {x}, [c, h, w, hp, wp](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < hp; ++y) {
        const int sy = std::min(y, h - 1);
        for (int xx = 0; xx < wp; ++xx) {
          const int sx = std::min(xx, w - 1);
          g.data[(static_cast<std::size_t>(ch) * h + sy) * w + sx] +=
              self.grad.data[(static_cast<std::size_t>(ch) * hp + y) * wp + xx];
        }
      }
    }
  });
}

Var crop(const Var& x, int h, int w) {
  require(x.value().rank() == 3, "crop expects [C,H,W]");
  const int c = x.shape()[0], hi = x.shape()[1], wi = x.shape()[2];
  require(h <= hi && w <= wi && h > 0 && w > 0, "crop larger than input");
  if (h == hi && w == wi) return x;
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const double* src = x.value().data.data() + (static_cast<std::size_t>(ch) * hi + y) * wi;
      std::copy(src, src + w, out.data.begin() + (static_cast<std::ptrdiff_t>(ch) * h + y) * w);
    }
  }
  return make_op(std::move(out), {x}, [c, h, w, hi, wi](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          g.data[(static_cast<std::size_t>(ch) * hi + y) * wi + xx] +=
              self.grad.data[(static_cast<std::size_t>(ch) * h + y) * w + xx];
        }
      }
    }
  });
}

}  // namespace cvos::ag
