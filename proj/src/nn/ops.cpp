#include "fakeshield/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fakeshield::nn {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

Node& parent(Node& self, size_t i) { return *self.parents[i]; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(g * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(g * pb.value);
    if (pb.requires_grad) pb.accumulate(g.transpose() * pa.value);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a}, [](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g.transpose());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return make_result(std::move(out), {a, b}, [](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g);
    parent(self, 1).accumulate(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return make_result(std::move(out), {a, b}, [](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g);
    parent(self, 1).accumulate(-g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(g.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(g.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return make_result(std::move(out), {a}, [s](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias must be [1, cols]");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(g.colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("add_col: bias must be [rows, 1]");
  }
  Matrix out = a.value().colwise() + col.value().col(0);
  return make_result(std::move(out), {a, col}, [](Node& self, const Matrix& g) {
    parent(self, 0).accumulate(g);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(g.rowwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("mul_col: gain must be [rows, 1]");
  }
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(out), {a, col}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Node& pc = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(pc.value.col(0).asDiagonal() * g);
    if (pc.requires_grad) pc.accumulate(g.cwiseProduct(pa.value).rowwise().sum());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    pa.accumulate((pa.value.array() > 0.0).select(g, 0.0));
  });
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Matrix& x = a.value();
  Matrix t = (c * (x.array() + 0.044715 * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return make_result(std::move(out), {a}, [t = std::move(t)](Node& self, const Matrix& g) {
    constexpr double c2 = 0.7978845608028654;
    Node& pa = parent(self, 0);
    const auto xa = pa.value.array();
    auto d = 0.5 * (1.0 + t.array()) +
             0.5 * xa * (1.0 - t.array().square()) * c2 * (1.0 + 3.0 * 0.044715 * xa.square());
    pa.accumulate((g.array() * d).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result(std::move(out), {a}, [](Node& self, const Matrix& g) {
    const auto s = self.value.array();
    parent(self, 0).accumulate((g.array() * s * (1.0 - s)).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be [1, width]");
  }
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_result(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self, const Matrix& g) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        if (pg.requires_grad) pg.accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) pb.accumulate(g.colwise().sum());
        if (px.requires_grad) {
          Matrix dxhat = (g.array().rowwise() * pg.value.row(0).array()).matrix();
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
            const double m1 = dxhat.row(i).mean();
            const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
          }
          px.accumulate(dx);
        }
      });
}

Var softmax_rows(const Var& scores, bool causal) {
  const Matrix& s = scores.value();
  Matrix out = Matrix::Zero(s.rows(), s.cols());
  // With causal masking, row i may see columns [0, offset + i], where the
  // offset lets a query block sit at the tail of a longer key block.
  const Eigen::Index offset = s.cols() - s.rows();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Eigen::Index visible = causal ? std::min<Eigen::Index>(offset + i + 1, s.cols()) : s.cols();
    auto row = s.row(i).head(visible);
    const double m = row.maxCoeff();
    auto e = (row.array() - m).exp();
    out.row(i).head(visible) = (e / e.sum()).matrix();
  }
  return make_result(std::move(out), {scores}, [](Node& self, const Matrix& g) {
    const Matrix& p = self.value;
    Matrix d = p.cwiseProduct(g);
    Eigen::VectorXd dot = d.rowwise().sum();
    d -= (p.array().colwise() * dot.array()).matrix();
    parent(self, 0).accumulate(d);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Var result = make_result(std::move(out), {}, nullptr);
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  Node& node = *result.node();
  node.requires_grad = true;
  for (const auto& p : parts) node.parents.push_back(p.node());
  Node* self = &node;
  node.backward = [self](const Matrix& g) {
    Eigen::Index at = 0;
    for (auto& p : self->parents) {
      const Eigen::Index n = p->value.rows();
      if (p->requires_grad) p->accumulate(g.middleRows(at, n));
      at += n;
    }
  };
  return result;
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: height mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Var result = make_result(std::move(out), {}, nullptr);
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  Node& node = *result.node();
  node.requires_grad = true;
  for (const auto& p : parts) node.parents.push_back(p.node());
  Node* self = &node;
  node.backward = [self](const Matrix& g) {
    Eigen::Index at = 0;
    for (auto& p : self->parents) {
      const Eigen::Index n = p->value.cols();
      if (p->requires_grad) p->accumulate(g.middleCols(at, n));
      at += n;
    }
  };
  return result;
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Matrix full = Matrix::Zero(pa.value.rows(), pa.value.cols());
    full.middleRows(start, count) = g;
    pa.accumulate(full);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Matrix full = Matrix::Zero(pa.value.rows(), pa.value.cols());
    full.middleCols(start, count) = g;
    pa.accumulate(full);
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [idx = std::move(idx)](Node& self, const Matrix& g) {
    Node& pt = parent(self, 0);
    Matrix full = Matrix::Zero(pt.value.rows(), pt.value.cols());
    for (size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    pt.accumulate(full);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols()) throw std::invalid_argument("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return make_result(std::move(out), {a}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    pa.accumulate(Eigen::Map<const Matrix>(g.data(), pa.value.rows(), pa.value.cols()));
  });
}

Var sum_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    pa.accumulate(Matrix::Constant(pa.value.rows(), pa.value.cols(), g(0, 0)));
  });
}

Var mean_all(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return make_result(std::move(out), {a}, [n](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    pa.accumulate(Matrix::Constant(pa.value.rows(), pa.value.cols(), g(0, 0) / n));
  });
}

Var mean_cols(const Var& a) {
  const double n = static_cast<double>(a.cols());
  Matrix out = a.value().rowwise().mean();
  return make_result(std::move(out), {a}, [n](Node& self, const Matrix& g) {
    Node& pa = parent(self, 0);
    Matrix full = g.col(0).replicate(1, pa.value.cols()) / n;
    pa.accumulate(full);
  });
}

Var im2col(const Var& x, int height, int width, int kernel, int stride, int pad) {
  if (x.cols() != static_cast<Eigen::Index>(height) * width) {
    throw std::invalid_argument("im2col: feature map size does not match height*width");
  }
  const int channels = static_cast<int>(x.rows());
  const int out_h = (height + 2 * pad - kernel) / stride + 1;
  const int out_w = (width + 2 * pad - kernel) / stride + 1;
  const int kk = kernel * kernel;
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(channels) * kk,
                             static_cast<Eigen::Index>(out_h) * out_w);
  const Matrix& in = x.value();
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* dst = cols.row(c * kk + ky * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          const double* src = in.row(c).data() + static_cast<ptrdiff_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < width) dst[oy * out_w + ox] = src[ix];
          }
        }
      }
    }
  }
  return make_result(std::move(cols), {x},
                     [=](Node& self, const Matrix& g) {
                       Node& px = parent(self, 0);
                       Matrix dx = Matrix::Zero(px.value.rows(), px.value.cols());
                       for (int c = 0; c < channels; ++c) {
                         for (int ky = 0; ky < kernel; ++ky) {
                           for (int kx = 0; kx < kernel; ++kx) {
                             const double* src = g.row(c * kk + ky * kernel + kx).data();
                             for (int oy = 0; oy < out_h; ++oy) {
                               const int iy = oy * stride + ky - pad;
                               if (iy < 0 || iy >= height) continue;
                               double* dst = dx.row(c).data() + static_cast<ptrdiff_t>(iy) * width;
                               for (int ox = 0; ox < out_w; ++ox) {
                                 const int ix = ox * stride + kx - pad;
                                 if (ix >= 0 && ix < width) dst[ix] += src[oy * out_w + ox];
                               }
                             }
                           }
                         }
                       }
                       px.accumulate(dx);
                     });
}

Var conv2d(const Var& x, int height, int width, const Var& weight, int kernel, int stride,
           int pad) {
  if (weight.cols() != x.rows() * kernel * kernel) {
    throw std::invalid_argument("conv2d: weight must be [out, in*k*k]");
  }
  return matmul(weight, im2col(x, height, width, kernel, stride, pad));
}

Var max_pool2(const Var& x, int height, int width) {
  const int out_h = height / 2;
  const int out_w = width / 2;
  const Eigen::Index channels = x.rows();
  Matrix out(channels, static_cast<Eigen::Index>(out_h) * out_w);
  std::vector<int> argmax(static_cast<size_t>(channels) * out_h * out_w);
  const Matrix& in = x.value();
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        int best = (2 * oy) * width + 2 * ox;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int at = (2 * oy + dy) * width + 2 * ox + dx;
            if (in(c, at) > in(c, best)) best = at;
          }
        }
        out(c, oy * out_w + ox) = in(c, best);
        argmax[static_cast<size_t>(c) * out_h * out_w + oy * out_w + ox] = best;
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self, const Matrix& g) {
    Node& px = parent(self, 0);
    Matrix dx = Matrix::Zero(px.value.rows(), px.value.cols());
    const Eigen::Index n = g.cols();
    for (Eigen::Index c = 0; c < g.rows(); ++c) {
      for (Eigen::Index i = 0; i < n; ++i) dx(c, argmax[static_cast<size_t>(c * n + i)]) += g(c, i);
    }
    px.accumulate(dx);
  });
}

namespace {

struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

// Half-pixel-centre sampling positions, edge-clamped.
Taps bilinear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - lo;
  }
  return t;
}

}  // namespace

Var upsample_bilinear(const Var& x, int height, int width, int out_height, int out_width) {
  if (x.cols() != static_cast<Eigen::Index>(height) * width) {
    throw std::invalid_argument("upsample_bilinear: feature map size mismatch");
  }
  Taps ty = bilinear_taps(height, out_height);
  Taps tx = bilinear_taps(width, out_width);
  const Eigen::Index channels = x.rows();
  Matrix out(channels, static_cast<Eigen::Index>(out_height) * out_width);
  const Matrix& in = x.value();
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double* src = in.row(c).data();
    double* dst = out.row(c).data();
    for (int oy = 0; oy < out_height; ++oy) {
      const double fy = ty.frac[oy];
      const double* r0 = src + static_cast<ptrdiff_t>(ty.lo[oy]) * width;
      const double* r1 = src + static_cast<ptrdiff_t>(ty.hi[oy]) * width;
      for (int ox = 0; ox < out_width; ++ox) {
        const double fx = tx.frac[ox];
        const double top = r0[tx.lo[ox]] * (1 - fx) + r0[tx.hi[ox]] * fx;
        const double bot = r1[tx.lo[ox]] * (1 - fx) + r1[tx.hi[ox]] * fx;
        dst[oy * out_width + ox] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self, const Matrix& g) {
    Node& px = parent(self, 0);
    Matrix dx = Matrix::Zero(px.value.rows(), px.value.cols());
    for (Eigen::Index c = 0; c < g.rows(); ++c) {
      const double* src = g.row(c).data();
      double* dst = dx.row(c).data();
      for (int oy = 0; oy < out_height; ++oy) {
        const double fy = ty.frac[oy];
        double* r0 = dst + static_cast<ptrdiff_t>(ty.lo[oy]) * width;
        double* r1 = dst + static_cast<ptrdiff_t>(ty.hi[oy]) * width;
        for (int ox = 0; ox < out_width; ++ox) {
          const double fx = tx.frac[ox];
          const double v = src[oy * out_width + ox];
          r0[tx.lo[ox]] += v * (1 - fy) * (1 - fx);
          r0[tx.hi[ox]] += v * (1 - fy) * fx;
          r1[tx.lo[ox]] += v * fy * (1 - fx);
          r1[tx.hi[ox]] += v * fy * fx;
        }
      }
    }
    px.accumulate(dx);
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("cross_entropy: one target per logit row required");
  }
  const Matrix& z = logits.value();
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  int supervised = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    auto e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0) continue;
    if (t >= z.cols()) throw std::out_of_range("cross_entropy: target id out of range");
    total += -(z(i, t) - m - std::log(s));
    ++supervised;
  }
  if (supervised == 0) throw std::invalid_argument("cross_entropy: no supervised positions");
  Matrix out(1, 1);
  out(0, 0) = total / supervised;
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result(std::move(out), {logits},
                     [probs = std::move(probs), tgt = std::move(tgt), supervised](
                         Node& self, const Matrix& g) {
                       Matrix d = Matrix::Zero(probs.rows(), probs.cols());
                       for (Eigen::Index i = 0; i < probs.rows(); ++i) {
                         const int t = tgt[static_cast<size_t>(i)];
                         if (t < 0) continue;
                         d.row(i) = probs.row(i);
                         d(i, t) -= 1.0;
                       }
                       parent(self, 0).accumulate(d * (g(0, 0) / supervised));
                     });
}

Var bce_with_logits(const Var& logits, const Matrix& target) {
  if (logits.rows() != target.rows() || logits.cols() != target.cols()) {
    throw std::invalid_argument("bce_with_logits: shape mismatch");
  }
  const auto x = logits.value().array();
  const auto t = target.array();
  const double n = static_cast<double>(target.size());
  const double loss =
      (x.max(0.0) - x * t + (1.0 + (-x.abs()).exp()).log()).sum() / n;
  Matrix out(1, 1);
  out(0, 0) = loss;
  return make_result(std::move(out), {logits}, [target, n](Node& self, const Matrix& g) {
    Node& pl = parent(self, 0);
    Matrix s = (1.0 / (1.0 + (-pl.value.array()).exp())).matrix();
    pl.accumulate((s - target) * (g(0, 0) / n));
  });
}

Var soft_dice(const Var& probs, const Matrix& target, double eps) {
  if (probs.rows() != target.rows() || probs.cols() != target.cols()) {
    throw std::invalid_argument("soft_dice: shape mismatch");
  }
  const double inter = probs.value().cwiseProduct(target).sum();
  const double denom = probs.value().sum() + target.sum() + eps;
  const double numer = 2.0 * inter + eps;
  Matrix out(1, 1);
  out(0, 0) = 1.0 - numer / denom;
  return make_result(std::move(out), {probs}, [target, numer, denom](Node& self, const Matrix& g) {
    Matrix d = -((2.0 * denom) * target.array() - numer).matrix() / (denom * denom);
    parent(self, 0).accumulate(d * g(0, 0));
  });
}

}  // namespace fakeshield::nn
