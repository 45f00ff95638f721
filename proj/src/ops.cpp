#include "spikekit/ops.hpp"

#include <cmath>
#include <string>

namespace spikekit {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

// im2col for [Cin,H,W] -> [Cin*kh*kw, OH*OW] (row-major), zero padding.
void im2col(const scalar_t* x, index_t cin, index_t h, index_t w, index_t kh,
            index_t kw, index_t pad, index_t oh, index_t ow, scalar_t* cols) {
  for (index_t c = 0; c < cin; ++c) {
    const scalar_t* plane = x + c * h * w;
    for (index_t ky = 0; ky < kh; ++ky) {
      for (index_t kx = 0; kx < kw; ++kx) {
        scalar_t* row = cols + ((c * kh + ky) * kw + kx) * oh * ow;
        for (index_t oy = 0; oy < oh; ++oy) {
          index_t iy = oy + ky - pad;
          if (iy < 0 || iy >= h) {
            for (index_t ox = 0; ox < ow; ++ox) row[oy * ow + ox] = 0.0;
            continue;
          }
          for (index_t ox = 0; ox < ow; ++ox) {
            index_t ix = ox + kx - pad;
            row[oy * ow + ox] =
                (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of the im2col layout back onto the input plane.
void col2im_add(const scalar_t* cols, index_t cin, index_t h, index_t w,
                index_t kh, index_t kw, index_t pad, index_t oh, index_t ow,
                scalar_t* dx) {
  for (index_t c = 0; c < cin; ++c) {
    scalar_t* plane = dx + c * h * w;
    for (index_t ky = 0; ky < kh; ++ky) {
      for (index_t kx = 0; kx < kw; ++kx) {
        const scalar_t* row = cols + ((c * kh + ky) * kw + kx) * oh * ow;
        for (index_t oy = 0; oy < oh; ++oy) {
          index_t iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (index_t ox = 0; ox < ow; ++ox) {
            index_t ix = ox + kx - pad;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_op("add", a.shape(), a.values() + b.values(), {a, b},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad);
                   if (n.parents[1]->requires_grad)
                     n.parents[1]->accumulate(n.grad);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_op("sub", a.shape(), a.values() - b.values(), {a, b},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad);
                   if (n.parents[1]->requires_grad)
                     n.parents[1]->accumulate(-n.grad);
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return make_op("mul", a.shape(), a.values() * b.values(), {a, b},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad * n.parents[1]->values);
                   if (n.parents[1]->requires_grad)
                     n.parents[1]->accumulate(n.grad * n.parents[0]->values);
                 });
}

Tensor scalar_mul(const Tensor& a, scalar_t s) {
  return make_op("scalar_mul", a.shape(), a.values() * s, {a},
                 [s](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad * s);
                 });
}

Tensor scalar_add(const Tensor& a, scalar_t s) {
  return make_op("scalar_add", a.shape(), a.values() + s, {a},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad);
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) +
                                " does not hold " + shape_str(shape));
  return make_op("reshape", std::move(shape), x.values(), {x},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad);
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const index_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  ArrayX out(m * n);
  MatMap(out.data(), m, n) = ConstMatMap(a.values().data(), m, k) *
                             ConstMatMap(b.values().data(), k, n);
  return make_op(
      "matmul", {m, n}, std::move(out), {a, b},
      [m, k, n](detail::TapeNode& nd) {
        ConstMatMap g(nd.grad.data(), m, n);
        if (nd.parents[0]->requires_grad) {
          ArrayX da(m * k);
          MatMap(da.data(), m, k) =
              g * ConstMatMap(nd.parents[1]->values.data(), k, n).transpose();
          nd.parents[0]->accumulate(da);
        }
        if (nd.parents[1]->requires_grad) {
          ArrayX db(k * n);
          MatMap(db.data(), k, n) =
              ConstMatMap(nd.parents[0]->values.data(), m, k).transpose() * g;
          nd.parents[1]->accumulate(db);
        }
      });
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
  if (b.ndim() != 1 || x.shape().back() != b.dim(0))
    throw std::invalid_argument("bias_add: bias " + shape_str(b.shape()) +
                                " does not match last axis of " +
                                shape_str(x.shape()));
  const index_t k = b.dim(0), rows = x.size() / k;
  ArrayX out(x.size());
  for (index_t r = 0; r < rows; ++r)
    out.segment(r * k, k) = x.values().segment(r * k, k) + b.values();
  return make_op("bias_add", x.shape(), std::move(out), {x, b},
                 [rows, k](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad);
                   if (n.parents[1]->requires_grad) {
                     ArrayX db = ArrayX::Zero(k);
                     for (index_t r = 0; r < rows; ++r)
                       db += n.grad.segment(r * k, k);
                     n.parents[1]->accumulate(db);
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv2d: incompatible shapes " +
                                shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  const index_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const index_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const index_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                " larger than padded input " +
                                shape_str(x.shape()));
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != cout))
    throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) +
                                " does not match " +
                                std::to_string(cout) + " output channels");

  const index_t kvol = cin * kh * kw, opix = oh * ow;
  ArrayX out(batch * cout * opix);
  ArrayX cols(kvol * opix);
  for (index_t b = 0; b < batch; ++b) {
    im2col(x.values().data() + b * cin * h * wd, cin, h, wd, kh, kw, pad, oh,
           ow, cols.data());
    MatMap(out.data() + b * cout * opix, cout, opix) =
        ConstMatMap(w.values().data(), cout, kvol) *
        ConstMatMap(cols.data(), kvol, opix);
    if (has_bias)
      for (index_t c = 0; c < cout; ++c)
        out.segment(b * cout * opix + c * opix, opix) += bias.values()[c];
  }

  std::vector<Tensor> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  // The im2col buffer is rebuilt in backward instead of captured; it is
  // the largest transient of a training step.
  auto bw = [batch, cin, h, wd, cout, kh, kw, pad, oh, ow, kvol, opix,
             has_bias](detail::TapeNode& n) {
    const auto& xv = n.parents[0]->values;
    const auto& wv = n.parents[1]->values;
    const bool need_dx = n.parents[0]->requires_grad;
    const bool need_dw = n.parents[1]->requires_grad;
    ArrayX dx, dw;
    if (need_dx) dx = ArrayX::Zero(xv.size());
    if (need_dw) dw = ArrayX::Zero(wv.size());
    ArrayX cols(kvol * opix), dcols(kvol * opix);
    for (index_t b = 0; b < batch; ++b) {
      ConstMatMap g(n.grad.data() + b * cout * opix, cout, opix);
      if (need_dw) {
        im2col(xv.data() + b * cin * h * wd, cin, h, wd, kh, kw, pad, oh, ow,
               cols.data());
        MatMap(dw.data(), cout, kvol) +=
            g * ConstMatMap(cols.data(), kvol, opix).transpose();
      }
      if (need_dx) {
        MatMap(dcols.data(), kvol, opix) =
            ConstMatMap(wv.data(), cout, kvol).transpose() * g;
        col2im_add(dcols.data(), cin, h, wd, kh, kw, pad, oh, ow,
                   dx.data() + b * cin * h * wd);
      }
    }
    if (need_dx) n.parents[0]->accumulate(dx);
    if (need_dw) n.parents[1]->accumulate(dw);
    if (has_bias && n.parents[2]->requires_grad) {
      ArrayX db = ArrayX::Zero(cout);
      for (index_t b = 0; b < batch; ++b)
        for (index_t c = 0; c < cout; ++c)
          db[c] += n.grad.segment((b * cout + c) * opix, opix).sum();
      n.parents[2]->accumulate(db);
    }
  };
  return make_op("conv2d", {batch, cout, oh, ow}, std::move(out),
                 std::move(parents), std::move(bw));
}

Tensor avg_pool2(const Tensor& x) {
  if (x.ndim() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw std::invalid_argument("avg_pool2: need even spatial extents, got " +
                                shape_str(x.shape()));
  const index_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const index_t oh = h / 2, ow = w / 2;
  ArrayX out(planes * oh * ow);
  const scalar_t* xv = x.values().data();
  for (index_t p = 0; p < planes; ++p)
    for (index_t oy = 0; oy < oh; ++oy)
      for (index_t ox = 0; ox < ow; ++ox) {
        const scalar_t* base = xv + (p * h + 2 * oy) * w + 2 * ox;
        out[(p * oh + oy) * ow + ox] =
            0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
      }
  return make_op(
      "avg_pool2", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
      [planes, h, w, oh, ow](detail::TapeNode& n) {
        if (!n.parents[0]->requires_grad) return;
        ArrayX dx = ArrayX::Zero(planes * h * w);
        for (index_t p = 0; p < planes; ++p)
          for (index_t oy = 0; oy < oh; ++oy)
            for (index_t ox = 0; ox < ow; ++ox) {
              scalar_t g = 0.25 * n.grad[(p * oh + oy) * ow + ox];
              scalar_t* base = dx.data() + (p * h + 2 * oy) * w + 2 * ox;
              base[0] += g;
              base[1] += g;
              base[w] += g;
              base[w + 1] += g;
            }
        n.parents[0]->accumulate(dx);
      });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4)
    throw std::invalid_argument("global_avg_pool: need [B,C,H,W], got " +
                                shape_str(x.shape()));
  const index_t planes = x.dim(0) * x.dim(1), pix = x.dim(2) * x.dim(3);
  ArrayX out(planes);
  for (index_t p = 0; p < planes; ++p)
    out[p] = x.values().segment(p * pix, pix).mean();
  return make_op("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), {x},
                 [planes, pix](detail::TapeNode& n) {
                   if (!n.parents[0]->requires_grad) return;
                   ArrayX dx(planes * pix);
                   for (index_t p = 0; p < planes; ++p)
                     dx.segment(p * pix, pix).setConstant(n.grad[p] / pix);
                   n.parents[0]->accumulate(dx);
                 });
}

Tensor mean_axis(const Tensor& x, size_t axis) {
  if (axis >= x.ndim())
    throw std::invalid_argument("mean_axis: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  index_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const index_t n = s[axis];
  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  ArrayX out = ArrayX::Zero(outer * inner);
  for (index_t o = 0; o < outer; ++o)
    for (index_t k = 0; k < n; ++k)
      out.segment(o * inner, inner) +=
          x.values().segment((o * n + k) * inner, inner);
  out /= static_cast<scalar_t>(n);
  return make_op("mean_axis", std::move(out_shape), std::move(out), {x},
                 [outer, n, inner](detail::TapeNode& nd) {
                   if (!nd.parents[0]->requires_grad) return;
                   ArrayX dx(outer * n * inner);
                   for (index_t o = 0; o < outer; ++o)
                     for (index_t k = 0; k < n; ++k)
                       dx.segment((o * n + k) * inner, inner) =
                           nd.grad.segment(o * inner, inner) / n;
                   nd.parents[0]->accumulate(dx);
                 });
}

Tensor mean(const Tensor& x) {
  const index_t n = x.size();
  ArrayX out(1);
  out[0] = x.values().mean();
  return make_op("mean", {1}, std::move(out), {x},
                 [n](detail::TapeNode& nd) {
                   if (!nd.parents[0]->requires_grad) return;
                   nd.parents[0]->accumulate(
                       ArrayX::Constant(n, nd.grad[0] / n));
                 });
}

Tensor square(const Tensor& x) {
  return make_op("square", x.shape(), x.values().square(), {x},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(2.0 * n.parents[0]->values *
                                              n.grad);
                 });
}

Tensor log(const Tensor& x) {
  return make_op("log", x.shape(), x.values().log(), {x},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad / n.parents[0]->values);
                 });
}

Tensor exp(const Tensor& x) {
  return make_op("exp", x.shape(), x.values().exp(), {x},
                 [](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(n.grad * n.values);
                 });
}

Tensor max_axis(const Tensor& x, size_t axis) {
  if (axis >= x.ndim())
    throw std::invalid_argument("max_axis: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  index_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const index_t n = s[axis];
  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  ArrayX out(outer * inner);
  std::vector<index_t> argmax(outer * inner);
  for (index_t o = 0; o < outer; ++o)
    for (index_t i = 0; i < inner; ++i) {
      index_t best = 0;
      scalar_t bv = x.values()[(o * n) * inner + i];
      for (index_t k = 1; k < n; ++k) {
        scalar_t v = x.values()[(o * n + k) * inner + i];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      out[o * inner + i] = bv;
      argmax[o * inner + i] = best;
    }
  return make_op("max_axis", std::move(out_shape), std::move(out), {x},
                 [outer, n, inner, argmax](detail::TapeNode& nd) {
                   if (!nd.parents[0]->requires_grad) return;
                   ArrayX dx = ArrayX::Zero(outer * n * inner);
                   for (index_t o = 0; o < outer; ++o)
                     for (index_t i = 0; i < inner; ++i)
                       dx[(o * n + argmax[o * inner + i]) * inner + i] =
                           nd.grad[o * inner + i];
                   nd.parents[0]->accumulate(dx);
                 });
}

Tensor softmax(const Tensor& logits, scalar_t temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("softmax: temperature must be positive");
  const index_t k = logits.shape().back();
  const index_t rows = logits.size() / k;
  ArrayX out(logits.size());
  for (index_t r = 0; r < rows; ++r) {
    auto row = logits.values().segment(r * k, k);
    ArrayX e = ((row - row.maxCoeff()) / temperature).exp();
    out.segment(r * k, k) = e / e.sum();
  }
  return make_op(
      "softmax", logits.shape(), std::move(out), {logits},
      [rows, k, temperature](detail::TapeNode& n) {
        if (!n.parents[0]->requires_grad) return;
        ArrayX dx(rows * k);
        for (index_t r = 0; r < rows; ++r) {
          auto p = n.values.segment(r * k, k);
          auto g = n.grad.segment(r * k, k);
          scalar_t dot = (p * g).sum();
          dx.segment(r * k, k) = p * (g - dot) / temperature;
        }
        n.parents[0]->accumulate(dx);
      });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw std::invalid_argument("cross_entropy: need [B,K] logits, got " +
                                shape_str(logits.shape()));
  const index_t batch = logits.dim(0), k = logits.dim(1);
  if (static_cast<index_t>(labels.size()) != batch)
    throw std::invalid_argument("cross_entropy: " +
                                std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(batch));
  ArrayX probs(batch * k);
  scalar_t loss = 0.0;
  for (index_t b = 0; b < batch; ++b) {
    int y = labels[b];
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(y) + " out of range");
    auto row = logits.values().segment(b * k, k);
    scalar_t mx = row.maxCoeff();
    ArrayX shifted = row - mx;
    scalar_t lse = std::log(shifted.exp().sum());
    probs.segment(b * k, k) = (shifted - lse).exp();
    loss -= shifted[y] - lse;
  }
  ArrayX out(1);
  out[0] = loss / batch;
  return make_op("cross_entropy", {1}, std::move(out), {logits},
                 [batch, k, labels, probs](detail::TapeNode& n) {
                   if (!n.parents[0]->requires_grad) return;
                   ArrayX dx = probs;
                   for (index_t b = 0; b < batch; ++b)
                     dx[b * k + labels[b]] -= 1.0;
                   n.parents[0]->accumulate(dx * (n.grad[0] / batch));
                 });
}

}  // namespace spikekit
