#include "hart/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hart {

namespace {

bool should_record(std::initializer_list<const Tensor*> ins) {
  if (!Tape::current()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

bool any_requires(std::initializer_list<const Tensor*> ins) {
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

Tensor finish(Tensor out, bool record, std::function<void(GradStore&)> fn) {
  if (record) {
    out.mark_interior();
    Tape::current()->record(std::move(fn));
  }
  return out;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

// Broadcast layout: output shape plus, per input, a stride vector aligned to
// the output rank with stride 0 on broadcast dimensions.
struct Bcast {
  Shape out_shape;
  std::vector<std::size_t> sa, sb;  // strides into a and b per out axis
  std::size_t n = 0;
  bool trivial = false;  // same shapes, direct linear indexing
};

Bcast broadcast_plan(const char* op, const Shape& a, const Shape& b) {
  Bcast p;
  if (a == b) {
    p.out_shape = a;
    p.n = shape_numel(a);
    p.trivial = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out_shape.assign(rank, 1);
  p.sa.assign(rank, 0);
  p.sb.assign(rank, 0);

  // physical strides of each input
  std::vector<std::size_t> pa(a.size(), 1), pb(b.size(), 1);
  for (std::size_t i = a.size(); i-- > 1;) pa[i - 1] = pa[i] * a[i];
  for (std::size_t i = b.size(); i-- > 1;) pb[i - 1] = pb[i] * b[i];

  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ai = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t bi = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (ai != bi && ai != 1 && bi != 1) shape_error(op, a, b);
    p.out_shape[i] = std::max(ai, bi);
    if (ai != 1 && i + a.size() >= rank) p.sa[i] = pa[i + a.size() - rank];
    if (bi != 1 && i + b.size() >= rank) p.sb[i] = pb[i + b.size() - rank];
  }
  p.n = shape_numel(p.out_shape);
  return p;
}

// Calls fn(o, ia, ib) for every output element.
template <typename F>
void bcast_for_each(const Bcast& p, F&& fn) {
  if (p.trivial) {
    for (std::size_t i = 0; i < p.n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = p.out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < p.n; ++o) {
    fn(o, ia, ib);
    // odometer increment
    for (std::size_t ax = rank; ax-- > 0;) {
      idx[ax]++;
      ia += p.sa[ax];
      ib += p.sb[ax];
      if (idx[ax] < p.out_shape[ax]) break;
      ia -= p.sa[ax] * idx[ax];
      ib -= p.sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

// Shared implementation for broadcasting binary ops. fwd(av, bv) -> value;
// bwd(av, bv, go, &da, &db) adds the two partials.
template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  Bcast plan = broadcast_plan(name, a.shape(), b.shape());
  std::vector<double> vals(plan.n);
  const double* pa = a.data();
  const double* pb = b.data();
  bcast_for_each(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    vals[o] = fwd(pa[ia], pb[ib]);
  });
  Tensor out = Tensor::from(plan.out_shape, std::move(vals), any_requires({&a, &b}));
  const bool rec = should_record({&a, &b});
  return finish(out, rec, [name, a, b, out, plan, bwd](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go) return;
    const bool need_a = a.requires_grad();
    const bool need_b = b.requires_grad();
    if (!need_a && !need_b) return;
    std::vector<double>* ga = need_a ? &gs.of(a) : nullptr;
    std::vector<double>* gb = need_b ? &gs.of(b) : nullptr;
    const double* pa = a.data();
    const double* pb = b.data();
    bcast_for_each(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      double da = 0.0, db = 0.0;
      bwd(pa[ia], pb[ib], (*go)[o], &da, &db);
      if (ga) (*ga)[ia] += da;
      if (gb) (*gb)[ib] += db;
    });
  });
}

template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& x, Fwd fwd, Dfn dfn) {
  std::vector<double> vals(x.size());
  const double* px = x.data();
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = fwd(px[i]);
  Tensor out = Tensor::from(x.shape(), std::move(vals), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out, dfn](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    const double* px = x.data();
    const double* po = out.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dfn(px[i], po[i]) * (*go)[i];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double* da, double* db) {
        *da = g;
        *db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double* da, double* db) {
        *da = g;
        *db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double* da, double* db) {
        *da = g * y;
        *db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double* da, double* db) {
        *da = g / y;
        *db = -g * x / (y * y);
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double g, double* da, double* db) {
        if (x >= y)
          *da = g;
        else
          *db = g;
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double g, double* da, double* db) {
        if (x <= y)
          *da = g;
        else
          *db = g;
      });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor log_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Tensor clip(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lo > hi");
  return unary_op(
      x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& x, double k) {
  return unary_op(
      x, [k](double v) { return v * k; }, [k](double, double) { return k; });
}

Tensor add_scalar(const Tensor& x, double k) {
  return unary_op(
      x, [k](double v) { return v + k; }, [](double, double) { return 1.0; });
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), x.values(), false);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) {
    throw std::invalid_argument("matmul: left operand must be 2-D, got " + shape_str(a.shape()));
  }
  const bool vec = b.rank() == 1;
  if (!vec && b.rank() != 2) {
    throw std::invalid_argument("matmul: right operand must be 1-D or 2-D, got " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t kb = b.dim(0);
  const std::size_t n = vec ? 1 : b.dim(1);
  if (k != kb) shape_error("matmul", a.shape(), b.shape());

  std::vector<double> vals(m * n, 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = vals.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Shape out_shape = vec ? Shape{m} : Shape{m, n};
  Tensor out = Tensor::from(std::move(out_shape), std::move(vals), any_requires({&a, &b}));
  const bool rec = should_record({&a, &b});
  return finish(out, rec, [a, b, out, m, n, k](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go) return;
    const double* pa = a.data();
    const double* pb = b.data();
    if (a.requires_grad()) {
      std::vector<double>& ga = gs.of(a);
      // dA = dOut * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = go->data() + i * n;
          const double* brow = pb + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      std::vector<double>& gb = gs.of(b);
      // dB = A^T * dOut
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const double av = pa[i * k + p];
          const double* grow = go->data() + i * n;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("transpose: expected 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> vals(r * c);
  const double* px = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) vals[j * r + i] = px[i * c + j];
  Tensor out = Tensor::from({c, r}, std::move(vals), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out, r, c](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += (*go)[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(new_shape));
  }
  Tensor out = Tensor::from(std::move(new_shape), x.values(), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i];
  });
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Tensor slice(const Tensor& x, const std::vector<std::size_t>& starts,
             const std::vector<std::size_t>& stops) {
  if (starts.size() != x.rank() || stops.size() != x.rank()) {
    throw std::invalid_argument("slice: bounds rank mismatch for tensor " + shape_str(x.shape()));
  }
  Shape out_shape(x.rank());
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (starts[i] >= stops[i] || stops[i] > x.dim(i)) {
      throw std::invalid_argument("slice: invalid range [" + std::to_string(starts[i]) + ", " +
                                  std::to_string(stops[i]) + ") on axis " + std::to_string(i) +
                                  " of " + shape_str(x.shape()));
    }
    out_shape[i] = stops[i] - starts[i];
  }
  const std::size_t n = shape_numel(out_shape);
  const auto xst = row_major_strides(x.shape());
  const auto ost = row_major_strides(out_shape);
  std::vector<double> vals(n);
  const double* px = x.data();
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o, xi = 0;
    for (std::size_t ax = 0; ax < out_shape.size(); ++ax) {
      const std::size_t id = rem / ost[ax];
      rem %= ost[ax];
      xi += (starts[ax] + id) * xst[ax];
    }
    vals[o] = px[xi];
  }
  Tensor out = Tensor::from(out_shape, std::move(vals), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out, starts, out_shape, xst, ost](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (std::size_t o = 0; o < go->size(); ++o) {
      std::size_t rem = o, xi = 0;
      for (std::size_t ax = 0; ax < out_shape.size(); ++ax) {
        const std::size_t id = rem / ost[ax];
        rem %= ost[ax];
        xi += (starts[ax] + id) * xst[ax];
      }
      gx[xi] += (*go)[o];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != s0.size()) shape_error("concat", s0, p.shape());
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.dim(i) != s0[i]) shape_error("concat", s0, p.shape());
    axis_total += p.dim(axis);
  }
  out_shape[axis] = axis_total;

  // outer x axis x inner layout
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<double> vals(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t pa = p.dim(axis);
    const double* pp = p.data();
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t a = 0; a < pa; ++a)
        for (std::size_t in = 0; in < inner; ++in)
          vals[(ou * axis_total + offset + a) * inner + in] = pp[(ou * pa + a) * inner + in];
    offset += pa;
  }
  bool req = false;
  for (const Tensor& p : parts) req = req || p.requires_grad();
  Tensor out = Tensor::from(out_shape, std::move(vals), req);
  bool rec = Tape::current() && req;
  return finish(out, rec, [parts, out, outer, inner, axis_total, axis](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go) return;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const std::size_t pa = p.dim(axis);
      if (p.requires_grad()) {
        std::vector<double>& gp = gs.of(p);
        for (std::size_t ou = 0; ou < outer; ++ou)
          for (std::size_t a = 0; a < pa; ++a)
            for (std::size_t in = 0; in < inner; ++in)
              gp[(ou * pa + a) * inner + in] +=
                  (*go)[(ou * axis_total + offset + a) * inner + in];
      }
      offset += pa;
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc, x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (double& g : gx) g += (*go)[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdims) {
  if (axis >= x.rank()) throw std::invalid_argument("sum_axis: axis out of range");
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i == axis) {
      if (keepdims) out_shape.push_back(1);
    } else {
      out_shape.push_back(x.dim(i));
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  std::vector<double> vals(outer * inner, 0.0);
  const double* px = x.data();
  for (std::size_t ou = 0; ou < outer; ++ou)
    for (std::size_t a = 0; a < len; ++a)
      for (std::size_t in = 0; in < inner; ++in)
        vals[ou * inner + in] += px[(ou * len + a) * inner + in];

  Tensor out = Tensor::from(out_shape, std::move(vals), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out, outer, inner, len](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t a = 0; a < len; ++a)
        for (std::size_t in = 0; in < inner; ++in)
          gx[(ou * len + a) * inner + in] += (*go)[ou * inner + in];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, Pad pad) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: expected input [H,W,Cin] and kernel [kh,kw,Cin,Cout], got " +
                                shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), kci = kernel.dim(2),
                    Co = kernel.dim(3);
  if (kci != Ci) shape_error("conv2d (channels)", x.shape(), kernel.shape());

  std::size_t OH, OW;
  std::ptrdiff_t pad_top = 0, pad_left = 0;
  if (pad == Pad::kSame) {
    OH = (H + stride - 1) / stride;
    OW = (W + stride - 1) / stride;
    const std::ptrdiff_t ph = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>((OH - 1) * stride + kh) - static_cast<std::ptrdiff_t>(H));
    const std::ptrdiff_t pw = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>((OW - 1) * stride + kw) - static_cast<std::ptrdiff_t>(W));
    pad_top = ph / 2;
    pad_left = pw / 2;
  } else {
    if (H < kh || W < kw)
      throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                  " larger than input " + shape_str(x.shape()));
    OH = (H - kh) / stride + 1;
    OW = (W - kw) / stride + 1;
  }

  std::vector<double> vals(OH * OW * Co, 0.0);
  const double* px = x.data();
  const double* pk = kernel.data();
  for (std::size_t oy = 0; oy < OH; ++oy) {
    for (std::size_t ox = 0; ox < OW; ++ox) {
      double* orow = vals.data() + (oy * OW + ox) * Co;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad_top;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad_left;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          const double* xpix = px + (static_cast<std::size_t>(iy) * W + ix) * Ci;
          const double* krow = pk + ((ky * kw + kx) * Ci) * Co;
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double xv = xpix[ci];
            const double* kk = krow + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) orow[co] += xv * kk[co];
          }
        }
      }
    }
  }
  Tensor out = Tensor::from({OH, OW, Co}, std::move(vals), any_requires({&x, &kernel}));
  const bool rec = should_record({&x, &kernel});
  return finish(out, rec,
                [x, kernel, out, H, W, Ci, kh, kw, Co, OH, OW, stride, pad_top,
                 pad_left](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go) return;
    const bool need_x = x.requires_grad();
    const bool need_k = kernel.requires_grad();
    if (!need_x && !need_k) return;
    std::vector<double>* gx = need_x ? &gs.of(x) : nullptr;
    std::vector<double>* gk = need_k ? &gs.of(kernel) : nullptr;
    const double* px = x.data();
    const double* pk = kernel.data();
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const double* grow = go->data() + (oy * OW + ox) * Co;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad_top;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad_left;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t xoff = (static_cast<std::size_t>(iy) * W + ix) * Ci;
            const std::size_t koff = (ky * kw + kx) * Ci * Co;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const double xv = px[xoff + ci];
              const double* kk = pk + koff + ci * Co;
              double accx = 0.0;
              for (std::size_t co = 0; co < Co; ++co) {
                const double g = grow[co];
                accx += kk[co] * g;
                if (gk) (*gk)[koff + ci * Co + co] += xv * g;
              }
              if (gx) (*gx)[xoff + ci] += accx;
            }
          }
        }
      }
    }
  });
}

Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 3)
    throw std::invalid_argument("max_pool2d: expected [H,W,C], got " + shape_str(x.shape()));
  if (stride == 0) stride = window;
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H < window || W < window || (H - window) % stride != 0 || (W - window) % stride != 0) {
    throw std::invalid_argument("max_pool2d: window " + std::to_string(window) + "/stride " +
                                std::to_string(stride) + " does not tile input " +
                                shape_str(x.shape()));
  }
  const std::size_t OH = (H - window) / stride + 1;
  const std::size_t OW = (W - window) / stride + 1;
  std::vector<double> vals(OH * OW * C);
  std::vector<std::uint32_t> argmax(OH * OW * C);
  const double* px = x.data();
  for (std::size_t oy = 0; oy < OH; ++oy)
    for (std::size_t ox = 0; ox < OW; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        double best = -1e300;
        std::uint32_t bi = 0;
        for (std::size_t wy = 0; wy < window; ++wy)
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t xi = ((oy * stride + wy) * W + (ox * stride + wx)) * C + c;
            if (px[xi] > best) {
              best = px[xi];
              bi = static_cast<std::uint32_t>(xi);
            }
          }
        vals[(oy * OW + ox) * C + c] = best;
        argmax[(oy * OW + ox) * C + c] = bi;
      }
  Tensor out = Tensor::from({OH, OW, C}, std::move(vals), x.requires_grad());
  const bool rec = should_record({&x});
  return finish(out, rec, [x, out, argmax = std::move(argmax)](GradStore& gs) {
    const std::vector<double>* go = gs.find(out);
    if (!go || !x.requires_grad()) return;
    std::vector<double>& gx = gs.of(x);
    for (std::size_t i = 0; i < go->size(); ++i) gx[argmax[i]] += (*go)[i];
  });
}

Tensor rows_max_detached(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("rows_max: expected 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> vals(r);
  const double* px = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double best = px[i * c];
    for (std::size_t j = 1; j < c; ++j) best = std::max(best, px[i * c + j]);
    vals[i] = best;
  }
  return Tensor::from({r, 1}, std::move(vals), false);
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor shifted = sub(logits, rows_max_detached(logits));
  Tensor e = exp_op(shifted);
  Tensor z = sum_axis(e, 1, /*keepdims=*/true);
  return div(e, z);
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const double keep = 1.0 - p;
  Tensor mask = Tensor::zeros(x.shape());
  for (double& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, mask);
}

bool all_finite(const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x.data()[i])) return false;
  return true;
}

}  // namespace hart
