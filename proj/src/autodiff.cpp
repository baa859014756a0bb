// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace geoni::ad {

namespace {

// Dense inner kernels. CI/CO are small (<=64) so these stay in L1; the
// co loops vectorize under -O3.

// Row kernels templated on the output-channel count: the networks run with a
// handful of small fixed widths, and a compile-time trip count is what lets
// the compiler emit straight-line vector code instead of a scalar loop.
// COT == 0 is the runtime-width fallback.
template <int COT>
inline void axpy_rows(const double* __restrict xr, const double* __restrict wt, int CI, int co_n,
                      double* __restrict orow) {
  const int CO = COT > 0 ? COT : co_n;
  int ci = 0;
  for (; ci + 4 <= CI; ci += 4) {
    const double x0 = xr[ci], x1 = xr[ci + 1], x2 = xr[ci + 2], x3 = xr[ci + 3];
    const double* w0 = wt + static_cast<size_t>(ci) * CO;
    const double* w1 = w0 + CO;
    const double* w2 = w1 + CO;
    const double* w3 = w2 + CO;
    for (int co = 0; co < CO; ++co) orow[co] += x0 * w0[co] + x1 * w1[co] + x2 * w2[co] + x3 * w3[co];
  }
  for (; ci < CI; ++ci) {
    const double xv = xr[ci];
    const double* wr = wt + static_cast<size_t>(ci) * CO;
    for (int co = 0; co < CO; ++co) orow[co] += xv * wr[co];
  }
}

// Input gradients reuse axpy_rows against a transposed weight block: the
// natural per-ci dot product form spends most of its time in horizontal
// reductions, the transposed form is pure vertical FMA.
inline void transpose_block(const double* __restrict wt, int CI, int CO, double* __restrict wtT) {
  for (int ci = 0; ci < CI; ++ci)
    for (int co = 0; co < CO; ++co) wtT[static_cast<size_t>(co) * CI + ci] = wt[static_cast<size_t>(ci) * CO + co];
}

template <int COT>
inline void outer_rows(const double* __restrict xr, const double* __restrict gor, int CI, int co_n,
                       double* __restrict dwt) {
  const int CO = COT > 0 ? COT : co_n;
  for (int ci = 0; ci < CI; ++ci) {
    const double xv = xr[ci];
    double* dwr = dwt + static_cast<size_t>(ci) * CO;
    for (int co = 0; co < CO; ++co) dwr[co] += xv * gor[co];
  }
}

// Instantiates `fn.template operator()<CO>()` for the widths in use.
template <typename Fn>
inline void dispatch_co(int co, Fn&& fn) {
  switch (co) {
    case 1: fn.template operator()<1>(); break;
    case 2: fn.template operator()<2>(); break;
    case 4: fn.template operator()<4>(); break;
    case 8: fn.template operator()<8>(); break;
    case 16: fn.template operator()<16>(); break;
    case 32: fn.template operator()<32>(); break;
    case 64: fn.template operator()<64>(); break;
    default: fn.template operator()<0>(); break;
  }
}

struct Box {
  int lo[3], hi[3];  // valid output ranges along X, Y, A for one tap offset
  bool empty;
};

Box tap_box(int X, int Y, int A, int dx, int dh, int da) {
  Box b{};
  const int d[3] = {dx, dh, da};
  const int n[3] = {X, Y, A};
  b.empty = false;
  for (int i = 0; i < 3; ++i) {
    b.lo[i] = std::max(0, -d[i]);
    b.hi[i] = std::min(n[i], n[i] - d[i]);
    if (b.lo[i] >= b.hi[i]) b.empty = true;
  }
  return b;
}

template <int COT>
void conv3d_fwd_t(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& out) {
  const int B = x.dim(0), X = x.dim(1), Y = x.dim(2), A = x.dim(3), CI = x.dim(4);
  const int KX = w.dim(0), KH = w.dim(1), KA = w.dim(2), CO = w.dim(4);
  const long long xs_b = static_cast<long long>(X) * Y * A * CI;
  const long long xs_x = static_cast<long long>(Y) * A * CI;
  const long long xs_y = static_cast<long long>(A) * CI;
  const long long os_b = static_cast<long long>(X) * Y * A * CO;
  const long long os_x = static_cast<long long>(Y) * A * CO;
  const long long os_y = static_cast<long long>(A) * CO;

  double* o = out.data();
  const double* bs = bias.data();
  const long long npos = out.size() / CO;
  for (long long p = 0; p < npos; ++p) std::memcpy(o + p * CO, bs, sizeof(double) * CO);

  for (int kx = 0; kx < KX; ++kx)
    for (int kh = 0; kh < KH; ++kh)
      for (int ka = 0; ka < KA; ++ka) {
        const int dx = kx - KX / 2, dh = kh - KH / 2, da = ka - KA / 2;
        Box box = tap_box(X, Y, A, dx, dh, da);
        if (box.empty) continue;
        const double* wt = w.data() + ((static_cast<long long>(kx) * KH + kh) * KA + ka) * CI * CO;
        for (int b = 0; b < B; ++b)
          for (int xo = box.lo[0]; xo < box.hi[0]; ++xo)
            for (int ho = box.lo[1]; ho < box.hi[1]; ++ho) {
              const double* xr = x.data() + b * xs_b + (xo + dx) * xs_x + (ho + dh) * xs_y +
                                 static_cast<long long>(box.lo[2] + da) * CI;
              double* orow = o + b * os_b + xo * os_x + ho * os_y +
                             static_cast<long long>(box.lo[2]) * CO;
              for (int ao = box.lo[2]; ao < box.hi[2]; ++ao) {
                axpy_rows<COT>(xr, wt, CI, CO, orow);
                xr += CI;
                orow += CO;
              }
            }
      }
}

void conv3d_fwd(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& out) {
  dispatch_co(w.dim(4), [&]<int COT>() { conv3d_fwd_t<COT>(x, w, bias, out); });
}

template <int COT, int CIT>
void conv3d_bwd_t(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                  Tensor* gb) {
  const int B = x.dim(0), X = x.dim(1), Y = x.dim(2), A = x.dim(3), CI = x.dim(4);
  const int KX = w.dim(0), KH = w.dim(1), KA = w.dim(2), CO = w.dim(4);
  const long long xs_b = static_cast<long long>(X) * Y * A * CI;
  const long long xs_x = static_cast<long long>(Y) * A * CI;
  const long long xs_y = static_cast<long long>(A) * CI;
  const long long os_b = static_cast<long long>(X) * Y * A * CO;
  const long long os_x = static_cast<long long>(Y) * A * CO;
  const long long os_y = static_cast<long long>(A) * CO;

  if (gb) {
    double* dbp = gb->data();
    const double* g = gout.data();
    const long long npos = gout.size() / CO;
    for (long long p = 0; p < npos; ++p)
      for (int co = 0; co < CO; ++co) dbp[co] += g[p * CO + co];
  }

  std::vector<double> wtT(static_cast<size_t>(CI) * CO);
  for (int kx = 0; kx < KX; ++kx)
    for (int kh = 0; kh < KH; ++kh)
      for (int ka = 0; ka < KA; ++ka) {
        const int dx = kx - KX / 2, dh = kh - KH / 2, da = ka - KA / 2;
        Box box = tap_box(X, Y, A, dx, dh, da);
        if (box.empty) continue;
        const long long tap = ((static_cast<long long>(kx) * KH + kh) * KA + ka) * CI * CO;
        const double* wt = w.data() + tap;
        double* dwt = gw ? gw->data() + tap : nullptr;
        if (gx) transpose_block(wt, CI, CO, wtT.data());
        for (int b = 0; b < B; ++b)
          for (int xo = box.lo[0]; xo < box.hi[0]; ++xo)
            for (int ho = box.lo[1]; ho < box.hi[1]; ++ho) {
              const long long xoff = b * xs_b + (xo + dx) * xs_x + (ho + dh) * xs_y +
                                     static_cast<long long>(box.lo[2] + da) * CI;
              const double* gor = gout.data() + b * os_b + xo * os_x + ho * os_y +
                                  static_cast<long long>(box.lo[2]) * CO;
              const double* xr = x.data() + xoff;
              double* xgr = gx ? gx->data() + xoff : nullptr;
              for (int ao = box.lo[2]; ao < box.hi[2]; ++ao) {
                if (gx) axpy_rows<CIT>(gor, wtT.data(), CO, CI, xgr);
                if (gw) outer_rows<COT>(xr, gor, CI, CO, dwt);
                xr += CI;
                if (gx) xgr += CI;
                gor += CO;
              }
            }
      }
}

void conv3d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                Tensor* gb) {
  dispatch_co(w.dim(4), [&]<int COT>() {
    dispatch_co(x.dim(4), [&]<int CIT>() { conv3d_bwd_t<COT, CIT>(x, w, gout, gx, gw, gb); });
  });
}

// Transposed conv along A: raw output p = a*alpha + ka, cropped by alpha per
// side, so output a2 gets input a through tap ka = a2 + alpha - a*alpha.
template <int COT>
void deconv_fwd_t(const Tensor& x, const Tensor& w, const Tensor& bias, int alpha, Tensor& out) {
  const int B = x.dim(0), X = x.dim(1), Y = x.dim(2), A = x.dim(3), CI = x.dim(4);
  const int KX = w.dim(0), KA = w.dim(1), CO = w.dim(3);
  const int A2 = out.dim(3);

  double* o = out.data();
  const double* bs = bias.data();
  const long long npos = out.size() / CO;
  for (long long p = 0; p < npos; ++p) std::memcpy(o + p * CO, bs, sizeof(double) * CO);

  const long long xs_b = static_cast<long long>(X) * Y * A * CI;
  const long long xs_x = static_cast<long long>(Y) * A * CI;
  const long long xs_y = static_cast<long long>(A) * CI;
  const long long os_b = static_cast<long long>(X) * Y * A2 * CO;
  const long long os_x = static_cast<long long>(Y) * A2 * CO;
  const long long os_y = static_cast<long long>(A2) * CO;

  for (int kx = 0; kx < KX; ++kx) {
    const int dx = kx - KX / 2;
    const int xlo = std::max(0, -dx), xhi = std::min(X, X - dx);
    for (int a2 = 0; a2 < A2; ++a2)
      for (int a = 0; a < A; ++a) {
        const int ka = a2 + alpha - a * alpha;
        if (ka < 0 || ka >= KA) continue;
        const double* wt = w.data() + (static_cast<long long>(kx) * KA + ka) * CI * CO;
        for (int b = 0; b < B; ++b)
          for (int xo = xlo; xo < xhi; ++xo)
            for (int ho = 0; ho < Y; ++ho) {
              const double* xr = x.data() + b * xs_b + (xo + dx) * xs_x + ho * xs_y +
                                 static_cast<long long>(a) * CI;
              double* orow = o + b * os_b + xo * os_x + ho * os_y + static_cast<long long>(a2) * CO;
              axpy_rows<COT>(xr, wt, CI, CO, orow);
            }
      }
  }
}

void deconv_fwd(const Tensor& x, const Tensor& w, const Tensor& bias, int alpha, Tensor& out) {
  dispatch_co(w.dim(3), [&]<int COT>() { deconv_fwd_t<COT>(x, w, bias, alpha, out); });
}

template <int COT, int CIT>
void deconv_bwd_t(const Tensor& x, const Tensor& w, const Tensor& gout, int alpha, Tensor* gx,
                  Tensor* gw, Tensor* gb) {
  const int B = x.dim(0), X = x.dim(1), Y = x.dim(2), A = x.dim(3), CI = x.dim(4);
  const int KX = w.dim(0), KA = w.dim(1), CO = w.dim(3);
  const int A2 = gout.dim(3);

  if (gb) {
    double* dbp = gb->data();
    const double* g = gout.data();
    const long long npos = gout.size() / CO;
    for (long long p = 0; p < npos; ++p)
      for (int co = 0; co < CO; ++co) dbp[co] += g[p * CO + co];
  }

  const long long xs_b = static_cast<long long>(X) * Y * A * CI;
  const long long xs_x = static_cast<long long>(Y) * A * CI;
  const long long xs_y = static_cast<long long>(A) * CI;
  const long long os_b = static_cast<long long>(X) * Y * A2 * CO;
  const long long os_x = static_cast<long long>(Y) * A2 * CO;
  const long long os_y = static_cast<long long>(A2) * CO;

  std::vector<double> wtT(static_cast<size_t>(CI) * CO);
  for (int kx = 0; kx < KX; ++kx) {
    const int dx = kx - KX / 2;
    const int xlo = std::max(0, -dx), xhi = std::min(X, X - dx);
    for (int a2 = 0; a2 < A2; ++a2)
      for (int a = 0; a < A; ++a) {
        const int ka = a2 + alpha - a * alpha;
        if (ka < 0 || ka >= KA) continue;
        const long long tap = (static_cast<long long>(kx) * KA + ka) * CI * CO;
        const double* wt = w.data() + tap;
        double* dwt = gw ? gw->data() + tap : nullptr;
        if (gx) transpose_block(wt, CI, CO, wtT.data());
        for (int b = 0; b < B; ++b)
          for (int xo = xlo; xo < xhi; ++xo)
            for (int ho = 0; ho < Y; ++ho) {
              const long long xoff =
                  b * xs_b + (xo + dx) * xs_x + ho * xs_y + static_cast<long long>(a) * CI;
              const double* gor = gout.data() + b * os_b + xo * os_x + ho * os_y +
                                  static_cast<long long>(a2) * CO;
              if (gx) axpy_rows<CIT>(gor, wtT.data(), CO, CI, gx->data() + xoff);
              if (gw) outer_rows<COT>(x.data() + xoff, gor, CI, CO, dwt);
            }
      }
  }
}

void deconv_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, int alpha, Tensor* gx,
                Tensor* gw, Tensor* gb) {
  dispatch_co(w.dim(3), [&]<int COT>() {
    dispatch_co(x.dim(4), [&]<int CIT>() { deconv_bwd_t<COT, CIT>(x, w, gout, alpha, gx, gw, gb); });
  });
}

struct ShearTap {
  int ishift;
  double frac;
  bool single;
};

ShearTap shear_tap(int a, double center, double amount) {
  const double shift = (a - center) * amount;
  const double fl = std::floor(shift);
  return {static_cast<int>(fl), shift - fl, shift - fl == 0.0};
}

}  // namespace

Node* Tape::make(Tensor value, bool needs_grad) {
  nodes_.push_back(std::make_unique<Node>());
  Node* n = nodes_.back().get();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  return n;
}

Node* Tape::leaf(Tensor value, bool needs_grad) { return make(std::move(value), needs_grad); }

Node* Tape::add(Node* a, Node* b) {
  GEONI_REQUIRE(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor v = Tensor::uninit(a->value.dims());
  const long long n = v.size();
  for (long long i = 0; i < n; ++i) v.data()[i] = a->value.data()[i] + b->value.data()[i];
  Node* out = make(std::move(v), a->needs_grad || b->needs_grad);
  if (out->needs_grad)
    out->backward = [a, b, out] {
      const long long n = out->grad.size();
      if (a->needs_grad) {
        double* g = a->ensure_grad().data();
        for (long long i = 0; i < n; ++i) g[i] += out->grad.data()[i];
      }
      if (b->needs_grad) {
        double* g = b->ensure_grad().data();
        for (long long i = 0; i < n; ++i) g[i] += out->grad.data()[i];
      }
    };
  return out;
}

Node* Tape::leaky_relu(Node* x, double slope) {
  Tensor v = Tensor::uninit(x->value.dims());
  const long long n = v.size();
  for (long long i = 0; i < n; ++i) {
    double xv = x->value.data()[i];
    v.data()[i] = xv >= 0.0 ? xv : slope * xv;
  }
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, slope] {
      double* g = x->ensure_grad().data();
      const long long n = out->grad.size();
      for (long long i = 0; i < n; ++i)
        g[i] += out->grad.data()[i] * (x->value.data()[i] >= 0.0 ? 1.0 : slope);
    };
  return out;
}

Node* Tape::concat0(const std::vector<Node*>& xs) {
  GEONI_REQUIRE(!xs.empty(), "concat0: empty input");
  std::vector<int> dims = xs[0]->value.dims();
  const long long chunk = xs[0]->value.size() / dims[0];
  int total = 0;
  bool needs = false;
  for (Node* x : xs) {
    GEONI_REQUIRE(x->value.ndim() == static_cast<int>(dims.size()), "concat0: rank mismatch");
    for (size_t i = 1; i < dims.size(); ++i)
      GEONI_REQUIRE(x->value.dim(static_cast<int>(i)) == dims[i], "concat0: shape mismatch");
    total += x->value.dim(0);
    needs = needs || x->needs_grad;
  }
  dims[0] = total;
  Tensor v = Tensor::uninit(dims);
  long long off = 0;
  for (Node* x : xs) {
    std::memcpy(v.data() + off, x->value.data(), sizeof(double) * x->value.size());
    off += x->value.size();
  }
  Node* out = make(std::move(v), needs);
  if (needs)
    out->backward = [xs, out, chunk] {
      long long off = 0;
      for (Node* x : xs) {
        const long long n = x->value.size();
        if (x->needs_grad) {
          double* g = x->ensure_grad().data();
          for (long long i = 0; i < n; ++i) g[i] += out->grad.data()[off + i];
        }
        off += n;
      }
      (void)chunk;
    };
  return out;
}

Node* Tape::narrow0(Node* x, int start, int len) {
  GEONI_REQUIRE(start >= 0 && len > 0 && start + len <= x->value.dim(0), "narrow0: bad range");
  std::vector<int> dims = x->value.dims();
  const long long chunk = x->value.size() / dims[0];
  dims[0] = len;
  Tensor v = Tensor::uninit(dims);
  std::memcpy(v.data(), x->value.data() + start * chunk, sizeof(double) * v.size());
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, start, chunk] {
      double* g = x->ensure_grad().data() + start * chunk;
      const long long n = out->grad.size();
      for (long long i = 0; i < n; ++i) g[i] += out->grad.data()[i];
    };
  return out;
}

Node* Tape::pad_width_edge(Node* x, int left, int right) {
  GEONI_REQUIRE(x->value.ndim() == 5, "pad_width_edge expects (B,X,Y,A,C)");
  GEONI_REQUIRE(left >= 0 && right >= 0, "pad_width_edge: negative pad");
  const int B = x->value.dim(0), X = x->value.dim(1);
  const long long row = x->value.size() / (static_cast<long long>(B) * X);
  const int X2 = X + left + right;
  std::vector<int> dims = x->value.dims();
  dims[1] = X2;
  Tensor v = Tensor::uninit(dims);
  for (int b = 0; b < B; ++b)
    for (int xo = 0; xo < X2; ++xo) {
      const int xi = std::clamp(xo - left, 0, X - 1);
      std::memcpy(v.data() + (static_cast<long long>(b) * X2 + xo) * row,
                  x->value.data() + (static_cast<long long>(b) * X + xi) * row,
                  sizeof(double) * row);
    }
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, left, row, B, X, X2] {
      double* g = x->ensure_grad().data();
      for (int b = 0; b < B; ++b)
        for (int xo = 0; xo < X2; ++xo) {
          const int xi = std::clamp(xo - left, 0, X - 1);
          const double* src = out->grad.data() + (static_cast<long long>(b) * X2 + xo) * row;
          double* dst = g + (static_cast<long long>(b) * X + xi) * row;
          for (long long i = 0; i < row; ++i) dst[i] += src[i];
        }
    };
  return out;
}

Node* Tape::crop_width(Node* x, int left, int right) {
  GEONI_REQUIRE(x->value.ndim() == 5, "crop_width expects (B,X,Y,A,C)");
  const int B = x->value.dim(0), X = x->value.dim(1);
  const int X2 = X - left - right;
  GEONI_REQUIRE(left >= 0 && right >= 0 && X2 > 0, "crop_width: bad range");
  const long long row = x->value.size() / (static_cast<long long>(B) * X);
  std::vector<int> dims = x->value.dims();
  dims[1] = X2;
  Tensor v = Tensor::uninit(dims);
  for (int b = 0; b < B; ++b)
    std::memcpy(v.data() + static_cast<long long>(b) * X2 * row,
                x->value.data() + (static_cast<long long>(b) * X + left) * row,
                sizeof(double) * row * X2);
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, left, row, B, X2, X] {
      double* g = x->ensure_grad().data();
      for (int b = 0; b < B; ++b) {
        const double* src = out->grad.data() + static_cast<long long>(b) * X2 * row;
        double* dst = g + (static_cast<long long>(b) * X + left) * row;
        for (long long i = 0; i < row * X2; ++i) dst[i] += src[i];
      }
    };
  return out;
}

Node* Tape::space_to_channel(Node* x, int fold) {
  GEONI_REQUIRE(x->value.ndim() == 5, "space_to_channel expects (B,X,Y,A,C)");
  const int B = x->value.dim(0), X = x->value.dim(1), Y = x->value.dim(2), A = x->value.dim(3),
            C = x->value.dim(4);
  GEONI_REQUIRE(X % fold == 0, "space_to_channel: width not divisible by fold");
  const int X2 = X / fold, C2 = C * fold;
  Tensor v = Tensor::uninit({B, X2, Y, A, C2});
  for (int b = 0; b < B; ++b)
    for (int x2 = 0; x2 < X2; ++x2)
      for (int y = 0; y < Y; ++y)
        for (int a = 0; a < A; ++a)
          for (int c = 0; c < C; ++c)
            for (int p = 0; p < fold; ++p)
              v(b, x2, y, a, c * fold + p) = x->value(b, x2 * fold + p, y, a, c);
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, fold, B, X2, Y, A, C] {
      Tensor& g = x->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int x2 = 0; x2 < X2; ++x2)
          for (int y = 0; y < Y; ++y)
            for (int a = 0; a < A; ++a)
              for (int c = 0; c < C; ++c)
                for (int p = 0; p < fold; ++p)
                  g(b, x2 * fold + p, y, a, c) += out->grad(b, x2, y, a, c * fold + p);
    };
  return out;
}

Node* Tape::channel_to_space(Node* x, int fold) {
  GEONI_REQUIRE(x->value.ndim() == 5, "channel_to_space expects (B,X,Y,A,C)");
  const int B = x->value.dim(0), X = x->value.dim(1), Y = x->value.dim(2), A = x->value.dim(3),
            C = x->value.dim(4);
  GEONI_REQUIRE(C % fold == 0, "channel_to_space: channels not divisible by fold");
  const int X2 = X * fold, C2 = C / fold;
  Tensor v = Tensor::uninit({B, X2, Y, A, C2});
  for (int b = 0; b < B; ++b)
    for (int xi = 0; xi < X; ++xi)
      for (int y = 0; y < Y; ++y)
        for (int a = 0; a < A; ++a)
          for (int c2 = 0; c2 < C2; ++c2)
            for (int p = 0; p < fold; ++p)
              v(b, xi * fold + p, y, a, c2) = x->value(b, xi, y, a, c2 * fold + p);
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, fold, B, X, Y, A, C2] {
      Tensor& g = x->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int xi = 0; xi < X; ++xi)
          for (int y = 0; y < Y; ++y)
            for (int a = 0; a < A; ++a)
              for (int c2 = 0; c2 < C2; ++c2)
                for (int p = 0; p < fold; ++p)
                  g(b, xi, y, a, c2 * fold + p) += out->grad(b, xi * fold + p, y, a, c2);
    };
  return out;
}

Node* Tape::conv3d(Node* x, Node* w, Node* b) {
  GEONI_REQUIRE(x->value.ndim() == 5 && w->value.ndim() == 5 && b->value.ndim() == 1,
                "conv3d: bad ranks");
  GEONI_REQUIRE(w->value.dim(3) == x->value.dim(4), "conv3d: channel mismatch");
  GEONI_REQUIRE(w->value.dim(0) % 2 == 1 && w->value.dim(1) % 2 == 1 && w->value.dim(2) % 2 == 1,
                "conv3d: kernels must be odd");
  GEONI_REQUIRE(b->value.dim(0) == w->value.dim(4), "conv3d: bias size mismatch");
  std::vector<int> dims = x->value.dims();
  dims[4] = w->value.dim(4);
  Tensor v = Tensor::uninit(dims);
  conv3d_fwd(x->value, w->value, b->value, v);
  Node* out = make(std::move(v), x->needs_grad || w->needs_grad || b->needs_grad);
  if (out->needs_grad)
    out->backward = [x, w, b, out] {
      conv3d_bwd(x->value, w->value, out->grad, x->needs_grad ? &x->ensure_grad() : nullptr,
                 w->needs_grad ? &w->ensure_grad() : nullptr,
                 b->needs_grad ? &b->ensure_grad() : nullptr);
    };
  return out;
}

Node* Tape::deconv_angular(Node* x, Node* w, Node* b, int alpha) {
  GEONI_REQUIRE(x->value.ndim() == 5 && w->value.ndim() == 4 && b->value.ndim() == 1,
                "deconv_angular: bad ranks");
  GEONI_REQUIRE(alpha >= 1, "deconv_angular: alpha must be >= 1");
  GEONI_REQUIRE(w->value.dim(1) == 2 * alpha + 1, "deconv_angular: angular kernel must be 2a+1");
  GEONI_REQUIRE(w->value.dim(2) == x->value.dim(4), "deconv_angular: channel mismatch");
  GEONI_REQUIRE(b->value.dim(0) == w->value.dim(3), "deconv_angular: bias size mismatch");
  const int A = x->value.dim(3);
  GEONI_REQUIRE(A >= 2, "deconv_angular: need at least 2 views");
  std::vector<int> dims = x->value.dims();
  dims[3] = alpha * (A - 1) + 1;
  dims[4] = w->value.dim(3);
  Tensor v = Tensor::uninit(dims);
  deconv_fwd(x->value, w->value, b->value, alpha, v);
  Node* out = make(std::move(v), x->needs_grad || w->needs_grad || b->needs_grad);
  if (out->needs_grad)
    out->backward = [x, w, b, out, alpha] {
      deconv_bwd(x->value, w->value, out->grad, alpha,
                 x->needs_grad ? &x->ensure_grad() : nullptr,
                 w->needs_grad ? &w->ensure_grad() : nullptr,
                 b->needs_grad ? &b->ensure_grad() : nullptr);
    };
  return out;
}

Node* Tape::shear(Node* x, double amount, double center) {
  GEONI_REQUIRE(x->value.ndim() == 5, "shear expects (B,X,Y,A,C)");
  const int B = x->value.dim(0), X = x->value.dim(1), Y = x->value.dim(2), A = x->value.dim(3),
            C = x->value.dim(4);
  Tensor v({B, X, Y, A, C});
  for (int a = 0; a < A; ++a) {
    ShearTap tap = shear_tap(a, center, amount);
    for (int b = 0; b < B; ++b)
      for (int xo = 0; xo < X; ++xo) {
        const int x0 = xo + tap.ishift, x1 = x0 + 1;
        if (tap.single) {
          if (x0 < 0 || x0 >= X) continue;
          for (int y = 0; y < Y; ++y)
            for (int c = 0; c < C; ++c) v(b, xo, y, a, c) = x->value(b, x0, y, a, c);
        } else {
          if (x0 < 0 || x1 >= X) continue;
          for (int y = 0; y < Y; ++y)
            for (int c = 0; c < C; ++c)
              v(b, xo, y, a, c) = (1.0 - tap.frac) * x->value(b, x0, y, a, c) +
                                  tap.frac * x->value(b, x1, y, a, c);
        }
      }
  }
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, amount, center, B, X, Y, A, C] {
      Tensor& g = x->ensure_grad();
      for (int a = 0; a < A; ++a) {
        ShearTap tap = shear_tap(a, center, amount);
        for (int b = 0; b < B; ++b)
          for (int xo = 0; xo < X; ++xo) {
            const int x0 = xo + tap.ishift, x1 = x0 + 1;
            if (tap.single) {
              if (x0 < 0 || x0 >= X) continue;
              for (int y = 0; y < Y; ++y)
                for (int c = 0; c < C; ++c) g(b, x0, y, a, c) += out->grad(b, xo, y, a, c);
            } else {
              if (x0 < 0 || x1 >= X) continue;
              for (int y = 0; y < Y; ++y)
                for (int c = 0; c < C; ++c) {
                  const double go = out->grad(b, xo, y, a, c);
                  g(b, x0, y, a, c) += (1.0 - tap.frac) * go;
                  g(b, x1, y, a, c) += tap.frac * go;
                }
            }
          }
      }
    };
  return out;
}

Node* Tape::upsample_angular_linear(Node* x, int alpha) {
  GEONI_REQUIRE(x->value.ndim() == 5, "upsample_angular_linear expects (B,X,Y,A,C)");
  GEONI_REQUIRE(alpha >= 1, "upsample_angular_linear: alpha must be >= 1");
  const int B = x->value.dim(0), X = x->value.dim(1), Y = x->value.dim(2), A = x->value.dim(3),
            C = x->value.dim(4);
  GEONI_REQUIRE(A >= 2 || alpha == 1, "upsample_angular_linear: need at least 2 views");
  const int A2 = alpha * (A - 1) + 1;
  Tensor v = Tensor::uninit({B, X, Y, A2, C});
  for (int b = 0; b < B; ++b)
    for (int xo = 0; xo < X; ++xo)
      for (int y = 0; y < Y; ++y) {
        const double* xrow =
            x->value.data() + b * x->value.stride(0) + xo * x->value.stride(1) + y * x->value.stride(2);
        double* orow = v.data() + b * v.stride(0) + xo * v.stride(1) + y * v.stride(2);
        for (int a2 = 0; a2 < A2; ++a2) {
          const int a0 = a2 / alpha, r = a2 % alpha;
          if (r == 0) {
            for (int c = 0; c < C; ++c) orow[a2 * C + c] = xrow[a0 * C + c];
          } else {
            const double f = static_cast<double>(r) / alpha;
            for (int c = 0; c < C; ++c)
              orow[a2 * C + c] = (1.0 - f) * xrow[a0 * C + c] + f * xrow[(a0 + 1) * C + c];
          }
        }
      }
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad)
    out->backward = [x, out, alpha, B, X, Y, A2, C] {
      Tensor& g = x->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int xo = 0; xo < X; ++xo)
          for (int y = 0; y < Y; ++y) {
            double* grow = g.data() + b * g.stride(0) + xo * g.stride(1) + y * g.stride(2);
            const double* gout =
                out->grad.data() + b * out->grad.stride(0) + xo * out->grad.stride(1) + y * out->grad.stride(2);
            for (int a2 = 0; a2 < A2; ++a2) {
              const int a0 = a2 / alpha, r = a2 % alpha;
              if (r == 0) {
                for (int c = 0; c < C; ++c) grow[a0 * C + c] += gout[a2 * C + c];
              } else {
                const double f = static_cast<double>(r) / alpha;
                for (int c = 0; c < C; ++c) {
                  grow[a0 * C + c] += (1.0 - f) * gout[a2 * C + c];
                  grow[(a0 + 1) * C + c] += f * gout[a2 * C + c];
                }
              }
            }
          }
    };
  return out;
}

namespace {

// Per-sample softmin weights into `w` (D entries); returns nothing fancy,
// shared by forward, backward and the raw helper.
inline void softmin_at(const std::vector<const double*>& costs,
                       const std::vector<const double*>& masks, long long i, double* w, int D) {
  double m = kInvalidCost;
  for (int d = 0; d < D; ++d) {
    double e = masks[d] && masks[d][i] == 0.0 ? kInvalidCost : costs[d][i];
    w[d] = e;
    if (e < m) m = e;
  }
  double z = 0.0;
  for (int d = 0; d < D; ++d) {
    w[d] = std::exp(-(w[d] - m));
    z += w[d];
  }
  for (int d = 0; d < D; ++d) w[d] /= z;
}

}  // namespace

Node* Tape::blend_softmin(const std::vector<Node*>& slices, const std::vector<Node*>& costs,
                          const std::vector<Tensor>& masks) {
  const int D = static_cast<int>(slices.size());
  GEONI_REQUIRE(D > 0 && costs.size() == slices.size() && masks.size() == slices.size(),
                "blend_softmin: hypothesis arrays must align");
  const Tensor& s0 = slices[0]->value;
  GEONI_REQUIRE(s0.ndim() == 5 && s0.dim(4) == 1, "blend_softmin expects (B,X,Y,A,1)");
  bool needs = false;
  for (int d = 0; d < D; ++d) {
    GEONI_REQUIRE(slices[d]->value.same_shape(s0) && costs[d]->value.same_shape(s0) &&
                      masks[d].same_shape(s0),
                  "blend_softmin: shape mismatch");
    needs = needs || slices[d]->needs_grad || costs[d]->needs_grad;
  }
  const long long n = s0.size();

  std::vector<const double*> cp(D), mp(D), sp(D);
  for (int d = 0; d < D; ++d) {
    cp[d] = costs[d]->value.data();
    mp[d] = masks[d].data();
    sp[d] = slices[d]->value.data();
  }
  Tensor v = Tensor::uninit(s0.dims());
  std::vector<double> w(static_cast<size_t>(D));
  for (long long i = 0; i < n; ++i) {
    softmin_at(cp, mp, i, w.data(), D);
    double acc = 0.0;
    for (int d = 0; d < D; ++d) acc += w[d] * sp[d][i];
    v.data()[i] = acc;
  }
  Node* out = make(std::move(v), needs);
  if (needs) {
    std::vector<Node*> sl = slices, co = costs;
    std::vector<Tensor> ms = masks;
    out->backward = [sl, co, ms, out, D, n] {
      std::vector<const double*> cp(D), mp(D), sp(D);
      for (int d = 0; d < D; ++d) {
        cp[d] = co[d]->value.data();
        mp[d] = ms[d].data();
        sp[d] = sl[d]->value.data();
      }
      std::vector<double*> gs(D, nullptr), gc(D, nullptr);
      for (int d = 0; d < D; ++d) {
        if (sl[d]->needs_grad) gs[d] = sl[d]->ensure_grad().data();
        if (co[d]->needs_grad) gc[d] = co[d]->ensure_grad().data();
      }
      std::vector<double> w(static_cast<size_t>(D));
      for (long long i = 0; i < n; ++i) {
        softmin_at(cp, mp, i, w.data(), D);
        double blended = 0.0;
        for (int d = 0; d < D; ++d) blended += w[d] * sp[d][i];
        const double g = out->grad.data()[i];
        for (int d = 0; d < D; ++d) {
          if (gs[d]) gs[d][i] += g * w[d];
          // invalid entries sit at the clamped cost; no gradient flows there
          if (gc[d] && (!mp[d] || mp[d][i] != 0.0))
            gc[d][i] += g * w[d] * (blended - sp[d][i]);
        }
      }
    };
  }
  return out;
}

Node* Tape::weighted_sum(Node* x, const Tensor& weights) {
  GEONI_REQUIRE(x->value.same_shape(weights), "weighted_sum: shape mismatch");
  double acc = 0.0;
  for (long long i = 0; i < x->value.size(); ++i) acc += x->value.data()[i] * weights.data()[i];
  Tensor v({1});
  v(0) = acc;
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad) {
    Tensor w = weights;
    out->backward = [x, out, w] {
      double* g = x->ensure_grad().data();
      const double go = out->grad(0);
      for (long long i = 0; i < w.size(); ++i) g[i] += go * w.data()[i];
    };
  }
  return out;
}

Node* Tape::l1_masked_mean(Node* x, const Tensor& target, const ValidityMask& mask) {
  GEONI_REQUIRE(x->value.same_shape(target), "l1_masked_mean: shape mismatch");
  const long long n = x->value.size();
  const bool has_mask = !mask.empty();
  if (has_mask)
    GEONI_REQUIRE(mask.size() == n, "l1_masked_mean: mask must match elementwise");
  double acc = 0.0;
  long long count = 0;
  for (long long i = 0; i < n; ++i) {
    if (has_mask && mask.data()[i] == 0.0) continue;
    acc += std::abs(x->value.data()[i] - target.data()[i]);
    ++count;
  }
  GEONI_REQUIRE(count > 0, "l1_masked_mean: no valid samples");
  Tensor v({1});
  v(0) = acc / static_cast<double>(count);
  Node* out = make(std::move(v), x->needs_grad);
  if (out->needs_grad) {
    Tensor mask_copy = mask;
    out->backward = [x, out, target, mask_copy, n, count] {
      double* g = x->ensure_grad().data();
      const double go = out->grad(0) / static_cast<double>(count);
      const bool has_mask = !mask_copy.empty();
      for (long long i = 0; i < n; ++i) {
        if (has_mask && mask_copy.data()[i] == 0.0) continue;
        const double diff = x->value.data()[i] - target.data()[i];
        if (diff > 0.0)
          g[i] += go;
        else if (diff < 0.0)
          g[i] -= go;
      }
    };
  }
  return out;
}

void Tape::backward(Node* root) {
  GEONI_REQUIRE(root->value.size() == 1, "backward: root must be scalar");
  GEONI_REQUIRE(root->needs_grad, "backward: root does not depend on any parameter");
  root->ensure_grad().fill(1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

std::vector<Tensor> softmin_weights(const std::vector<Tensor>& costs,
                                    const std::vector<Tensor>& masks) {
  const int D = static_cast<int>(costs.size());
  GEONI_REQUIRE(D > 0 && masks.size() == costs.size(), "softmin_weights: arrays must align");
  const long long n = costs[0].size();
  std::vector<const double*> cp(D), mp(D);
  for (int d = 0; d < D; ++d) {
    GEONI_REQUIRE(costs[d].same_shape(costs[0]) && masks[d].same_shape(costs[0]),
                  "softmin_weights: shape mismatch");
    cp[d] = costs[d].data();
    mp[d] = masks[d].data();
  }
  std::vector<Tensor> out(static_cast<size_t>(D), Tensor(costs[0].dims()));
  std::vector<double> w(static_cast<size_t>(D));
  for (long long i = 0; i < n; ++i) {
    softmin_at(cp, mp, i, w.data(), D);
    for (int d = 0; d < D; ++d) out[static_cast<size_t>(d)].data()[i] = w[d];
  }
  return out;
}

}  // namespace geoni::ad
