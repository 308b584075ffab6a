#include "turbohoi/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "turbohoi/error.hpp"

namespace turbohoi::ad {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

[[noreturn]] void shape_fail(Primitive kind, std::span<const Tensor> inputs,
                             const std::string& detail) {
  std::ostringstream os;
  os << primitive_name(kind) << ": " << detail << " (input shapes:";
  for (const auto& t : inputs) os << ' ' << (t.defined() ? to_string(t.shape()) : "<undefined>");
  os << ')';
  throw ShapeError(os.str());
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Flat index into b for every flat index of a, broadcasting b (trailing
// aligned, each extent 1 or equal) over a.
std::vector<std::size_t> broadcast_index(const Shape& a, const Shape& b) {
  const std::size_t nd = a.size();
  const std::size_t offset = nd - b.size();
  std::vector<std::size_t> bstride(nd, 0);
  std::size_t stride = 1;
  for (std::size_t d = nd; d-- > offset;) {
    const std::size_t bd = b[d - offset];
    bstride[d] = (bd == 1) ? 0 : stride;
    stride *= bd;
  }
  std::vector<std::size_t> out(numel(a));
  std::vector<std::size_t> idx(nd, 0);
  std::size_t bflat = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = bflat;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      bflat += bstride[d];
      if (idx[d] < a[d]) break;
      bflat -= bstride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

bool broadcastable(const Shape& a, const Shape& b) {
  if (b.size() > a.size() || b.empty()) return false;
  const std::size_t offset = a.size() - b.size();
  for (std::size_t d = 0; d < b.size(); ++d) {
    if (b[d] != 1 && b[d] != a[d + offset]) return false;
  }
  return true;
}

struct AxisTap {
  std::size_t index;
  double weight;
};

// Bilinear taps along one axis for crop_resize; samples outside [0, length)
// read zeros.
std::vector<std::vector<AxisTap>> axis_taps(std::size_t length, double start,
                                            double extent, std::size_t out) {
  std::vector<std::vector<AxisTap>> taps(out);
  for (std::size_t t = 0; t < out; ++t) {
    const double p = start + (static_cast<double>(t) + 0.5) * extent /
                                 static_cast<double>(out) - 0.5;
    const double fl = std::floor(p);
    const double frac = p - fl;
    const auto lo = static_cast<long long>(fl);
    const long long hi = lo + 1;
    if (lo >= 0 && lo < static_cast<long long>(length) && frac < 1.0) {
      taps[t].push_back({static_cast<std::size_t>(lo), 1.0 - frac});
    }
    if (hi >= 0 && hi < static_cast<long long>(length) && frac > 0.0) {
      taps[t].push_back({static_cast<std::size_t>(hi), frac});
    }
  }
  return taps;
}

struct Forward {
  Shape shape;
  std::vector<double> values;
};

void expect_inputs(Primitive kind, std::span<const Tensor> in, std::size_t n) {
  if (in.size() != n) {
    shape_fail(kind, in, "expected " + std::to_string(n) + " inputs, got " +
                             std::to_string(in.size()));
  }
  for (const auto& t : in) {
    if (!t.defined()) shape_fail(kind, in, "undefined input tensor");
  }
}

Forward run_forward(Primitive kind, std::span<const Tensor> in,
                    const Attrs& attrs, Node& node) {
  switch (kind) {
    case Primitive::kMatmul: {
      expect_inputs(kind, in, 2);
      const auto& as = in[0].shape();
      const auto& bs = in[1].shape();
      if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
        shape_fail(kind, in, "need [n,k] x [k,m]");
      }
      const std::size_t n = as[0], k = as[1], m = bs[1];
      const auto a = in[0].values();
      const auto b = in[1].values();
      std::vector<double> out(n * m, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          if (av == 0.0) continue;
          const double* brow = b.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
      }
      return {{n, m}, std::move(out)};
    }
    case Primitive::kAdd:
    case Primitive::kSub:
    case Primitive::kElementwiseMul: {
      expect_inputs(kind, in, 2);
      if (!broadcastable(in[0].shape(), in[1].shape())) {
        shape_fail(kind, in, "second operand must broadcast into the first");
      }
      const auto a = in[0].values();
      const auto b = in[1].values();
      std::vector<double> out(a.size());
      if (in[0].shape() == in[1].shape()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = kind == Primitive::kAdd   ? a[i] + b[i]
                   : kind == Primitive::kSub ? a[i] - b[i]
                                             : a[i] * b[i];
        }
      } else {
        node.saved_index = broadcast_index(in[0].shape(), in[1].shape());
        const auto& bi = node.saved_index;
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = kind == Primitive::kAdd   ? a[i] + b[bi[i]]
                   : kind == Primitive::kSub ? a[i] - b[bi[i]]
                                             : a[i] * b[bi[i]];
        }
      }
      return {in[0].shape(), std::move(out)};
    }
    case Primitive::kConcat: {
      if (in.empty()) shape_fail(kind, in, "needs at least one input");
      for (const auto& t : in) {
        if (!t.defined()) shape_fail(kind, in, "undefined input tensor");
      }
      const Shape& first = in[0].shape();
      const std::size_t axis = attrs.axis;
      if (axis >= first.size()) shape_fail(kind, in, "axis out of range");
      Shape out_shape = first;
      out_shape[axis] = 0;
      for (const auto& t : in) {
        const auto& s = t.shape();
        if (s.size() != first.size()) shape_fail(kind, in, "rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
          if (d != axis && s[d] != first[d]) shape_fail(kind, in, "extent mismatch off the concat axis");
        }
        out_shape[axis] += s[axis];
      }
      std::size_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
      for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
      std::vector<double> out;
      out.reserve(numel(out_shape));
      for (std::size_t o = 0; o < outer; ++o) {
        for (const auto& t : in) {
          const std::size_t chunk = t.shape()[axis] * inner;
          const auto v = t.values();
          out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(o * chunk),
                     v.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk));
        }
      }
      return {std::move(out_shape), std::move(out)};
    }
    case Primitive::kSlice: {
      expect_inputs(kind, in, 1);
      const Shape& s = in[0].shape();
      if (attrs.axis >= s.size()) shape_fail(kind, in, "axis out of range");
      if (attrs.begin >= attrs.end || attrs.end > s[attrs.axis]) {
        shape_fail(kind, in, "need begin < end <= extent");
      }
      std::size_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < attrs.axis; ++d) outer *= s[d];
      for (std::size_t d = attrs.axis + 1; d < s.size(); ++d) inner *= s[d];
      Shape out_shape = s;
      out_shape[attrs.axis] = attrs.end - attrs.begin;
      const auto v = in[0].values();
      std::vector<double> out;
      out.reserve(numel(out_shape));
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = (o * s[attrs.axis] + attrs.begin) * inner;
        out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(base),
                   v.begin() + static_cast<std::ptrdiff_t>(base + (attrs.end - attrs.begin) * inner));
      }
      return {std::move(out_shape), std::move(out)};
    }
    case Primitive::kReshape: {
      expect_inputs(kind, in, 1);
      if (attrs.shape.empty() || numel(attrs.shape) != in[0].numel() ||
          std::find(attrs.shape.begin(), attrs.shape.end(), 0u) != attrs.shape.end()) {
        shape_fail(kind, in, "target " + to_string(attrs.shape) + " does not hold the same element count");
      }
      const auto v = in[0].values();
      return {attrs.shape, std::vector<double>(v.begin(), v.end())};
    }
    case Primitive::kSigmoid:
    case Primitive::kRelu:
    case Primitive::kSmoothL1:
    case Primitive::kScalarMul: {
      expect_inputs(kind, in, 1);
      const auto v = in[0].values();
      std::vector<double> out(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        switch (kind) {
          case Primitive::kSigmoid: out[i] = sigmoid_scalar(x); break;
          case Primitive::kRelu: out[i] = x > 0.0 ? x : 0.0; break;
          case Primitive::kSmoothL1: {
            const double ax = std::abs(x);
            out[i] = ax < 1.0 ? 0.5 * x * x : ax - 0.5;
            break;
          }
          default: out[i] = attrs.scalar * x; break;
        }
      }
      return {in[0].shape(), std::move(out)};
    }
    case Primitive::kConv2d: {
      expect_inputs(kind, in, 3);
      const auto& xs = in[0].shape();
      const auto& ws = in[1].shape();
      const auto& bs = in[2].shape();
      if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != 3 ||
          ws[3] != 3 || bs.size() != 1 || bs[0] != ws[0]) {
        shape_fail(kind, in, "need x [ci,h,w], weight [co,ci,3,3], bias [co]");
      }
      const std::size_t ci_n = xs[0], h = xs[1], w = xs[2], co_n = ws[0];
      const auto x = in[0].values();
      const auto wt = in[1].values();
      const auto bias = in[2].values();
      std::vector<double> out(co_n * h * w);
      for (std::size_t co = 0; co < co_n; ++co) {
        double* oc = out.data() + co * h * w;
        std::fill(oc, oc + h * w, bias[co]);
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const double* xc = x.data() + ci * h * w;
          for (int ky = 0; ky < 3; ++ky) {
            const int dy = ky - 1;
            const std::size_t y0 = dy < 0 ? 1 : 0;
            const std::size_t y1 = dy > 0 ? h - 1 : h;
            for (int kx = 0; kx < 3; ++kx) {
              const int dx = kx - 1;
              const double wv = wt[((co * ci_n + ci) * 3 + ky) * 3 + kx];
              if (wv == 0.0) continue;
              const std::size_t x0 = dx < 0 ? 1 : 0;
              const std::size_t x1 = dx > 0 ? w - 1 : w;
              for (std::size_t yy = y0; yy < y1; ++yy) {
                const double* src = xc + (yy + dy) * w + dx;
                double* dst = oc + yy * w;
                for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
              }
            }
          }
        }
      }
      return {{co_n, h, w}, std::move(out)};
    }
    case Primitive::kNearestUpsample: {
      expect_inputs(kind, in, 1);
      const auto& s = in[0].shape();
      if (s.size() != 3) shape_fail(kind, in, "need [c,h,w]");
      const std::size_t c = s[0], h = s[1], w = s[2];
      const auto v = in[0].values();
      std::vector<double> out(c * 4 * h * w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
          for (std::size_t x = 0; x < 2 * w; ++x) {
            out[(ch * 2 * h + y) * 2 * w + x] = v[(ch * h + y / 2) * w + x / 2];
          }
        }
      }
      return {{c, 2 * h, 2 * w}, std::move(out)};
    }
    case Primitive::kCropResize: {
      expect_inputs(kind, in, 1);
      const auto& s = in[0].shape();
      if (s.size() != 3) shape_fail(kind, in, "need [c,h,w]");
      const auto& box = attrs.box;
      if (attrs.out_size == 0 || !(box[2] > 0.0) || !(box[3] > 0.0) ||
          !std::isfinite(box[0]) || !std::isfinite(box[1]) ||
          !std::isfinite(box[2]) || !std::isfinite(box[3])) {
        shape_fail(kind, in, "need a finite box with positive extent and out_size > 0");
      }
      const std::size_t c = s[0], h = s[1], w = s[2], o = attrs.out_size;
      const auto ty = axis_taps(h, box[1], box[3], o);
      const auto tx = axis_taps(w, box[0], box[2], o);
      const auto v = in[0].values();
      std::vector<double> out(c * o * o, 0.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < o; ++i) {
          for (std::size_t j = 0; j < o; ++j) {
            double acc = 0.0;
            for (const auto& a : ty[i]) {
              for (const auto& b : tx[j]) {
                acc += a.weight * b.weight * v[(ch * h + a.index) * w + b.index];
              }
            }
            out[(ch * o + i) * o + j] = acc;
          }
        }
      }
      return {{c, o, o}, std::move(out)};
    }
    case Primitive::kSoftmax: {
      expect_inputs(kind, in, 1);
      const auto& s = in[0].shape();
      const std::size_t last = s.back();
      const std::size_t rows = in[0].numel() / last;
      const auto v = in[0].values();
      std::vector<double> out(v.size());
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = v.data() + r * last;
        double* y = out.data() + r * last;
        const double mx = *std::max_element(x, x + last);
        double sum = 0.0;
        for (std::size_t j = 0; j < last; ++j) sum += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < last; ++j) y[j] /= sum;
      }
      return {s, std::move(out)};
    }
    case Primitive::kSigmoidCrossEntropy: {
      expect_inputs(kind, in, 2);
      if (in[0].shape() != in[1].shape()) shape_fail(kind, in, "logits and labels must match");
      const auto x = in[0].values();
      const auto y = in[1].values();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
      }
      return {in[0].shape(), std::move(out)};
    }
    case Primitive::kSoftmaxCrossEntropyOneHot: {
      expect_inputs(kind, in, 1);
      const auto& s = in[0].shape();
      if (s.size() != 2) shape_fail(kind, in, "need logits [rows, classes]");
      const std::size_t rows = s[0], cls = s[1];
      if (attrs.indices.size() != rows) shape_fail(kind, in, "need one target index per row");
      const auto v = in[0].values();
      node.saved.resize(v.size());
      std::vector<double> out(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        if (attrs.indices[r] >= cls) shape_fail(kind, in, "target index out of range");
        const double* x = v.data() + r * cls;
        double* p = node.saved.data() + r * cls;
        const double mx = *std::max_element(x, x + cls);
        double sum = 0.0;
        for (std::size_t j = 0; j < cls; ++j) sum += (p[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < cls; ++j) p[j] /= sum;
        out[r] = mx + std::log(sum) - x[attrs.indices[r]];
      }
      return {{rows}, std::move(out)};
    }
    case Primitive::kSoftArgmax2d: {
      expect_inputs(kind, in, 1);
      const auto& s = in[0].shape();
      if (s.size() != 3) shape_fail(kind, in, "need logits [k,h,w]");
      const std::size_t k = s[0], h = s[1], w = s[2], hw = h * w;
      const auto v = in[0].values();
      node.saved.resize(v.size());
      node.saved_index.resize(k);
      std::vector<double> out(k * 3);
      for (std::size_t c = 0; c < k; ++c) {
        const double* x = v.data() + c * hw;
        double* p = node.saved.data() + c * hw;
        const double mx = *std::max_element(x, x + hw);
        double sum = 0.0;
        for (std::size_t j = 0; j < hw; ++j) sum += (p[j] = std::exp(x[j] - mx));
        double ex = 0.0, ey = 0.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < hw; ++j) {
          p[j] /= sum;
          ex += p[j] * (static_cast<double>(j % w) + 0.5) / static_cast<double>(w);
          ey += p[j] * (static_cast<double>(j / w) + 0.5) / static_cast<double>(h);
          if (p[j] > p[arg]) arg = j;
        }
        node.saved_index[c] = arg;
        out[c * 3 + 0] = ex;
        out[c * 3 + 1] = ey;
        out[c * 3 + 2] = p[arg];
      }
      return {{k, 3}, std::move(out)};
    }
    case Primitive::kReduceSum:
    case Primitive::kReduceMean: {
      expect_inputs(kind, in, 1);
      const auto v = in[0].values();
      double sum = 0.0;
      for (double x : v) sum += x;
      if (kind == Primitive::kReduceMean) sum /= static_cast<double>(v.size());
      return {{1}, {sum}};
    }
  }
  throw std::invalid_argument("apply_primitive: unknown primitive kind " +
                              std::to_string(static_cast<int>(kind)));
}

void accumulate(TensorImpl& t, std::size_t i, double g) { t.grad[i] += g; }

void run_backward(const Node& node) {
  const auto& out = *node.output;
  const std::vector<double>& go = out.grad;
  const auto& in = node.inputs;
  auto wants = [&](std::size_t i) { return in[i]->requires_grad; };

  switch (node.kind) {
    case Primitive::kMatmul: {
      const std::size_t n = in[0]->shape[0], k = in[0]->shape[1], m = in[1]->shape[1];
      const auto& a = in[0]->values;
      const auto& b = in[1]->values;
      if (wants(0)) {
        auto& ga = in[0]->grad;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += go[i * m + j] * b[p * m + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (wants(1)) {
        auto& gb = in[1]->grad;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += av * go[i * m + j];
          }
        }
      }
      return;
    }
    case Primitive::kAdd:
    case Primitive::kSub:
    case Primitive::kElementwiseMul: {
      const bool same = node.saved_index.empty();
      const auto& bi = node.saved_index;
      const auto& a = in[0]->values;
      const auto& b = in[1]->values;
      const std::size_t n = go.size();
      if (wants(0)) {
        for (std::size_t i = 0; i < n; ++i) {
          const double bv = same ? b[i] : b[bi[i]];
          accumulate(*in[0], i, node.kind == Primitive::kElementwiseMul ? go[i] * bv : go[i]);
        }
      }
      if (wants(1)) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = same ? i : bi[i];
          const double g = node.kind == Primitive::kAdd   ? go[i]
                           : node.kind == Primitive::kSub ? -go[i]
                                                          : go[i] * a[i];
          accumulate(*in[1], j, g);
        }
      }
      return;
    }
    case Primitive::kConcat: {
      const std::size_t axis = node.attrs.axis;
      const Shape& first = in[0]->shape;
      std::size_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
      for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
      std::size_t pos = 0;
      for (std::size_t o = 0; o < outer; ++o) {
        for (const auto& t : in) {
          const std::size_t chunk = t->shape[axis] * inner;
          if (t->requires_grad) {
            for (std::size_t i = 0; i < chunk; ++i) t->grad[o * chunk + i] += go[pos + i];
          }
          pos += chunk;
        }
      }
      return;
    }
    case Primitive::kSlice: {
      if (!wants(0)) return;
      const Shape& s = in[0]->shape;
      const auto& at = node.attrs;
      std::size_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < at.axis; ++d) outer *= s[d];
      for (std::size_t d = at.axis + 1; d < s.size(); ++d) inner *= s[d];
      const std::size_t chunk = (at.end - at.begin) * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = (o * s[at.axis] + at.begin) * inner;
        for (std::size_t i = 0; i < chunk; ++i) in[0]->grad[base + i] += go[o * chunk + i];
      }
      return;
    }
    case Primitive::kReshape: {
      if (!wants(0)) return;
      for (std::size_t i = 0; i < go.size(); ++i) in[0]->grad[i] += go[i];
      return;
    }
    case Primitive::kSigmoid: {
      if (!wants(0)) return;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double y = out.values[i];
        in[0]->grad[i] += go[i] * y * (1.0 - y);
      }
      return;
    }
    case Primitive::kRelu: {
      if (!wants(0)) return;
      const auto& x = in[0]->values;
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (x[i] > 0.0) in[0]->grad[i] += go[i];
      }
      return;
    }
    case Primitive::kSmoothL1: {
      if (!wants(0)) return;
      const auto& x = in[0]->values;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double d = std::abs(x[i]) < 1.0 ? x[i] : (x[i] > 0.0 ? 1.0 : -1.0);
        in[0]->grad[i] += go[i] * d;
      }
      return;
    }
    case Primitive::kScalarMul: {
      if (!wants(0)) return;
      for (std::size_t i = 0; i < go.size(); ++i) in[0]->grad[i] += go[i] * node.attrs.scalar;
      return;
    }
    case Primitive::kConv2d: {
      const auto& xs = in[0]->shape;
      const std::size_t ci_n = xs[0], h = xs[1], w = xs[2], co_n = in[1]->shape[0];
      const auto& x = in[0]->values;
      const auto& wt = in[1]->values;
      const bool gx_on = wants(0), gw_on = wants(1), gb_on = wants(2);
      for (std::size_t co = 0; co < co_n; ++co) {
        const double* gc = go.data() + co * h * w;
        if (gb_on) {
          double acc = 0.0;
          for (std::size_t i = 0; i < h * w; ++i) acc += gc[i];
          in[2]->grad[co] += acc;
        }
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const double* xc = x.data() + ci * h * w;
          double* gxc = gx_on ? in[0]->grad.data() + ci * h * w : nullptr;
          for (int ky = 0; ky < 3; ++ky) {
            const int dy = ky - 1;
            const std::size_t y0 = dy < 0 ? 1 : 0;
            const std::size_t y1 = dy > 0 ? h - 1 : h;
            for (int kx = 0; kx < 3; ++kx) {
              const int dx = kx - 1;
              const std::size_t widx = ((co * ci_n + ci) * 3 + ky) * 3 + kx;
              const double wv = wt[widx];
              const std::size_t x0 = dx < 0 ? 1 : 0;
              const std::size_t x1 = dx > 0 ? w - 1 : w;
              double acc = 0.0;
              for (std::size_t yy = y0; yy < y1; ++yy) {
                const double* src = xc + (yy + dy) * w + dx;
                const double* g = gc + yy * w;
                if (gw_on) {
                  for (std::size_t xx = x0; xx < x1; ++xx) acc += g[xx] * src[xx];
                }
                if (gx_on && wv != 0.0) {
                  double* dst = gxc + (yy + dy) * w + dx;
                  for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] += wv * g[xx];
                }
              }
              if (gw_on) in[1]->grad[widx] += acc;
            }
          }
        }
      }
      return;
    }
    case Primitive::kNearestUpsample: {
      if (!wants(0)) return;
      const auto& s = in[0]->shape;
      const std::size_t c = s[0], h = s[1], w = s[2];
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
          for (std::size_t x = 0; x < 2 * w; ++x) {
            in[0]->grad[(ch * h + y / 2) * w + x / 2] += go[(ch * 2 * h + y) * 2 * w + x];
          }
        }
      }
      return;
    }
    case Primitive::kCropResize: {
      if (!wants(0)) return;
      const auto& s = in[0]->shape;
      const std::size_t c = s[0], h = s[1], w = s[2], o = node.attrs.out_size;
      const auto& box = node.attrs.box;
      const auto ty = axis_taps(h, box[1], box[3], o);
      const auto tx = axis_taps(w, box[0], box[2], o);
      auto& gx = in[0]->grad;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < o; ++i) {
          for (std::size_t j = 0; j < o; ++j) {
            const double g = go[(ch * o + i) * o + j];
            for (const auto& a : ty[i]) {
              for (const auto& b : tx[j]) {
                gx[(ch * h + a.index) * w + b.index] += a.weight * b.weight * g;
              }
            }
          }
        }
      }
      return;
    }
    case Primitive::kSoftmax: {
      if (!wants(0)) return;
      const std::size_t last = out.shape.back();
      const std::size_t rows = go.size() / last;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = out.values.data() + r * last;
        const double* g = go.data() + r * last;
        double dot = 0.0;
        for (std::size_t j = 0; j < last; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < last; ++j) in[0]->grad[r * last + j] += y[j] * (g[j] - dot);
      }
      return;
    }
    case Primitive::kSigmoidCrossEntropy: {
      const auto& x = in[0]->values;
      const auto& y = in[1]->values;
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (wants(0)) in[0]->grad[i] += go[i] * (sigmoid_scalar(x[i]) - y[i]);
        if (wants(1)) in[1]->grad[i] += -go[i] * x[i];
      }
      return;
    }
    case Primitive::kSoftmaxCrossEntropyOneHot: {
      if (!wants(0)) return;
      const std::size_t rows = in[0]->shape[0], cls = in[0]->shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = go[r];
        const double* p = node.saved.data() + r * cls;
        for (std::size_t j = 0; j < cls; ++j) {
          const double onehot = j == node.attrs.indices[r] ? 1.0 : 0.0;
          in[0]->grad[r * cls + j] += g * (p[j] - onehot);
        }
      }
      return;
    }
    case Primitive::kSoftArgmax2d: {
      if (!wants(0)) return;
      const auto& s = in[0]->shape;
      const std::size_t k = s[0], h = s[1], w = s[2], hw = h * w;
      for (std::size_t c = 0; c < k; ++c) {
        const double* p = node.saved.data() + c * hw;
        const double ex = out.values[c * 3 + 0];
        const double ey = out.values[c * 3 + 1];
        const double gx = go[c * 3 + 0], gy = go[c * 3 + 1], gp = go[c * 3 + 2];
        const std::size_t arg = node.saved_index[c];
        const double pa = p[arg];
        for (std::size_t j = 0; j < hw; ++j) {
          const double cx = (static_cast<double>(j % w) + 0.5) / static_cast<double>(w);
          const double cy = (static_cast<double>(j / w) + 0.5) / static_cast<double>(h);
          double g = gx * p[j] * (cx - ex) + gy * p[j] * (cy - ey);
          g += gp * pa * ((j == arg ? 1.0 : 0.0) - p[j]);
          in[0]->grad[c * hw + j] += g;
        }
      }
      return;
    }
    case Primitive::kReduceSum:
    case Primitive::kReduceMean: {
      if (!wants(0)) return;
      const double scale = node.kind == Primitive::kReduceMean
                               ? 1.0 / static_cast<double>(in[0]->values.size())
                               : 1.0;
      for (double& g : in[0]->grad) g += go[0] * scale;
      return;
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s + ']';
}

const char* primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kConcat: return "concat";
    case Primitive::kSlice: return "slice";
    case Primitive::kReshape: return "reshape";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kRelu: return "relu";
    case Primitive::kConv2d: return "conv2d";
    case Primitive::kNearestUpsample: return "nearest_upsample";
    case Primitive::kElementwiseMul: return "elementwise_mul";
    case Primitive::kCropResize: return "crop_resize";
    case Primitive::kSoftmax: return "softmax_over_last_axis";
    case Primitive::kSmoothL1: return "smooth_l1";
    case Primitive::kSigmoidCrossEntropy: return "sigmoid_cross_entropy";
    case Primitive::kSoftmaxCrossEntropyOneHot: return "softmax_cross_entropy_one_hot";
    case Primitive::kSoftArgmax2d: return "soft_argmax_2d";
    case Primitive::kReduceSum: return "reduce_sum";
    case Primitive::kReduceMean: return "reduce_mean";
    case Primitive::kScalarMul: return "scalar_mul";
  }
  return "unknown";
}

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty() || std::find(shape.begin(), shape.end(), 0u) != shape.end()) {
    throw ShapeError("tensor: extents must be positive, got " + to_string(shape));
  }
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                     std::to_string(ad::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->values.size(); }
std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
}
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}
std::vector<double> Tensor::grad_or_zero() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->values.size(), 0.0);
  return impl_->grad;
}
void Tensor::zero_grad() { impl_->grad.clear(); }
bool Tensor::is_leaf() const { return impl_->node == nullptr; }
const Node* Tensor::node() const { return impl_->node.get(); }

Graph Graph::collect(const Tensor& root) {
  Graph g;
  if (!root.defined() || root.is_leaf()) return g;
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    g.order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && in->node && seen.insert(in->node.get()).second) {
        stack.push_back(in->node.get());
      }
    }
  }
  std::sort(g.order.begin(), g.order.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });
  return g;
}

Tensor apply_primitive(Primitive kind, std::span<const Tensor> inputs, const Attrs& attrs) {
  if (static_cast<std::size_t>(kind) >= kNumPrimitives) {
    throw std::invalid_argument("apply_primitive: unknown primitive kind " +
                                std::to_string(static_cast<int>(kind)));
  }
  auto node = std::make_shared<Node>();
  Forward fw = run_forward(kind, inputs, attrs, *node);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(fw.shape);
  impl->values = std::move(fw.values);
  bool any_grad = false;
  for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
  if (any_grad) {
    node->kind = kind;
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    node->attrs = attrs;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->output = impl.get();
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return make_tensor(std::move(impl));
}

void backward(const Graph& graph, const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  if (loss.is_leaf()) {
    auto& g = loss.impl()->grad;
    if (g.empty()) g.assign(1, 0.0);
    g[0] += 1.0;
    return;
  }
  for (const Node* n : graph.order) n->output->grad.assign(n->output->values.size(), 0.0);
  for (const Node* n : graph.order) {
    for (const auto& in : n->inputs) {
      if (in->requires_grad && in->grad.empty()) in->grad.assign(in->values.size(), 0.0);
    }
  }
  loss.impl()->grad[0] = 1.0;
  for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) run_backward(**it);
}

void backward(const Tensor& loss) { backward(Graph::collect(loss), loss); }

}  // namespace turbohoi::ad
