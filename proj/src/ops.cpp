#include "idip/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

namespace idip {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Marks `output` as differentiable and records it when a tape is active and
// one of the inputs needs a gradient.
template <typename T>
void record(Tensor<T>& output, std::initializer_list<const Tensor<T>*> inputs,
            typename GradientTape<T>::BackwardFn fn) {
  auto* tape = GradientTape<T>::active();
  if (tape == nullptr || !any_requires_grad<T>(inputs)) return;
  output.set_requires_grad(true);
  tape->push(output, std::move(fn));
}

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* operand) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + operand + " must have rank " + std::to_string(rank) +
                     ", got " + to_string(shape));
  }
}

// Size of the broadcast right operand, after checking the shapes agree.
std::size_t broadcast_extent(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return numel(b);
  bool batch_broadcast = a.size() == b.size() && !a.empty() && b[0] == 1 &&
                         std::equal(a.begin() + 1, a.end(), b.begin() + 1);
  if (!batch_broadcast) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
  return numel(b);
}

template <typename T, typename Forward, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Forward forward,
                    GradA grad_a, GradB grad_b) {
  const std::size_t extent = broadcast_extent(a.shape(), b.shape(), name);
  auto av = a.data();
  auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[i], bv[i % extent]);
  Tensor<T> result(a.shape(), std::move(out));
  auto sa = a.storage();
  auto sb = b.storage();
  record<T>(result, {&a, &b}, [sa, sb, extent, grad_a, grad_b](std::span<const T> g) {
    const auto& x = sa->data;
    const auto& y = sb->data;
    if (sa->requires_grad) {
      auto ga = sa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * grad_a(x[i], y[i % extent]);
    }
    if (sb->requires_grad) {
      auto gb = sb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % extent] += g[i] * grad_b(x[i], y[i % extent]);
    }
  });
  return result;
}

// Source coordinate along one axis for every (kernel tap, output position),
// or -1 where the tap lands in zero padding. `interior` holds, per tap, the
// output range [lo, hi) whose source lies inside the input without padding.
struct TapMap {
  std::vector<std::ptrdiff_t> source;
  std::vector<std::pair<std::size_t, std::size_t>> interior;
};

TapMap tap_map(std::size_t in, std::size_t out, std::size_t taps, std::size_t stride,
               std::size_t pad, Padding padding) {
  TapMap map;
  map.source.resize(taps * out);
  map.interior.assign(taps, {out, out});
  for (std::size_t k = 0; k < taps; ++k) {
    bool started = false;
    for (std::size_t o = 0; o < out; ++o) {
      auto pos = static_cast<std::ptrdiff_t>(o * stride + k) - static_cast<std::ptrdiff_t>(pad);
      std::ptrdiff_t src = -1;
      const bool inside = pos >= 0 && pos < static_cast<std::ptrdiff_t>(in);
      if (inside) {
        src = pos;
        if (!started) map.interior[k].first = o;
        started = true;
        map.interior[k].second = o + 1;
      } else if (padding == Padding::Reflection) {
        src = static_cast<std::ptrdiff_t>(reflect_index(pos, in));
      }
      map.source[k * out + o] = src;
    }
    if (!started) map.interior[k] = {0, 0};
  }
  return map;
}

// Copies one kernel-tap row of the im2col matrix.
template <typename T>
void gather_row(T* dst, const T* src_row, const TapMap& xmap, std::size_t tap, std::size_t wo,
                std::size_t stride) {
  const auto* xm = xmap.source.data() + tap * wo;
  const auto [lo, hi] = xmap.interior[tap];
  for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = xm[ox] >= 0 ? src_row[xm[ox]] : T(0);
  if (hi > lo) {
    const T* src = src_row + xm[lo];
    if (stride == 1) {
      std::copy(src, src + (hi - lo), dst + lo);
    } else {
      for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[(ox - lo) * stride];
    }
  }
  for (std::size_t ox = std::max(lo, hi); ox < wo; ++ox) {
    dst[ox] = xm[ox] >= 0 ? src_row[xm[ox]] : T(0);
  }
}

// Adjoint of gather_row.
template <typename T>
void scatter_row(T* dst_row, const T* src, const TapMap& xmap, std::size_t tap, std::size_t wo,
                 std::size_t stride) {
  const auto* xm = xmap.source.data() + tap * wo;
  const auto [lo, hi] = xmap.interior[tap];
  for (std::size_t ox = 0; ox < lo; ++ox) {
    if (xm[ox] >= 0) dst_row[xm[ox]] += src[ox];
  }
  if (hi > lo) {
    T* dst = dst_row + xm[lo];
    if (stride == 1) {
      for (std::size_t ox = lo; ox < hi; ++ox) dst[ox - lo] += src[ox];
    } else {
      for (std::size_t ox = lo; ox < hi; ++ox) dst[(ox - lo) * stride] += src[ox];
    }
  }
  for (std::size_t ox = std::max(lo, hi); ox < wo; ++ox) {
    if (xm[ox] >= 0) dst_row[xm[ox]] += src[ox];
  }
}

}  // namespace

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dOptions& options) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  require_rank(bias.shape(), 1, "conv2d", "bias");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels but kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " + to_string(kernel.shape()));
  }
  if (bias.dim(0) != cout) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(cout) + " output channels");
  }
  if (options.stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (h + 2 * options.pad < kh || w + 2 * options.pad < kw) {
    throw ShapeError("conv2d: padded input smaller than kernel");
  }
  const std::size_t ho = (h + 2 * options.pad - kh) / options.stride + 1;
  const std::size_t wo = (w + 2 * options.pad - kw) / options.stride + 1;
  const std::size_t taps = cin * kh * kw;
  const std::size_t positions = ho * wo;

  auto rows = tap_map(h, ho, kh, options.stride, options.pad, options.padding);
  auto cols_map = tap_map(w, wo, kw, options.stride, options.pad, options.padding);

  const auto x = input.data();
  std::vector<T> columns(batch * taps * positions);
  for (std::size_t n = 0; n < batch; ++n) {
    T* col = columns.data() + n * taps * positions;
    for (std::size_t c = 0; c < cin; ++c) {
      const T* plane = x.data() + (n * cin + c) * h * w;
      for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
          T* dst = col + ((c * kh + i) * kw + j) * positions;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto sy = rows.source[i * ho + oy];
            if (sy < 0) {
              std::fill_n(dst + oy * wo, wo, T(0));
              continue;
            }
            gather_row(dst + oy * wo, plane + static_cast<std::size_t>(sy) * w, cols_map, j, wo,
                       options.stride);
          }
        }
      }
    }
  }

  std::vector<T> out(batch * cout * positions);
  ConstMatrixMap<T> weights(kernel.data().data(), cout, taps);
  const auto b = bias.data();
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMatrixMap<T> col(columns.data() + n * taps * positions, taps, positions);
    MatrixMap<T> dst(out.data() + n * cout * positions, cout, positions);
    dst.noalias() = weights * col;
    for (std::size_t c = 0; c < cout; ++c) dst.row(c).array() += b[c];
  }

  Tensor<T> result(Shape{batch, cout, ho, wo}, std::move(out));
  auto si = input.storage();
  auto sk = kernel.storage();
  auto sb = bias.storage();
  record<T>(result, {&input, &kernel, &bias},
            [si, sk, sb, columns = std::move(columns), rows = std::move(rows),
             cols_map = std::move(cols_map), stride = options.stride, batch, cin, h, w, cout, kh, kw, ho, wo, taps,
             positions](std::span<const T> g) {
              ConstMatrixMap<T> weights(sk->data.data(), cout, taps);
              if (sk->requires_grad) {
                RowMatrix<T> dw = RowMatrix<T>::Zero(cout, taps);
                for (std::size_t n = 0; n < batch; ++n) {
                  ConstMatrixMap<T> go(g.data() + n * cout * positions, cout, positions);
                  ConstMatrixMap<T> col(columns.data() + n * taps * positions, taps, positions);
                  dw.noalias() += go * col.transpose();
                }
                sk->accumulate_grad(std::span<const T>(dw.data(), cout * taps));
              }
              if (sb->requires_grad) {
                auto gb = sb->grad_buffer();
                // Plain loop: Eigen's vectorized sum peels by address alignment.
                for (std::size_t n = 0; n < batch; ++n) {
                  for (std::size_t c = 0; c < cout; ++c) {
                    const T* row = g.data() + (n * cout + c) * positions;
                    double acc = 0.0;
                    for (std::size_t p = 0; p < positions; ++p) acc += row[p];
                    gb[c] += static_cast<T>(acc);
                  }
                }
              }
              if (si->requires_grad) {
                auto gx = si->grad_buffer();
                RowMatrix<T> dcol(taps, positions);
                for (std::size_t n = 0; n < batch; ++n) {
                  ConstMatrixMap<T> go(g.data() + n * cout * positions, cout, positions);
                  dcol.noalias() = weights.transpose() * go;
                  for (std::size_t c = 0; c < cin; ++c) {
                    T* plane = gx.data() + (n * cin + c) * h * w;
                    for (std::size_t i = 0; i < kh; ++i) {
                      for (std::size_t j = 0; j < kw; ++j) {
                        const T* src = dcol.data() + ((c * kh + i) * kw + j) * positions;
                        for (std::size_t oy = 0; oy < ho; ++oy) {
                          const auto sy = rows.source[i * ho + oy];
                          if (sy < 0) continue;
                          scatter_row(plane + static_cast<std::size_t>(sy) * w, src + oy * wo,
                                      cols_map, j, wo, stride);
                        }
                      }
                    }
                  }
                }
              }
            });
  return result;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  Tensor<T> result(a.shape(), std::move(out));
  auto sa = a.storage();
  record<T>(result, {&a}, [sa, factor](std::span<const T> g) {
    auto ga = sa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double total = 0.0;
  for (auto v : a.data()) total += static_cast<double>(v);
  auto result = Tensor<T>::scalar(static_cast<T>(total));
  auto sa = a.storage();
  record<T>(result, {&a}, [sa](std::span<const T> g) {
    auto ga = sa->grad_buffer();
    for (auto& v : ga) v += g[0];
  });
  return result;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > T(0) ? v : slope * v;
  Tensor<T> result(a.shape(), std::move(out));
  auto sa = a.storage();
  record<T>(result, {&a}, [sa, slope](std::span<const T> g) {
    auto ga = sa->grad_buffer();
    const auto& x = sa->data;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > T(0) ? g[i] : slope * g[i];
  });
  return result;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) {
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  Tensor<T> result(a.shape(), std::move(out));
  auto sa = a.storage();
  auto so = result.storage();
  record<T>(result, {&a}, [sa, so](std::span<const T> g) {
    auto ga = sa->grad_buffer();
    const auto& y = so->data;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
  return result;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, std::size_t factor) {
  require_rank(a.shape(), 4, "upsample_nearest", "input");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<T> out(planes * ho * wo);
  const auto x = a.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < ho; ++y) {
      const T* src = x.data() + (p * h + y / factor) * w;
      T* dst = out.data() + (p * ho + y) * wo;
      for (std::size_t xo = 0; xo < wo; ++xo) dst[xo] = src[xo / factor];
    }
  }
  Tensor<T> result(Shape{a.dim(0), a.dim(1), ho, wo}, std::move(out));
  auto sa = a.storage();
  record<T>(result, {&a}, [sa, planes, h, w, ho, wo, factor](std::span<const T> g) {
    auto ga = sa->grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < ho; ++y) {
        const T* src = g.data() + (p * ho + y) * wo;
        T* dst = ga.data() + (p * h + y / factor) * w;
        for (std::size_t xo = 0; xo < wo; ++xo) dst[xo / factor] += src[xo];
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 4, "concat_channels", "left");
  require_rank(b.shape(), 4, "concat_channels", "right");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  std::vector<T> out;
  out.reserve(batch * (ca + cb) * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    auto av = a.data().subspan(n * ca * plane, ca * plane);
    auto bv = b.data().subspan(n * cb * plane, cb * plane);
    out.insert(out.end(), av.begin(), av.end());
    out.insert(out.end(), bv.begin(), bv.end());
  }
  Tensor<T> result(Shape{batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out));
  auto sa = a.storage();
  auto sb = b.storage();
  record<T>(result, {&a, &b}, [sa, sb, batch, ca, cb, plane](std::span<const T> g) {
    for (std::size_t n = 0; n < batch; ++n) {
      auto gn = g.subspan(n * (ca + cb) * plane, (ca + cb) * plane);
      if (sa->requires_grad) {
        auto ga = sa->grad_buffer();
        for (std::size_t i = 0; i < ca * plane; ++i) ga[n * ca * plane + i] += gn[i];
      }
      if (sb->requires_grad) {
        auto gb = sb->grad_buffer();
        for (std::size_t i = 0; i < cb * plane; ++i) gb[n * cb * plane + i] += gn[ca * plane + i];
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> mse_reduce(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& weight) {
  if (pred.shape() != target.shape() || pred.shape() != weight.shape()) {
    throw ShapeError("mse_reduce: shape mismatch pred " + to_string(pred.shape()) + ", target " +
                     to_string(target.shape()) + ", weight " + to_string(weight.shape()));
  }
  const auto p = pred.data();
  const auto t = target.data();
  const auto wv = weight.data();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (wv[i] == T(0)) continue;
    ++count;
    const double r = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    total += static_cast<double>(wv[i]) * r * r;
  }
  const double norm = static_cast<double>(count > 0 ? count : 1);
  auto result = Tensor<T>::scalar(static_cast<T>(total / norm));
  auto sp = pred.storage();
  auto st = target.storage();
  auto sw = weight.storage();
  record<T>(result, {&pred, &target}, [sp, st, sw, norm](std::span<const T> g) {
    const auto& pv = sp->data;
    const auto& tv = st->data;
    const auto& w = sw->data;
    const T coeff = static_cast<T>(2.0 / norm) * g[0];
    std::span<T> gp = sp->requires_grad ? sp->grad_buffer() : std::span<T>{};
    std::span<T> gt = st->requires_grad ? st->grad_buffer() : std::span<T>{};
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (w[i] == T(0)) continue;
      const T d = coeff * w[i] * (pv[i] - tv[i]);
      if (!gp.empty()) gp[i] += d;
      if (!gt.empty()) gt[i] -= d;
    }
  });
  return result;
}

#define IDIP_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                            const Conv2dOptions&);                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mse_reduce(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

IDIP_INSTANTIATE_OPS(float)
IDIP_INSTANTIATE_OPS(double)

#undef IDIP_INSTANTIATE_OPS

}  // namespace idip
