#include "yolo4/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "yolo4/error.hpp"
#include "yolo4/parallel.hpp"

namespace yolo4 {

ConvParams ConvParams::zeros(int out_ch, int in_ch, int kernel, int stride, int padding) {
  ConvParams p;
  p.out_ch = out_ch;
  p.in_ch = in_ch;
  p.kernel = kernel;
  p.stride = stride;
  p.padding = padding;
  p.weights.assign(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel, 0.0f);
  p.bias.assign(static_cast<std::size_t>(out_ch), 0.0f);
  return p;
}

BatchNormParams BatchNormParams::identity(int channels, float epsilon) {
  BatchNormParams bn;
  const auto n = static_cast<std::size_t>(channels);
  bn.gamma.assign(n, 1.0f);
  bn.beta.assign(n, 0.0f);
  bn.running_mean.assign(n, 0.0f);
  bn.running_var.assign(n, 1.0f);
  bn.epsilon = epsilon;
  return bn;
}

int conv_output_extent(int in, int kernel, int stride, int padding, const char* axis) {
  if (stride < 1) throw DimensionError(axis, "stride must be positive");
  if (padding < 0) throw DimensionError(axis, "padding must be nonnegative");
  const int span = in + 2 * padding - kernel;
  if (span < 0) {
    throw DimensionError(axis, "extent " + std::to_string(in) + " too small for kernel " +
                                   std::to_string(kernel));
  }
  return span / stride + 1;
}

namespace {

void validate_conv(const Tensor& x, const ConvParams& p) {
  if (p.kernel < 1) throw DimensionError("kernel", "kernel size must be positive");
  if (x.c() != p.in_ch) {
    throw DimensionError("c", "input has " + std::to_string(x.c()) +
                                  " channels, convolution expects " + std::to_string(p.in_ch));
  }
  const auto expected = static_cast<std::size_t>(p.out_ch) * p.in_ch * p.kernel * p.kernel;
  if (p.weights.size() != expected) {
    throw DimensionError("weights", "expected " + std::to_string(expected) + " values, got " +
                                        std::to_string(p.weights.size()));
  }
  if (p.bias.size() != static_cast<std::size_t>(p.out_ch)) {
    throw DimensionError("bias", "expected one bias per output channel");
  }
}

// Keeps one im2col chunk around 16 MiB.
constexpr std::size_t kColBudget = std::size_t{4} << 20;

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  validate_conv(x, p);
  const int out_h = conv_output_extent(x.h(), p.kernel, p.stride, p.padding, "h");
  const int out_w = conv_output_extent(x.w(), p.kernel, p.stride, p.padding, "w");
  Tensor out(Shape{x.n(), p.out_ch, out_h, out_w});

  const int k = p.in_ch * p.kernel * p.kernel;
  const int out_plane = out_h * out_w;
  const bool direct = p.kernel == 1 && p.stride == 1 && p.padding == 0;
  const int rows_per_chunk =
      direct ? out_h
             : static_cast<int>(std::clamp<std::size_t>(
                   kColBudget / (static_cast<std::size_t>(k) * out_w), 1, out_h));
  std::vector<float> col;
  if (!direct) col.resize(static_cast<std::size_t>(k) * rows_per_chunk * out_w);

  for (int b = 0; b < x.n(); ++b) {
    float* out_base = out.data().data() + static_cast<std::size_t>(b) * p.out_ch * out_plane;
    for (int oc = 0; oc < p.out_ch; ++oc) {
      std::fill_n(out_base + static_cast<std::size_t>(oc) * out_plane, out_plane, p.bias[oc]);
    }
    const float* in_base = x.data().data() + static_cast<std::size_t>(b) * x.c() * x.h() * x.w();
    if (direct) {
      gemm(p.out_ch, out_plane, k, p.weights.data(), k, in_base, out_plane, out_base, out_plane,
           true);
      continue;
    }
    for (int oy0 = 0; oy0 < out_h; oy0 += rows_per_chunk) {
      const int rows = std::min(rows_per_chunk, out_h - oy0);
      const int cols = rows * out_w;
      parallel_for(static_cast<std::size_t>(k), [&](std::size_t row) {
        const int kx = static_cast<int>(row) % p.kernel;
        const int ky = (static_cast<int>(row) / p.kernel) % p.kernel;
        const int ic = static_cast<int>(row) / (p.kernel * p.kernel);
        const float* src = in_base + static_cast<std::size_t>(ic) * x.h() * x.w();
        float* dst = col.data() + row * cols;
        for (int oy = oy0; oy < oy0 + rows; ++oy) {
          const int iy = oy * p.stride - p.padding + ky;
          float* drow = dst + static_cast<std::size_t>(oy - oy0) * out_w;
          if (iy < 0 || iy >= x.h()) {
            std::fill_n(drow, out_w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * x.w();
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * p.stride - p.padding + kx;
            drow[ox] = (ix >= 0 && ix < x.w()) ? srow[ix] : 0.0f;
          }
        }
      });
      gemm(p.out_ch, cols, k, p.weights.data(), k, col.data(), cols, out_base + oy0 * out_w,
           out_plane, true);
    }
  }
  return out;
}

void batchnorm_inplace(Tensor& x, const BatchNormParams& bn) {
  if (bn.channels() != x.c()) throw DimensionError("c", "batch-norm channel count mismatch");
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < x.c(); ++ch) {
      const double scale = bn.gamma[ch] / std::sqrt(static_cast<double>(bn.running_var[ch]) +
                                                    bn.epsilon);
      const double mean = bn.running_mean[ch];
      const double beta = bn.beta[ch];
      for (float& v : x.plane(b, ch)) v = static_cast<float>((v - mean) * scale + beta);
    }
  }
}

ConvParams fold_batchnorm(const ConvParams& conv, const BatchNormParams& bn) {
  const auto channels = static_cast<std::size_t>(conv.out_ch);
  if (bn.gamma.size() != channels || bn.beta.size() != channels ||
      bn.running_mean.size() != channels || bn.running_var.size() != channels) {
    throw DimensionError("c", "batch-norm has " + std::to_string(bn.gamma.size()) +
                                  " channels, convolution has " + std::to_string(conv.out_ch));
  }
  ConvParams folded = conv;
  const std::size_t per_out = static_cast<std::size_t>(conv.in_ch) * conv.kernel * conv.kernel;
  for (std::size_t o = 0; o < channels; ++o) {
    if (bn.running_var[o] < 0.0f) throw DomainError("batch-norm running_var must be >= 0");
    const double scale = bn.gamma[o] / std::sqrt(static_cast<double>(bn.running_var[o]) +
                                                 bn.epsilon);
    for (std::size_t i = 0; i < per_out; ++i) {
      float& wv = folded.weights[o * per_out + i];
      wv = static_cast<float>(wv * scale);
    }
    folded.bias[o] =
        static_cast<float>((static_cast<double>(conv.bias[o]) - bn.running_mean[o]) * scale +
                           bn.beta[o]);
  }
  return folded;
}

float softplus(float v) noexcept {
  if (v > 20.0f) return v;
  if (v < -20.0f) return std::exp(v);
  return std::log1p(std::exp(v));
}

float mish(float v) noexcept { return v * std::tanh(softplus(v)); }

float sigmoid(float v) noexcept {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

float activate(float v, const Activation& act) noexcept {
  switch (act.kind) {
    case ActivationKind::linear:
      return v;
    case ActivationKind::leaky_relu:
      return v >= 0.0f ? v : act.slope * v;
    case ActivationKind::mish:
      return mish(v);
    case ActivationKind::sigmoid:
      return sigmoid(v);
  }
  return v;
}

void activate_inplace(Tensor& x, const Activation& act) {
  if (act.kind == ActivationKind::linear) return;
  for (float& v : x.data()) v = activate(v, act);
}

Tensor activate(const Tensor& x, const Activation& act) {
  Tensor out = x;
  activate_inplace(out, act);
  return out;
}

Tensor maxpool(const Tensor& x, int kernel, int stride, int padding) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw DimensionError("kernel", "max-pool kernel must be odd and positive, got " +
                                       std::to_string(kernel));
  }
  return maxpool_window(x, kernel, stride, padding);
}

Tensor maxpool_window(const Tensor& x, int kernel, int stride, int padding) {
  if (kernel < 1) throw DimensionError("kernel", "max-pool kernel must be positive");
  const int out_h = conv_output_extent(x.h(), kernel, stride, padding, "h");
  const int out_w = conv_output_extent(x.w(), kernel, stride, padding, "w");
  Tensor out(Shape{x.n(), x.c(), out_h, out_w});
  const auto planes = static_cast<std::size_t>(x.n()) * x.c();
  parallel_for(planes, [&](std::size_t idx) {
    const int b = static_cast<int>(idx) / x.c();
    const int ch = static_cast<int>(idx) % x.c();
    const auto src = x.plane(b, ch);
    auto dst = out.plane(b, ch);
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = std::max(0, oy * stride - padding);
      const int y1 = std::min(x.h(), oy * stride - padding + kernel);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = std::max(0, ox * stride - padding);
        const int x1 = std::min(x.w(), ox * stride - padding + kernel);
        float best = -std::numeric_limits<float>::infinity();
        for (int y = y0; y < y1; ++y) {
          for (int xx = x0; xx < x1; ++xx) {
            best = std::max(best, src[static_cast<std::size_t>(y) * x.w() + xx]);
          }
        }
        dst[static_cast<std::size_t>(oy) * out_w + ox] = best;
      }
    }
  });
  return out;
}

Tensor resize_bilinear(const Tensor& x, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw DimensionError("w", "resize target must be at least 1x1");
  Tensor out(Shape{x.n(), x.c(), new_h, new_w});
  const double sx = static_cast<double>(x.w()) / new_w;
  const double sy = static_cast<double>(x.h()) / new_h;
  for (int n = 0; n < x.n(); ++n) {
    for (int ch = 0; ch < x.c(); ++ch) {
      const auto src = x.plane(n, ch);
      auto dst = out.plane(n, ch);
      auto px = [&](int yy, int xx) {
        return static_cast<double>(src[static_cast<std::size_t>(yy) * x.w() + xx]);
      };
      for (int y = 0; y < new_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, x.h() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, x.h() - 1);
        const double wy = fy - y0;
        for (int xo = 0; xo < new_w; ++xo) {
          const double fx = std::clamp((xo + 0.5) * sx - 0.5, 0.0, x.w() - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, x.w() - 1);
          const double wx = fx - x0;
          const double v = (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) +
                           wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
          dst[static_cast<std::size_t>(y) * new_w + xo] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
  Tensor out(Shape{x.n(), x.c(), x.h() * 2, x.w() * 2});
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < x.c(); ++ch) {
      const auto src = x.plane(b, ch);
      auto dst = out.plane(b, ch);
      const int ow = x.w() * 2;
      for (int y = 0; y < x.h(); ++y) {
        float* row0 = dst.data() + static_cast<std::size_t>(2 * y) * ow;
        for (int xx = 0; xx < x.w(); ++xx) {
          const float v = src[static_cast<std::size_t>(y) * x.w() + xx];
          row0[2 * xx] = v;
          row0[2 * xx + 1] = v;
        }
        std::copy_n(row0, ow, row0 + ow);
      }
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> xs) {
  if (xs.empty()) throw DimensionError("c", "concat needs at least one input");
  const Shape& first = xs.front()->shape();
  int channels = 0;
  for (const Tensor* t : xs) {
    const Shape& s = t->shape();
    if (s.n != first.n) throw DimensionError("n", "concat inputs disagree on batch extent");
    if (s.h != first.h) throw DimensionError("h", "concat inputs disagree on height");
    if (s.w != first.w) throw DimensionError("w", "concat inputs disagree on width");
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  for (int b = 0; b < first.n; ++b) {
    int offset = 0;
    for (const Tensor* t : xs) {
      for (int ch = 0; ch < t->c(); ++ch) {
        const auto src = t->plane(b, ch);
        std::copy(src.begin(), src.end(), out.plane(b, offset + ch).begin());
      }
      offset += t->c();
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(xs.size());
  for (const Tensor& t : xs) ptrs.push_back(&t);
  return concat_channels(std::span<const Tensor* const>(ptrs));
}

Tensor concat_channels(std::initializer_list<const Tensor*> xs) {
  return concat_channels(std::span<const Tensor* const>(xs.begin(), xs.size()));
}

Tensor slice_channels(const Tensor& x, int first, int count) {
  if (first < 0 || count < 1 || first + count > x.c()) {
    throw DimensionError("c", "channel slice out of range");
  }
  Tensor out(Shape{x.n(), count, x.h(), x.w()});
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < count; ++ch) {
      const auto src = x.plane(b, first + ch);
      std::copy(src.begin(), src.end(), out.plane(b, ch).begin());
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("shape", to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor out = a;
  auto dst = out.data();
  const auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

}  // namespace yolo4
