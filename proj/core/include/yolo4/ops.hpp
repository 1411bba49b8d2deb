#pragma once

#include <span>
#include <vector>

#include "yolo4/tensor.hpp"

namespace yolo4 {

/// Convolution weights laid out (out_ch, in_ch, kh, kw), row-major.
struct ConvParams {
  int out_ch = 0;
  int in_ch = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  std::vector<float> weights;
  std::vector<float> bias;  // one per output channel

  static ConvParams zeros(int out_ch, int in_ch, int kernel, int stride, int padding);
};

/// Inference-time batch normalization, one entry per channel.
struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;

  static BatchNormParams identity(int channels, float epsilon = 1e-5f);
  int channels() const noexcept { return static_cast<int>(gamma.size()); }
};

enum class ActivationKind { linear, leaky_relu, mish, sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::linear;
  float slope = 0.1f;  // leaky_relu only

  friend bool operator==(const Activation&, const Activation&) = default;
};

/// Row-major single-precision GEMM: C[m x n] = A[m x k] * B[k x n] (+ C when
/// accumulate). The reduction over k for each output element always runs in
/// ascending order, so results do not depend on the thread count.
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate = false);

/// Output extent along one spatial axis; throws DimensionError on a
/// non-positive result.
int conv_output_extent(int in, int kernel, int stride, int padding, const char* axis);

/// Cross-correlation plus bias.
Tensor conv2d(const Tensor& x, const ConvParams& p);

/// Normalizes each channel with running statistics, in place.
void batchnorm_inplace(Tensor& x, const BatchNormParams& bn);

/// Absorbs bn into the convolution: conv2d(x, fold) == bn(conv2d(x, conv)).
ConvParams fold_batchnorm(const ConvParams& conv, const BatchNormParams& bn);

float mish(float v) noexcept;
float softplus(float v) noexcept;
float sigmoid(float v) noexcept;
float activate(float v, const Activation& act) noexcept;
void activate_inplace(Tensor& x, const Activation& act);
Tensor activate(const Tensor& x, const Activation& act);

/// Max pooling with -inf padding. Odd kernels only; see maxpool_window.
Tensor maxpool(const Tensor& x, int kernel, int stride, int padding);

/// Window-max primitive without the odd-kernel check.
Tensor maxpool_window(const Tensor& x, int kernel, int stride, int padding);

Tensor upsample_nearest2x(const Tensor& x);

/// Bilinear resize of every (n, c) plane to new_h x new_w, sampling at pixel
/// centers with edge clamping.
Tensor resize_bilinear(const Tensor& x, int new_w, int new_h);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor concat_channels(std::span<const Tensor* const> xs);
Tensor concat_channels(std::initializer_list<const Tensor*> xs);

/// Channels [first, first + count) of x.
Tensor slice_channels(const Tensor& x, int first, int count);

/// Elementwise a + b.
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace yolo4
