#pragma once

#include <vector>

#include "cbmt/rng.hpp"
#include "cbmt/tensor.hpp"

namespace cbmt {

// Minimal trainable layers, single-threaded and deterministic. Convolutions
// run as im2col + GEMM. Backward accumulates parameter gradients until
// zero_grad(); activations needed by backward are cached by train-mode
// forward only.

struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  bool has_bias = false;
  std::vector<float> w;  // [out_c][in_c*k*k]
  std::vector<float> b;
  std::vector<float> dw, db;

  Conv2d() = default;
  Conv2d(int in_c_, int out_c_, int k_, int stride_, bool bias);

  void init_he(Rng& rng);
  void zero_grad();
  int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - k) / stride + 1; }

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);  // uses cached input

 private:
  Tensor x_cache_;
};

struct BatchNorm2d {
  int c = 0;
  float momentum = 0.1f;
  float eps = 1e-5f;
  std::vector<float> gamma, beta, dgamma, dbeta;
  std::vector<float> running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  void zero_grad();
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Tensor xhat_cache_;
  std::vector<float> invstd_cache_;
};

struct ReLU {
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Tensor y_cache_;
};

// Nearest-neighbor 2x upsample; backward sums each 2x2 block.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

}  // namespace cbmt
