#include "cbmt/layers.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace cbmt {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Conv2d::Conv2d(int in_c_, int out_c_, int k_, int stride_, bool bias)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(k_ / 2), has_bias(bias) {
  w.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.f);
  dw.assign(w.size(), 0.f);
  if (has_bias) {
    b.assign(out_c, 0.f);
    db.assign(out_c, 0.f);
  }
}

void Conv2d::init_he(Rng& rng) {
  const double std = std::sqrt(2.0 / (in_c * k * k));
  for (float& v : w) v = static_cast<float>(rng.normal() * std);
  for (float& v : b) v = 0.f;
}

void Conv2d::zero_grad() {
  std::fill(dw.begin(), dw.end(), 0.f);
  std::fill(db.begin(), db.end(), 0.f);
}

namespace {

// col is (in_c*k*k) x (oh*ow), row-major.
void im2col(const Tensor& x, int n, int k, int stride, int pad, int oh, int ow, float* col) {
  const int kk = k * k;
  for (int ci = 0; ci < x.c; ++ci) {
    const float* src = x.plane(n, ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<size_t>(ci) * kk + ky * k + kx) *
                               (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.h) {
            std::fill(dst, dst + ow, 0.f);
            dst += ow;
            continue;
          }
          const float* row = src + static_cast<size_t>(iy) * x.w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            *dst++ = (ix >= 0 && ix < x.w) ? row[ix] : 0.f;
          }
        }
      }
  }
}

void col2im(const float* col, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* dst) {
  const int kk = k * k;
  for (int ci = 0; ci < c; ++ci) {
    float* out = dst + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<size_t>(ci) * kk + ky * k + kx) *
                                     (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            src += ow;
            continue;
          }
          float* row = out + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) row[ix] += src[ox];
            ++src;
          }
        }
      }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.c != in_c)
    throw std::invalid_argument("Conv2d: expected " + std::to_string(in_c) + " channels, got " +
                                x.shape_str());
  const int oh = out_h(x.h), ow = out_w(x.w);
  Tensor y(x.n, out_c, oh, ow);
  const int kdim = in_c * k * k;
  const size_t osz = static_cast<size_t>(oh) * ow;
  std::vector<float> col(static_cast<size_t>(kdim) * osz);
  ConstMapMat wmat(w.data(), out_c, kdim);
  for (int n = 0; n < x.n; ++n) {
    im2col(x, n, k, stride, pad, oh, ow, col.data());
    ConstMapMat cmat(col.data(), kdim, static_cast<Eigen::Index>(osz));
    MapMat ymat(y.plane(n, 0), out_c, static_cast<Eigen::Index>(osz));
    ymat.noalias() = wmat * cmat;
    if (has_bias)
      for (int oc = 0; oc < out_c; ++oc) ymat.row(oc).array() += b[oc];
  }
  if (train) x_cache_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = x_cache_;
  if (x.numel() == 0) throw std::logic_error("Conv2d::backward without train-mode forward");
  const int oh = dy.h, ow = dy.w;
  const int kdim = in_c * k * k;
  const size_t osz = static_cast<size_t>(oh) * ow;

  Tensor dx = Tensor::zeros_like(x);
  std::vector<float> col(static_cast<size_t>(kdim) * osz);
  std::vector<float> dcol(static_cast<size_t>(kdim) * osz);
  ConstMapMat wmat(w.data(), out_c, kdim);
  MapMat dwmat(dw.data(), out_c, kdim);

  for (int n = 0; n < x.n; ++n) {
    im2col(x, n, k, stride, pad, oh, ow, col.data());
    ConstMapMat cmat(col.data(), kdim, static_cast<Eigen::Index>(osz));
    ConstMapMat dymat(dy.plane(n, 0), out_c, static_cast<Eigen::Index>(osz));
    dwmat.noalias() += dymat * cmat.transpose();
    if (has_bias)
      for (int oc = 0; oc < out_c; ++oc) db[oc] += dymat.row(oc).sum();
    MapMat dcmat(dcol.data(), kdim, static_cast<Eigen::Index>(osz));
    dcmat.noalias() = wmat.transpose() * dymat;
    col2im(dcol.data(), in_c, x.h, x.w, k, stride, pad, oh, ow, dx.plane(n, 0));
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(int channels) : c(channels) {
  gamma.assign(c, 1.f);
  beta.assign(c, 0.f);
  dgamma.assign(c, 0.f);
  dbeta.assign(c, 0.f);
  running_mean.assign(c, 0.f);
  running_var.assign(c, 1.f);
}

void BatchNorm2d::zero_grad() {
  std::fill(dgamma.begin(), dgamma.end(), 0.f);
  std::fill(dbeta.begin(), dbeta.end(), 0.f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  if (x.c != c) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor y = Tensor::zeros_like(x);
  const int plane = x.h * x.w;
  const int m = x.n * plane;

  if (train) {
    xhat_cache_ = Tensor::zeros_like(x);
    invstd_cache_.assign(c, 0.f);
    for (int ci = 0; ci < c; ++ci) {
      double sum = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const float* p = x.plane(n, ci);
        for (int i = 0; i < plane; ++i) sum += p[i];
      }
      const double mean = sum / m;
      double var = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const float* p = x.plane(n, ci);
        for (int i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= m;  // biased, used for normalization
      const double invstd = 1.0 / std::sqrt(var + eps);
      invstd_cache_[ci] = static_cast<float>(invstd);

      const double unbiased = m > 1 ? var * m / (m - 1.0) : var;
      running_mean[ci] = static_cast<float>((1.0 - momentum) * running_mean[ci] + momentum * mean);
      running_var[ci] = static_cast<float>((1.0 - momentum) * running_var[ci] + momentum * unbiased);

      for (int n = 0; n < x.n; ++n) {
        const float* p = x.plane(n, ci);
        float* xh = xhat_cache_.plane(n, ci);
        float* q = y.plane(n, ci);
        const float g = gamma[ci], bt = beta[ci];
        for (int i = 0; i < plane; ++i) {
          const float xhat = static_cast<float>((p[i] - mean) * invstd);
          xh[i] = xhat;
          q[i] = g * xhat + bt;
        }
      }
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      const float mean = running_mean[ci];
      const float invstd = 1.f / std::sqrt(running_var[ci] + eps);
      const float g = gamma[ci], bt = beta[ci];
      for (int n = 0; n < x.n; ++n) {
        const float* p = x.plane(n, ci);
        float* q = y.plane(n, ci);
        for (int i = 0; i < plane; ++i) q[i] = g * (p[i] - mean) * invstd + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (xhat_cache_.numel() == 0)
    throw std::logic_error("BatchNorm2d::backward without train-mode forward");
  const Tensor& xhat = xhat_cache_;
  Tensor dx = Tensor::zeros_like(dy);
  const int plane = dy.h * dy.w;
  const double m = static_cast<double>(dy.n) * plane;

  for (int ci = 0; ci < c; ++ci) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n; ++n) {
      const float* d = dy.plane(n, ci);
      const float* xh = xhat.plane(n, ci);
      for (int i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xhat += static_cast<double>(d[i]) * xh[i];
      }
    }
    dbeta[ci] += static_cast<float>(sum_dy);
    dgamma[ci] += static_cast<float>(sum_dy_xhat);

    const double g = gamma[ci];
    const double invstd = invstd_cache_[ci];
    const double k1 = sum_dy / m;
    const double k2 = sum_dy_xhat / m;
    for (int n = 0; n < dy.n; ++n) {
      const float* d = dy.plane(n, ci);
      const float* xh = xhat.plane(n, ci);
      float* out = dx.plane(n, ci);
      for (int i = 0; i < plane; ++i)
        out[i] = static_cast<float>(g * invstd * (d[i] - k1 - xh[i] * k2));
    }
  }
  return dx;
}

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.f ? v : 0.f;
  if (train) y_cache_ = y;
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  if (y_cache_.numel() == 0) throw std::logic_error("ReLU::backward without train-mode forward");
  Tensor dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i)
    if (y_cache_.data[i] <= 0.f) dx.data[i] = 0.f;
  return dx;
}

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = y.plane(n, c);
      for (int iy = 0; iy < x.h; ++iy) {
        float* r0 = dst + static_cast<size_t>(2 * iy) * y.w;
        float* r1 = r0 + y.w;
        for (int ix = 0; ix < x.w; ++ix) {
          const float v = src[static_cast<size_t>(iy) * x.w + ix];
          r0[2 * ix] = v;
          r0[2 * ix + 1] = v;
          r1[2 * ix] = v;
          r1[2 * ix + 1] = v;
        }
      }
    }
  return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
  if (dy.h % 2 || dy.w % 2)
    throw std::invalid_argument("upsample2x_backward: odd input size");
  Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int n = 0; n < dy.n; ++n)
    for (int c = 0; c < dy.c; ++c) {
      const float* src = dy.plane(n, c);
      float* dst = dx.plane(n, c);
      for (int iy = 0; iy < dx.h; ++iy) {
        const float* r0 = src + static_cast<size_t>(2 * iy) * dy.w;
        const float* r1 = r0 + dy.w;
        for (int ix = 0; ix < dx.w; ++ix)
          dst[static_cast<size_t>(iy) * dx.w + ix] =
              r0[2 * ix] + r0[2 * ix + 1] + r1[2 * ix] + r1[2 * ix + 1];
      }
    }
  return dx;
}

}  // namespace cbmt
