#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbmt {

// Dense float tensor in NCHW layout. The single numeric container used for
// images, masks, probability maps, activations and gradients.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.f)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

  size_t numel() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + "]";
  }

  size_t idx(int in, int ic, int iy, int ix) const {
    return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  float& at(int in, int ic, int iy, int ix) { return data[idx(in, ic, iy, ix)]; }
  float at(int in, int ic, int iy, int ix) const { return data[idx(in, ic, iy, ix)]; }

  float* plane(int in, int ic) { return data.data() + idx(in, ic, 0, 0); }
  const float* plane(int in, int ic) const { return data.data() + idx(in, ic, 0, 0); }

  bool operator==(const Tensor& o) const = default;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

// Elementwise sigmoid.
Tensor sigmoid(const Tensor& logits);

// True iff every element is finite.
bool all_finite(const Tensor& t);

// Stacks single-image tensors (n==1, identical CxHxW) into one batch.
Tensor stack(const std::vector<const Tensor*>& items);

// Slice one image out of a batch (result has n == 1).
Tensor slice_image(const Tensor& batch, int index);

}  // namespace cbmt
