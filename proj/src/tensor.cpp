#include "cbmt/tensor.hpp"

#include <cmath>

namespace cbmt {

Tensor sigmoid(const Tensor& logits) {
  Tensor out = logits;
  for (float& v : out.data) v = 1.f / (1.f + std::exp(-v));
  return out;
}

bool all_finite(const Tensor& t) {
  for (float v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor stack(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw std::invalid_argument("stack: empty batch");
  const Tensor& first = *items[0];
  Tensor out(static_cast<int>(items.size()), first.c, first.h, first.w);
  size_t per = first.numel();
  for (size_t i = 0; i < items.size(); ++i) {
    const Tensor& t = *items[i];
    if (t.n != 1 || t.c != first.c || t.h != first.h || t.w != first.w)
      throw std::invalid_argument("stack: incompatible item shape " + t.shape_str());
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + i * per);
  }
  return out;
}

Tensor slice_image(const Tensor& batch, int index) {
  if (index < 0 || index >= batch.n)
    throw std::invalid_argument("slice_image: index out of range");
  Tensor out(1, batch.c, batch.h, batch.w);
  size_t per = out.numel();
  std::copy(batch.data.begin() + index * per, batch.data.begin() + (index + 1) * per,
            out.data.begin());
  return out;
}

}  // namespace cbmt
