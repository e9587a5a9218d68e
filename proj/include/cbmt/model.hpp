#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cbmt/config.hpp"
#include "cbmt/snapshot.hpp"
#include "cbmt/tensor.hpp"

namespace cbmt {

enum class RunMode { train, eval };

// Named view over one trainable parameter array and its gradient.
struct ParamRef {
  std::string name;
  std::vector<float>* values;
  std::vector<float>* grads;
};

// Pluggable segmentation model. forward maps an Nx3xHxW batch to NxCxHxW
// pre-sigmoid logits. In train mode forward caches activations so backward
// can accumulate parameter gradients; eval-mode forward is deterministic for
// fixed parameters and input. read_params/write_params round-trip exactly
// and include normalization buffers.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual Tensor forward(const Tensor& batch) = 0;
  virtual void backward(const Tensor& dlogits) = 0;
  virtual void zero_grad() = 0;
  virtual std::vector<ParamRef> trainable_params() = 0;

  virtual ParamSnapshot read_params() const = 0;
  virtual void write_params(const ParamSnapshot& snap) = 0;

  virtual void set_mode(RunMode mode) = 0;
  virtual RunMode mode() const = 0;
  virtual std::string arch_id() const = 0;
};

// arch "tiny_unet": encoder-decoder with additive skips, batch norm, ~100k
// parameters, input sides divisible by 16. arch "pixel_affine": per-pixel
// affine map on RGB, the trivial adapter used by fast tests.
std::unique_ptr<ModelAdapter> build_model(const ModelConfig& cfg, uint64_t init_seed);

// Adam with the configured momenta; keeps per-parameter moment state keyed
// by parameter name.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double eps = 1e-8);
  void step(const std::vector<ParamRef>& params, double lr);
  int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  struct Moments {
    std::vector<float> m, v;
  };
  std::vector<std::pair<std::string, Moments>> state_;
  Moments& moments_for(const ParamRef& p);
};

}  // namespace cbmt
