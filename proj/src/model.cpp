#include "cbmt/model.hpp"

#include <cmath>
#include <stdexcept>

#include "cbmt/layers.hpp"
#include "cbmt/rng.hpp"

namespace cbmt {

namespace {

// Conv + BN + ReLU.
struct ConvBlock {
  Conv2d conv;
  BatchNorm2d bn;
  ReLU relu;

  ConvBlock() = default;
  ConvBlock(int in_c, int out_c, int k, int stride)
      : conv(in_c, out_c, k, stride, /*bias=*/false), bn(out_c) {}

  Tensor forward(const Tensor& x, bool train) {
    return relu.forward(bn.forward(conv.forward(x, train), train), train);
  }
  Tensor backward(const Tensor& dy) { return conv.backward(bn.backward(relu.backward(dy))); }
  void zero_grad() {
    conv.zero_grad();
    bn.zero_grad();
  }
};

void append_conv_params(std::vector<ParamRef>& out, const std::string& prefix, Conv2d& c) {
  out.push_back({prefix + ".weight", &c.w, &c.dw});
  if (c.has_bias) out.push_back({prefix + ".bias", &c.b, &c.db});
}

void append_block_params(std::vector<ParamRef>& out, const std::string& prefix, ConvBlock& b) {
  append_conv_params(out, prefix + ".conv", b.conv);
  out.push_back({prefix + ".bn.gamma", &b.bn.gamma, &b.bn.dgamma});
  out.push_back({prefix + ".bn.beta", &b.bn.beta, &b.bn.dbeta});
}

void snapshot_entry(ParamSnapshot& s, const std::string& name, const std::vector<float>& v,
                    std::vector<int> shape, bool buffer = false) {
  s.entries.push_back({name, std::move(shape), v, buffer});
}

void load_entry(const ParamSnapshot& s, const std::string& name, std::vector<float>& dst) {
  const ParamEntry* e = s.find(name);
  if (!e) throw std::invalid_argument("write_params: missing key '" + name + "'");
  if (e->values.size() != dst.size())
    throw std::invalid_argument("write_params: size mismatch for key '" + name + "'");
  dst = e->values;
}

class TinyUnet final : public ModelAdapter {
 public:
  TinyUnet(const ModelConfig& cfg, uint64_t init_seed)
      : num_classes_(cfg.num_classes),
        stem_(3, 8, 3, 1),
        d1_(8, 16, 3, 2),
        d2_(16, 24, 3, 2),
        c2_(24, 24, 3, 1),
        d3_(24, 48, 3, 2),
        c3_(48, 48, 3, 1),
        d4_(48, 96, 3, 2),
        p4_(96, 48, 1, 1),
        c5_(48, 24, 3, 1),
        c6_(24, 16, 3, 1),
        c7_(16, 8, 3, 1),
        head_(8, cfg.num_classes, 1, 1, /*bias=*/true) {
    for (auto* b : blocks()) b->bn.momentum = static_cast<float>(cfg.bn_momentum);
    Rng rng(init_seed);
    for (auto* b : blocks()) b->conv.init_he(rng);
    head_.init_he(rng);
  }

  Tensor forward(const Tensor& x) override {
    if (x.c != 3) throw std::invalid_argument("tiny_unet: expected 3 input channels");
    if (x.h % 16 || x.w % 16)
      throw std::invalid_argument("tiny_unet: input sides must be divisible by 16, got " +
                                  x.shape_str());
    const bool train = mode_ == RunMode::train;
    a0_ = stem_.forward(x, train);
    a1_ = d1_.forward(a0_, train);
    Tensor a2 = d2_.forward(a1_, train);
    a3_ = c2_.forward(a2, train);
    Tensor a4 = d3_.forward(a3_, train);
    a5_ = c3_.forward(a4, train);
    Tensor a6 = d4_.forward(a5_, train);
    Tensor a7 = p4_.forward(a6, train);

    Tensor u1 = upsample2x(a7);
    add_inplace(u1, a5_);
    Tensor a8 = c5_.forward(u1, train);
    Tensor u2 = upsample2x(a8);
    add_inplace(u2, a3_);
    Tensor a9 = c6_.forward(u2, train);
    Tensor u3 = upsample2x(a9);
    add_inplace(u3, a1_);
    Tensor a10 = c7_.forward(u3, train);
    Tensor u4 = upsample2x(a10);
    add_inplace(u4, a0_);
    return head_.forward(u4, train);
  }

  void backward(const Tensor& dlogits) override {
    Tensor du4 = head_.backward(dlogits);
    Tensor da10 = upsample2x_backward(du4);  // du4 also feeds skip a0
    Tensor du3 = c7_.backward(da10);
    Tensor da9 = upsample2x_backward(du3);  // du3 also feeds skip a1
    Tensor du2 = c6_.backward(da9);
    Tensor da8 = upsample2x_backward(du2);  // du2 also feeds skip a3
    Tensor du1 = c5_.backward(da8);
    Tensor da7 = upsample2x_backward(du1);  // du1 also feeds skip a5
    Tensor da6 = p4_.backward(da7);
    Tensor da5 = d4_.backward(da6);
    add_inplace(da5, du1);
    Tensor da4 = c3_.backward(da5);
    Tensor da3 = d3_.backward(da4);
    add_inplace(da3, du2);
    Tensor da2 = c2_.backward(da3);
    Tensor da1 = d2_.backward(da2);
    add_inplace(da1, du3);
    Tensor da0 = d1_.backward(da1);
    add_inplace(da0, du4);
    stem_.backward(da0);
  }

  void zero_grad() override {
    for (auto* b : blocks()) b->zero_grad();
    head_.zero_grad();
  }

  std::vector<ParamRef> trainable_params() override {
    std::vector<ParamRef> out;
    auto names = block_names();
    auto bs = blocks();
    for (size_t i = 0; i < bs.size(); ++i) append_block_params(out, names[i], *bs[i]);
    append_conv_params(out, "head", head_);
    return out;
  }

  ParamSnapshot read_params() const override {
    ParamSnapshot s;
    auto names = block_names();
    auto bs = const_cast<TinyUnet*>(this)->blocks();
    for (size_t i = 0; i < bs.size(); ++i) {
      const ConvBlock& b = *bs[i];
      snapshot_entry(s, names[i] + ".conv.weight", b.conv.w,
                     {b.conv.out_c, b.conv.in_c, b.conv.k, b.conv.k});
      snapshot_entry(s, names[i] + ".bn.gamma", b.bn.gamma, {b.bn.c});
      snapshot_entry(s, names[i] + ".bn.beta", b.bn.beta, {b.bn.c});
      snapshot_entry(s, names[i] + ".bn.running_mean", b.bn.running_mean, {b.bn.c}, true);
      snapshot_entry(s, names[i] + ".bn.running_var", b.bn.running_var, {b.bn.c}, true);
    }
    snapshot_entry(s, "head.weight", head_.w,
                   {head_.out_c, head_.in_c, head_.k, head_.k});
    snapshot_entry(s, "head.bias", head_.b, {head_.out_c});
    return s;
  }

  void write_params(const ParamSnapshot& snap) override {
    require_compatible(read_params(), snap);
    auto names = block_names();
    auto bs = blocks();
    for (size_t i = 0; i < bs.size(); ++i) {
      ConvBlock& b = *bs[i];
      load_entry(snap, names[i] + ".conv.weight", b.conv.w);
      load_entry(snap, names[i] + ".bn.gamma", b.bn.gamma);
      load_entry(snap, names[i] + ".bn.beta", b.bn.beta);
      load_entry(snap, names[i] + ".bn.running_mean", b.bn.running_mean);
      load_entry(snap, names[i] + ".bn.running_var", b.bn.running_var);
    }
    load_entry(snap, "head.weight", head_.w);
    load_entry(snap, "head.bias", head_.b);
  }

  void set_mode(RunMode m) override { mode_ = m; }
  RunMode mode() const override { return mode_; }
  std::string arch_id() const override {
    return "tiny_unet_c" + std::to_string(num_classes_);
  }

 private:
  static void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tiny_unet skip add");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
  }

  std::vector<ConvBlock*> blocks() {
    return {&stem_, &d1_, &d2_, &c2_, &d3_, &c3_, &d4_, &p4_, &c5_, &c6_, &c7_};
  }
  static std::vector<std::string> block_names() {
    return {"stem", "d1", "d2", "c2", "d3", "c3", "d4", "p4", "c5", "c6", "c7"};
  }

  int num_classes_;
  RunMode mode_ = RunMode::train;
  ConvBlock stem_, d1_, d2_, c2_, d3_, c3_, d4_, p4_, c5_, c6_, c7_;
  Conv2d head_;
  Tensor a0_, a1_, a3_, a5_;  // skip activations
};

// logits[k] = sum_ch w[k][ch] * x[ch] + b[k], per pixel.
class PixelAffine final : public ModelAdapter {
 public:
  PixelAffine(const ModelConfig& cfg, uint64_t init_seed) : num_classes_(cfg.num_classes) {
    w_.assign(static_cast<size_t>(num_classes_) * 3, 0.f);
    b_.assign(num_classes_, 0.f);
    dw_.assign(w_.size(), 0.f);
    db_.assign(b_.size(), 0.f);
    Rng rng(init_seed);
    for (float& v : w_) v = static_cast<float>(rng.normal() * 0.5);
  }

  Tensor forward(const Tensor& x) override {
    if (x.c != 3) throw std::invalid_argument("pixel_affine: expected 3 input channels");
    if (mode_ == RunMode::train) x_cache_ = x;
    Tensor y(x.n, num_classes_, x.h, x.w);
    const int plane = x.h * x.w;
    for (int n = 0; n < x.n; ++n)
      for (int k = 0; k < num_classes_; ++k) {
        float* out = y.plane(n, k);
        for (int i = 0; i < plane; ++i) out[i] = b_[k];
        for (int ch = 0; ch < 3; ++ch) {
          const float wv = w_[static_cast<size_t>(k) * 3 + ch];
          const float* p = x.plane(n, ch);
          for (int i = 0; i < plane; ++i) out[i] += wv * p[i];
        }
      }
    return y;
  }

  void backward(const Tensor& dlogits) override {
    if (x_cache_.numel() == 0)
      throw std::logic_error("pixel_affine: backward without train-mode forward");
    const int plane = x_cache_.h * x_cache_.w;
    for (int n = 0; n < dlogits.n; ++n)
      for (int k = 0; k < num_classes_; ++k) {
        const float* d = dlogits.plane(n, k);
        double dbsum = 0.0;
        for (int i = 0; i < plane; ++i) dbsum += d[i];
        db_[k] += static_cast<float>(dbsum);
        for (int ch = 0; ch < 3; ++ch) {
          const float* p = x_cache_.plane(n, ch);
          double s = 0.0;
          for (int i = 0; i < plane; ++i) s += static_cast<double>(d[i]) * p[i];
          dw_[static_cast<size_t>(k) * 3 + ch] += static_cast<float>(s);
        }
      }
  }

  void zero_grad() override {
    std::fill(dw_.begin(), dw_.end(), 0.f);
    std::fill(db_.begin(), db_.end(), 0.f);
  }

  std::vector<ParamRef> trainable_params() override {
    return {{"head.weight", &w_, &dw_}, {"head.bias", &b_, &db_}};
  }

  ParamSnapshot read_params() const override {
    ParamSnapshot s;
    snapshot_entry(s, "head.weight", w_, {num_classes_, 3});
    snapshot_entry(s, "head.bias", b_, {num_classes_});
    return s;
  }

  void write_params(const ParamSnapshot& snap) override {
    require_compatible(read_params(), snap);
    load_entry(snap, "head.weight", w_);
    load_entry(snap, "head.bias", b_);
  }

  void set_mode(RunMode m) override { mode_ = m; }
  RunMode mode() const override { return mode_; }
  std::string arch_id() const override { return "pixel_affine_c" + std::to_string(num_classes_); }

 private:
  int num_classes_;
  RunMode mode_ = RunMode::train;
  std::vector<float> w_, b_, dw_, db_;
  Tensor x_cache_;
};

}  // namespace

std::unique_ptr<ModelAdapter> build_model(const ModelConfig& cfg, uint64_t init_seed) {
  if (cfg.arch == "tiny_unet") return std::make_unique<TinyUnet>(cfg, init_seed);
  if (cfg.arch == "pixel_affine") return std::make_unique<PixelAffine>(cfg, init_seed);
  throw std::invalid_argument("unknown model arch: " + cfg.arch);
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

AdamOptimizer::Moments& AdamOptimizer::moments_for(const ParamRef& p) {
  for (auto& [name, m] : state_)
    if (name == p.name) return m;
  state_.push_back({p.name, Moments{std::vector<float>(p.values->size(), 0.f),
                                    std::vector<float>(p.values->size(), 0.f)}});
  return state_.back().second;
}

void AdamOptimizer::step(const std::vector<ParamRef>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const ParamRef& p : params) {
    Moments& mom = moments_for(p);
    if (mom.m.size() != p.values->size())
      throw std::invalid_argument("AdamOptimizer: parameter '" + p.name + "' changed size");
    for (size_t i = 0; i < p.values->size(); ++i) {
      const double g = (*p.grads)[i];
      const double m = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
      const double v = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
      mom.m[i] = static_cast<float>(m);
      mom.v[i] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      (*p.values)[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

}  // namespace cbmt
