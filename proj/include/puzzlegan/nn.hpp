#pragma once

#include <memory>
#include <string>
#include <vector>

#include "puzzlegan/kernels.hpp"
#include "puzzlegan/rng.hpp"
#include "puzzlegan/tensor.hpp"

namespace puzzlegan::nn {

// Activations a backward pass needs are stored in an explicit per-call context
// rather than inside the layer, so several forward passes through the same
// network (real batch, fake batch, shuffled batch) can coexist before their
// backward passes run.
struct LayerCtx {
  std::vector<Tensor> saved;
  std::vector<int64_t> in_shape;
};

using Tape = std::vector<LayerCtx>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, LayerCtx& ctx, bool training) = 0;
  // Returns grad w.r.t. the input; accumulates into parameter grads when
  // param_grads is set (the "frozen network" path leaves them untouched).
  virtual Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool param_grads) = 0;

  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual std::vector<Tensor*> buffers() { return {}; }  // non-trainable state
  virtual void init(Rng&) {}
  virtual std::string name() const = 0;
};

class Linear final : public Layer {
 public:
  Linear(int64_t in, int64_t out)
      : w_({out, in}), b_({out}), gw_({out, in}), gb_({out}) {}

  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    ctx.saved = {x};
    return kernels::linear_forward(x, w_, b_);
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool param_grads) override {
    if (param_grads) kernels::linear_backward_params(gy, ctx.saved[0], gw_, gb_);
    return kernels::linear_backward_input(gy, w_);
  }
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  void init(Rng& rng) override {
    for (int64_t i = 0; i < w_.numel(); ++i) w_[i] = float(rng.normal() * 0.02);
    b_.fill(0.0f);
  }
  std::string name() const override { return "linear"; }

 private:
  Tensor w_, b_, gw_, gb_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int64_t ci, int64_t co, int k, int stride, int pad)
      : stride_(stride), pad_(pad), w_({co, ci, k, k}), b_({co}),
        gw_({co, ci, k, k}), gb_({co}) {}

  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    ctx.saved = {x};
    return kernels::conv2d_forward(x, w_, b_, stride_, pad_);
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool param_grads) override {
    const Tensor& x = ctx.saved[0];
    if (param_grads) kernels::conv2d_backward_params(gy, x, gw_, gb_, stride_, pad_);
    return kernels::conv2d_backward_input(gy, w_, x.size(2), x.size(3), stride_, pad_);
  }
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  void init(Rng& rng) override {
    for (int64_t i = 0; i < w_.numel(); ++i) w_[i] = float(rng.normal() * 0.02);
    b_.fill(0.0f);
  }
  std::string name() const override { return "conv2d"; }

 private:
  int stride_, pad_;
  Tensor w_, b_, gw_, gb_;
};

class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int64_t ci, int64_t co, int k, int stride, int pad)
      : stride_(stride), pad_(pad), w_({ci, co, k, k}), b_({co}),
        gw_({ci, co, k, k}), gb_({co}) {}

  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    ctx.saved = {x};
    return kernels::convt2d_forward(x, w_, b_, stride_, pad_);
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool param_grads) override {
    const Tensor& x = ctx.saved[0];
    if (param_grads) kernels::convt2d_backward_params(gy, x, gw_, gb_, stride_, pad_);
    return kernels::convt2d_backward_input(gy, w_, x.size(2), x.size(3), stride_, pad_);
  }
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  void init(Rng& rng) override {
    for (int64_t i = 0; i < w_.numel(); ++i) w_[i] = float(rng.normal() * 0.02);
    b_.fill(0.0f);
  }
  std::string name() const override { return "convt2d"; }

 private:
  int stride_, pad_;
  Tensor w_, b_, gw_, gb_;
};

// Train mode normalizes with batch statistics and refreshes running stats;
// eval mode uses the running stats. Backward requires a train-mode context.
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int64_t c, double eps = 1e-5, double momentum = 0.1)
      : eps_(eps), momentum_(momentum), gamma_({c}), beta_({c}),
        dgamma_({c}), dbeta_({c}), running_mean_({c}), running_var_({c}) {
    gamma_.fill(1.0f);
    running_var_.fill(1.0f);
  }

  Tensor forward(const Tensor& x, LayerCtx& ctx, bool training) override {
    const int64_t c = gamma_.numel();
    if (x.size(1) != c) throw std::invalid_argument("batchnorm2d: channel mismatch");
    Tensor mean({c}), invstd({c});
    if (training) {
      kernels::batchnorm2d_stats(x, mean, invstd, eps_);
      const double m = double(x.size(0) * x.size(2) * x.size(3));
      const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
      for (int64_t i = 0; i < c; ++i) {
        const double var = 1.0 / (double(invstd[i]) * double(invstd[i])) - eps_;
        running_mean_[i] = float((1.0 - momentum_) * running_mean_[i] + momentum_ * mean[i]);
        running_var_[i] = float((1.0 - momentum_) * running_var_[i] + momentum_ * var * unbias);
      }
      ctx.saved = {x, mean, invstd};
    } else {
      for (int64_t i = 0; i < c; ++i) {
        mean[i] = running_mean_[i];
        invstd[i] = float(1.0 / std::sqrt(double(running_var_[i]) + eps_));
      }
      ctx.saved.clear();
    }
    return kernels::batchnorm2d_forward(x, gamma_, beta_, mean, invstd);
  }

  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool param_grads) override {
    if (ctx.saved.size() != 3)
      throw std::logic_error("batchnorm2d: backward needs a train-mode context");
    Tensor dg({gamma_.numel()}), db({gamma_.numel()});
    Tensor gx = kernels::batchnorm2d_backward(gy, ctx.saved[0], gamma_, ctx.saved[1],
                                              ctx.saved[2], dg, db);
    if (param_grads) {
      kernels::axpy(dgamma_, dg, 1.0f);
      kernels::axpy(dbeta_, db, 1.0f);
    }
    return gx;
  }

  std::vector<Tensor*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> grads() override { return {&dgamma_, &dbeta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
  void init(Rng& rng) override {
    for (int64_t i = 0; i < gamma_.numel(); ++i) gamma_[i] = float(1.0 + rng.normal() * 0.02);
    beta_.fill(0.0f);
    running_mean_.fill(0.0f);
    running_var_.fill(1.0f);
  }
  std::string name() const override { return "batchnorm2d"; }

 private:
  double eps_, momentum_;
  Tensor gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(float slope) : slope_(slope) {}
  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    ctx.saved = {x};
    return kernels::leaky_relu_forward(x, slope_);
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool) override {
    return kernels::leaky_relu_backward(gy, ctx.saved[0], slope_);
  }
  std::string name() const override { return "leaky_relu"; }

 private:
  float slope_;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    Tensor y = kernels::tanh_forward(x);
    ctx.saved = {y};
    return y;
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool) override {
    return kernels::tanh_backward(gy, ctx.saved[0]);
  }
  std::string name() const override { return "tanh"; }
};

// Reshapes everything after the batch dim.
class Reshape final : public Layer {
 public:
  explicit Reshape(std::vector<int64_t> tail) : tail_(std::move(tail)) {}
  Tensor forward(const Tensor& x, LayerCtx& ctx, bool) override {
    ctx.in_shape = x.shape();
    std::vector<int64_t> s{x.size(0)};
    s.insert(s.end(), tail_.begin(), tail_.end());
    return x.reshaped(std::move(s));
  }
  Tensor backward(const Tensor& gy, const LayerCtx& ctx, bool) override {
    return gy.reshaped(ctx.in_shape);
  }
  std::string name() const override { return "reshape"; }

 private:
  std::vector<int64_t> tail_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto l = std::make_unique<L>(std::forward<Args>(args)...);
    L& r = *l;
    layers_.push_back(std::move(l));
    return r;
  }

  size_t size() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }

  Tensor forward(const Tensor& x, Tape& tape, bool training) const {
    tape.assign(layers_.size(), LayerCtx{});
    Tensor h = x;
    for (size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, tape[i], training);
    return h;
  }

  Tensor backward(const Tensor& gy, const Tape& tape, bool param_grads) const {
    Tensor g = gy;
    for (size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, tape[i], param_grads);
    return g;
  }

  std::vector<Tensor*> params() const { return collect(&Layer::params); }
  std::vector<Tensor*> grads() const { return collect(&Layer::grads); }
  std::vector<Tensor*> buffers() const { return collect(&Layer::buffers); }

  void zero_grads() const {
    for (Tensor* g : grads()) g->fill(0.0f);
  }

  void init(Rng& rng) const {
    for (auto& l : layers_) l->init(rng);
  }

 private:
  std::vector<Tensor*> collect(std::vector<Tensor*> (Layer::*fn)()) const {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      auto v = ((*l).*fn)();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  std::vector<std::unique_ptr<Layer>> layers_;
};

int64_t count_parameters(const Sequential& net);

// Flat parameter/buffer views, used by checkpoints and the best-generator
// snapshot. Order is the network's layer order; round-trips exactly.
std::vector<float> flatten(const std::vector<Tensor*>& ts);
void unflatten(const std::vector<float>& flat, const std::vector<Tensor*>& ts);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor*> params, std::vector<Tensor*> grads,
       double lr, double beta1, double beta2, double eps);

  void step();

  int64_t t() const { return t_; }
  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }
  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& v() const { return v_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  std::vector<Tensor*> params_, grads_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
  double lr_ = 2e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
};

}  // namespace puzzlegan::nn
