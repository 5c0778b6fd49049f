#include "puzzlegan/nn.hpp"

#include <stdexcept>

namespace puzzlegan::nn {

int64_t count_parameters(const Sequential& net) {
  int64_t n = 0;
  for (const Tensor* p : net.params()) n += p->numel();
  return n;
}

std::vector<float> flatten(const std::vector<Tensor*>& ts) {
  std::vector<float> out;
  for (const Tensor* t : ts) out.insert(out.end(), t->data(), t->data() + t->numel());
  return out;
}

void unflatten(const std::vector<float>& flat, const std::vector<Tensor*>& ts) {
  size_t off = 0;
  for (Tensor* t : ts) {
    if (off + size_t(t->numel()) > flat.size())
      throw std::invalid_argument("unflatten: size mismatch");
    std::copy(flat.begin() + long(off), flat.begin() + long(off + size_t(t->numel())), t->data());
    off += size_t(t->numel());
  }
  if (off != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

Adam::Adam(std::vector<Tensor*> params, std::vector<Tensor*> grads,
           double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), grads_(std::move(grads)),
      lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (params_.size() != grads_.size())
    throw std::invalid_argument("Adam: params/grads size mismatch");
  for (const Tensor* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step() {
  ++t_;
  for (size_t i = 0; i < params_.size(); ++i)
    kernels::adam_step(*params_[i], *grads_[i], m_[i], v_[i], t_, lr_, beta1_, beta2_, eps_);
}

}  // namespace puzzlegan::nn
