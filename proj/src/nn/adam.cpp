#include "sonogan/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sonogan::nn {

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0) || cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw std::invalid_argument("adam: lr must be positive and betas in [0, 1)");
  }
  for (const Param<T>* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param<T>& p = *params_[k];
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] = static_cast<T>(w[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  nn::zero_grad(params_);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sonogan::nn
