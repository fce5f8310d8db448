#pragma once

#include <cstdint>
#include <vector>

#include "sonogan/nn/layers.hpp"

namespace sonogan::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected moments. Moment buffers follow the order of the
// parameter list given at construction.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig cfg);

  void step();
  void zero_grad();
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace sonogan::nn
