#pragma once

#include <vector>

#include "dmpad/netcore/layers.hpp"

namespace dmpad::nn {

class Adam {
 public:
  explicit Adam(std::vector<Param*> params, float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f);

  void step();
  void zero_grad();
  float lr() const { return lr_; }
  long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace dmpad::nn
