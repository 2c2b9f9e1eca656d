#pragma once

#include <cmath>

#include "charkb/tensor.hpp"

namespace charkb {

/// RMSProp state for one parameter tensor:
///   acc <- decay*acc + (1-decay)*g^2
///   p   <- p - lr * g / (sqrt(acc) + eps)
template <class S>
struct RmsProp {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;

  void step(Tensor<S>& param, const Tensor<S>& grad, Tensor<S>& acc) const {
    if (!param.same_shape(grad) || !param.same_shape(acc)) {
      throw ShapeMismatch("rmsprop: param/grad/acc shapes disagree");
    }
    const int64_t n = param.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(grad.at(i));
      double a = decay * static_cast<double>(acc.at(i)) + (1.0 - decay) * g * g;
      acc.at(i) = static_cast<S>(a);
      param.at(i) = static_cast<S>(static_cast<double>(param.at(i)) -
                                   learning_rate * g / (std::sqrt(a) + epsilon));
    }
  }
};

}  // namespace charkb
