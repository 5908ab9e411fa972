#pragma once

#include <vector>

#include "modmo/nn.hpp"

namespace modmo {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class T>
struct AdamWState {
  std::vector<Mat<T>> m, v;
  long step = 0;
};

// Decoupled weight decay:
//   p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
template <class T>
void adamw_step(std::vector<nn::ParamRef<T>>& params, const std::vector<nn::ParamRef<T>>& grads,
                AdamWState<T>& state, const AdamWConfig& cfg) {
  require(params.size() == grads.size(), ErrorCode::ShapeMismatch, "parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
      state.v.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
    }
  }
  require(state.m.size() == params.size(), ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<T>& p = *params[i].value;
    const Mat<T>& g = *grads[i].value;
    require(p.rows() == g.rows() && p.cols() == g.cols() && state.m[i].rows() == p.rows() &&
                state.m[i].cols() == p.cols(),
            ErrorCode::ShapeMismatch, "shape mismatch for " + params[i].name);
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g.cwiseProduct(g);
    if (cfg.weight_decay != 0.0) p *= static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    const T step = static_cast<T>(cfg.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    p.array() -= step * state.m[i].array() / ((state.v[i].array() * inv_bc2).sqrt() + static_cast<T>(cfg.eps));
  }
}

}  // namespace modmo
