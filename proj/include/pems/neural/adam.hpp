#pragma once

#include <pems/neural/layers.hpp>

#include <cmath>
#include <vector>

namespace pems::nn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat> m, v;
};

// Bias-corrected adaptive-moment update, in place. Moments are created lazily on the first call.
inline void adam_step(const std::vector<Mat*>& params, const std::vector<Mat*>& grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Mat::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Mat& g = *grads[k];
    if (g.rows() != params[k]->rows() || g.cols() != params[k]->cols()) throw ShapeError("adam: gradient shape mismatch");
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseProduct(g);
    params[k]->array() -= lr * (state.m[k].array() / c1) / ((state.v[k].array() / c2).sqrt() + state.eps);
  }
}

}  // namespace pems::nn
