#pragma once

// Layers operate on column batches: an activation matrix is (features x batch) and a
// sequence is one such matrix per timestep. Each layer type doubles as its own
// gradient accumulator (same shapes, zero-initialised).

#include <pems/core.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace pems::nn {

using Mat = Eigen::MatrixXd;
using Seq = std::vector<Mat>;

enum class Activation { linear, relu };

inline Mat activate(const Mat& z, Activation a) { return a == Activation::relu ? Mat(z.cwiseMax(0.0)) : z; }

inline Mat sigmoid(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

struct DenseGrads {
  Mat dW, db, dx;
};

// y = act(W x + b)
inline Mat dense_forward(const Mat& W, const Mat& b, const Mat& x, Activation act, Mat* preact = nullptr) {
  if (W.cols() != x.rows() || b.rows() != W.rows() || b.cols() != 1)
    throw ShapeError("dense: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) + ", input has " +
                     std::to_string(x.rows()) + " rows");
  Mat z = W * x;
  z.colwise() += b.col(0);
  if (preact) *preact = z;
  return activate(z, act);
}

// Exact gradients of sum(dy . y) with respect to W, b and x.
inline DenseGrads dense_backward(const Mat& W, const Mat& x, const Mat& z, const Mat& dy, Activation act) {
  if (dy.rows() != W.rows() || dy.cols() != x.cols()) throw ShapeError("dense backward: gradient shape mismatch");
  const Mat dz = act == Activation::relu ? Mat(dy.cwiseProduct((z.array() > 0.0).cast<double>().matrix())) : dy;
  return {dz * x.transpose(), dz.rowwise().sum(), W.transpose() * dz};
}

struct DenseLayer {
  Mat W, b;
  Activation act = Activation::linear;

  struct Cache {
    Mat x, z;
  };

  static DenseLayer zeros(Eigen::Index in, Eigen::Index out, Activation act) {
    return {Mat::Zero(out, in), Mat::Zero(out, 1), act};
  }

  Mat forward(const Mat& x, Cache* cache) const {
    if (!cache) return dense_forward(W, b, x, act);
    cache->x = x;
    return dense_forward(W, b, x, act, &cache->z);
  }

  Mat backward(const Cache& cache, const Mat& dy, DenseLayer& grad) const {
    auto g = dense_backward(W, cache.x, cache.z, dy, act);
    grad.W += g.dW;
    grad.b += g.db;
    return std::move(g.dx);
  }

  std::vector<Mat*> params() { return {&W, &b}; }
};

// Gate blocks stacked as [input; forget; candidate; output].
struct LstmLayer {
  Mat Wx, Wh, b;  // (4h x in), (4h x h), (4h x 1)
  bool return_sequences = false;

  struct Step {
    Mat x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };
  struct Cache {
    std::vector<Step> steps;
  };

  Eigen::Index hidden() const { return Wh.cols(); }

  static LstmLayer zeros(Eigen::Index in, Eigen::Index h, bool return_sequences) {
    return {Mat::Zero(4 * h, in), Mat::Zero(4 * h, h), Mat::Zero(4 * h, 1), return_sequences};
  }

  // One cell step for a batch of columns.
  void step(const Mat& x, const Mat& h_prev, const Mat& c_prev, Mat& h, Mat& c, Step* s = nullptr) const {
    if (x.rows() != Wx.cols() || h_prev.rows() != hidden() || c_prev.rows() != hidden())
      throw ShapeError("lstm cell: input or state width mismatch");
    const Eigen::Index n = hidden();
    Mat a = Wx * x;
    a.noalias() += Wh * h_prev;
    a.colwise() += b.col(0);
    const Mat i = sigmoid(a.topRows(n));
    const Mat f = sigmoid(a.middleRows(n, n));
    const Mat g = a.middleRows(2 * n, n).array().tanh().matrix();
    const Mat o = sigmoid(a.bottomRows(n));
    c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    const Mat tc = c.array().tanh().matrix();
    h = o.cwiseProduct(tc);
    if (s) *s = {x, h_prev, c_prev, i, f, g, o, c, tc};
  }

  Seq forward(const Seq& xs, Cache* cache) const {
    if (xs.empty()) throw ShapeError("lstm: empty sequence");
    const Eigen::Index batch = xs.front().cols();
    Mat h = Mat::Zero(hidden(), batch), c = Mat::Zero(hidden(), batch);
    Seq out;
    if (cache) cache->steps.resize(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
      Mat h_next, c_next;
      step(xs[t], h, c, h_next, c_next, cache ? &cache->steps[t] : nullptr);
      h = std::move(h_next);
      c = std::move(c_next);
      if (return_sequences) out.push_back(h);
    }
    if (!return_sequences) out.push_back(std::move(h));
    return out;
  }

  // Backpropagation through time. dys holds one gradient per emitted output.
  Seq backward(const Cache& cache, const Seq& dys, LstmLayer& grad) const {
    const std::size_t T = cache.steps.size();
    const Eigen::Index n = hidden();
    const Eigen::Index batch = cache.steps.front().x.cols();
    Mat dh_next = Mat::Zero(n, batch), dc_next = Mat::Zero(n, batch);
    Seq dxs(T);
    Mat da(4 * n, batch);
    for (std::size_t t = T; t-- > 0;) {
      const Step& s = cache.steps[t];
      Mat dh = dh_next;
      if (return_sequences) dh += dys[t];
      else if (t == T - 1) dh += dys.front();
      const Mat d_o = dh.cwiseProduct(s.tanh_c);
      const Mat dc = dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix()) + dc_next;
      da.topRows(n) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      da.middleRows(n, n) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      da.middleRows(2 * n, n) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      da.bottomRows(n) = d_o.cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
      dc_next = dc.cwiseProduct(s.f);
      grad.Wx.noalias() += da * s.x.transpose();
      grad.Wh.noalias() += da * s.h_prev.transpose();
      grad.b += da.rowwise().sum();
      dxs[t].noalias() = Wx.transpose() * da;
      dh_next.noalias() = Wh.transpose() * da;
    }
    return dxs;
  }

  std::vector<Mat*> params() { return {&Wx, &Wh, &b}; }
};

// Gate blocks stacked as [update; reset; candidate]; the candidate sees r * h_prev.
struct GruLayer {
  Mat Wx, Wh, b;  // (3h x in), (3h x h), (3h x 1)
  bool return_sequences = false;

  struct Step {
    Mat x, h_prev, z, r, rh, n;
  };
  struct Cache {
    std::vector<Step> steps;
  };

  Eigen::Index hidden() const { return Wh.cols(); }

  static GruLayer zeros(Eigen::Index in, Eigen::Index h, bool return_sequences) {
    return {Mat::Zero(3 * h, in), Mat::Zero(3 * h, h), Mat::Zero(3 * h, 1), return_sequences};
  }

  // h = (1 - z) * h_prev + z * n
  Mat step(const Mat& x, const Mat& h_prev, Step* s = nullptr) const {
    if (x.rows() != Wx.cols() || h_prev.rows() != hidden()) throw ShapeError("gru cell: input or state width mismatch");
    const Eigen::Index n = hidden();
    Mat ax = Wx * x;
    ax.colwise() += b.col(0);
    Mat azr = ax.topRows(2 * n);
    azr.noalias() += Wh.topRows(2 * n) * h_prev;
    const Mat z = sigmoid(azr.topRows(n));
    const Mat r = sigmoid(azr.bottomRows(n));
    const Mat rh = r.cwiseProduct(h_prev);
    Mat an = ax.bottomRows(n);
    an.noalias() += Wh.bottomRows(n) * rh;
    const Mat cand = an.array().tanh().matrix();
    Mat h = h_prev + z.cwiseProduct(cand - h_prev);
    if (s) *s = {x, h_prev, z, r, rh, cand};
    return h;
  }

  Seq forward(const Seq& xs, Cache* cache) const {
    if (xs.empty()) throw ShapeError("gru: empty sequence");
    Mat h = Mat::Zero(hidden(), xs.front().cols());
    Seq out;
    if (cache) cache->steps.resize(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
      h = step(xs[t], h, cache ? &cache->steps[t] : nullptr);
      if (return_sequences) out.push_back(h);
    }
    if (!return_sequences) out.push_back(std::move(h));
    return out;
  }

  Seq backward(const Cache& cache, const Seq& dys, GruLayer& grad) const {
    const std::size_t T = cache.steps.size();
    const Eigen::Index n = hidden();
    const Eigen::Index batch = cache.steps.front().x.cols();
    Mat dh_next = Mat::Zero(n, batch);
    Seq dxs(T);
    Mat da(3 * n, batch);
    for (std::size_t t = T; t-- > 0;) {
      const Step& s = cache.steps[t];
      Mat dh = dh_next;
      if (return_sequences) dh += dys[t];
      else if (t == T - 1) dh += dys.front();
      const Mat dn = dh.cwiseProduct(s.z);
      const Mat dz = dh.cwiseProduct(s.n - s.h_prev);
      Mat dh_prev = dh - dh.cwiseProduct(s.z);
      const Mat dan = dn.cwiseProduct((1.0 - s.n.array().square()).matrix());
      const Mat drh = Wh.bottomRows(n).transpose() * dan;
      const Mat dr = drh.cwiseProduct(s.h_prev);
      dh_prev += drh.cwiseProduct(s.r);
      da.topRows(n) = dz.cwiseProduct(s.z.cwiseProduct((1.0 - s.z.array()).matrix()));
      da.middleRows(n, n) = dr.cwiseProduct(s.r.cwiseProduct((1.0 - s.r.array()).matrix()));
      da.bottomRows(n) = dan;
      grad.Wx.noalias() += da * s.x.transpose();
      grad.Wh.topRows(2 * n).noalias() += da.topRows(2 * n) * s.h_prev.transpose();
      grad.Wh.bottomRows(n).noalias() += dan * s.rh.transpose();
      grad.b += da.rowwise().sum();
      dh_prev.noalias() += Wh.topRows(2 * n).transpose() * da.topRows(2 * n);
      dxs[t].noalias() = Wx.transpose() * da;
      dh_next = std::move(dh_prev);
    }
    return dxs;
  }

  std::vector<Mat*> params() { return {&Wx, &Wh, &b}; }
};

// Single-sample convenience wrappers over the layer step functions.
struct LstmState {
  Mat h, c;
};

inline LstmState lstm_cell(const Mat& x_t, const Mat& h_prev, const Mat& c_prev, const LstmLayer& params) {
  LstmState out;
  params.step(x_t, h_prev, c_prev, out.h, out.c);
  return out;
}

inline Mat gru_cell(const Mat& x_t, const Mat& h_prev, const GruLayer& params) { return params.step(x_t, h_prev); }

}  // namespace pems::nn
