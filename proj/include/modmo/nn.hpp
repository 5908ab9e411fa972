#pragma once

// Dense layers with explicit forward caches and reverse passes. Tokens are
// rows; every parameter is a row-major matrix so optimizers and checkpoints
// can treat all of them uniformly.

#include <string>
#include <vector>

#include "modmo/common.hpp"

namespace modmo::nn {

// Visits every parameter array as (name, Mat<T>&).
template <class T>
struct ParamRef {
  std::string name;
  Mat<T>* value;
};

template <class T>
struct Linear {
  Mat<T> W;  // in x out
  Mat<T> b;  // 1 x out

  Linear() = default;
  Linear(int in, int out) : W(Mat<T>::Zero(in, out)), b(Mat<T>::Zero(1, out)) {}

  void init(Rng& rng, double gain = 1.0) {
    rng.fill_normal(W, gain / std::sqrt(static_cast<double>(W.rows())));
    b.setZero();
  }

  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  // dx may be null when the input gradient is not needed; grad may be null for
  // frozen layers.
  void backward(const Mat<T>& x, const Mat<T>& dy, Linear* grad, Mat<T>* dx) const {
    if (grad) {
      grad->W.noalias() += x.transpose() * dy;
      grad->b += dy.colwise().sum();
    }
    if (dx) dx->noalias() = dy * W.transpose();
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

template <class T>
struct LayerNorm {
  Mat<T> gamma;  // 1 x d
  Mat<T> beta;   // 1 x d
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int d) : gamma(Mat<T>::Ones(1, d)), beta(Mat<T>::Zero(1, d)) {}

  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
  };

  Mat<T> forward(const Mat<T>& x, Cache& c) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    c.xhat.resize(n, d);
    c.rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      const T rstd = T(1) / std::sqrt(var + T(kEps));
      c.rstd(i) = rstd;
      c.xhat.row(i) = (x.row(i).array() - mean) * rstd;
    }
    Mat<T> y = c.xhat.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy, LayerNorm* grad) const {
    if (grad) {
      grad->gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
      grad->beta += dy.colwise().sum();
    }
    const Mat<T> dxhat = dy.array().rowwise() * gamma.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const T m1 = dxhat.row(i).mean();
      const T m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
      dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
    }
    return dx;
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

// tanh approximation
template <class T>
inline Mat<T> gelu(const Mat<T>& x) {
  const T k = T(0.7978845608028654);
  return (T(0.5) * x.array() * (T(1) + (k * (x.array() + T(0.044715) * x.array().cube())).tanh())).matrix();
}

template <class T>
inline Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const T k = T(0.7978845608028654);
  const auto u = k * (x.array() + T(0.044715) * x.array().cube());
  const auto th = u.tanh();
  const auto du = k * (T(1) + T(3 * 0.044715) * x.array().square());
  const auto dgelu = T(0.5) * (T(1) + th) + T(0.5) * x.array() * (T(1) - th.square()) * du;
  return (dy.array() * dgelu).matrix();
}

// Pre-norm transformer block with bidirectional multi-head self-attention:
//   h = x + Proj(Attn(LN1(x)));  y = h + FC2(GELU(FC1(LN2(h))))
template <class T>
struct Block {
  int heads = 1;
  LayerNorm<T> ln1, ln2;
  Linear<T> qkv, proj, fc1, fc2;

  Block() = default;
  Block(int d_model, int n_heads, int d_ff)
      : heads(n_heads),
        ln1(d_model),
        ln2(d_model),
        qkv(d_model, 3 * d_model),
        proj(d_model, d_model),
        fc1(d_model, d_ff),
        fc2(d_ff, d_model) {}

  void init(Rng& rng, double residual_gain) {
    qkv.init(rng);
    proj.init(rng, residual_gain);
    fc1.init(rng);
    fc2.init(rng, residual_gain);
  }

  struct Cache {
    Mat<T> x, a1, qkv, ctx, h, a2, f1, g;
    typename LayerNorm<T>::Cache ln1, ln2;
    std::vector<Mat<T>> probs;  // per head, n x n
  };

  Mat<T> forward(const Mat<T>& x, Cache& c) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    const Eigen::Index hd = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    c.x = x;
    c.a1 = ln1.forward(x, c.ln1);
    c.qkv = qkv.forward(c.a1);
    c.ctx.resize(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * hd, hd);
      const auto k = c.qkv.middleCols(d + h * hd, hd);
      const auto v = c.qkv.middleCols(2 * d + h * hd, hd);
      Mat<T> s = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      c.ctx.middleCols(h * hd, hd).noalias() = s * v;
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    c.h = x + proj.forward(c.ctx);
    c.a2 = ln2.forward(c.h, c.ln2);
    c.f1 = fc1.forward(c.a2);
    c.g = gelu(c.f1);
    return c.h + fc2.forward(c.g);
  }

  // Returns d(loss)/dx. grad may be null (frozen block); its parameter
  // gradients are then skipped but the input gradient is still produced.
  Mat<T> backward(const Cache& c, const Mat<T>& dy, Block* grad) const {
    const Eigen::Index n = c.x.rows(), d = c.x.cols();
    const Eigen::Index hd = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));

    Mat<T> dg;
    fc2.backward(c.g, dy, grad ? &grad->fc2 : nullptr, &dg);
    const Mat<T> df1 = gelu_backward(c.f1, dg);
    Mat<T> da2;
    fc1.backward(c.a2, df1, grad ? &grad->fc1 : nullptr, &da2);
    Mat<T> dh = dy + ln2.backward(c.ln2, da2, grad ? &grad->ln2 : nullptr);

    Mat<T> dctx;
    proj.backward(c.ctx, dh, grad ? &grad->proj : nullptr, &dctx);
    Mat<T> dqkv(n, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const auto& p = c.probs[static_cast<std::size_t>(h)];
      const auto q = c.qkv.middleCols(h * hd, hd);
      const auto k = c.qkv.middleCols(d + h * hd, hd);
      const auto v = c.qkv.middleCols(2 * d + h * hd, hd);
      const auto dc = dctx.middleCols(h * hd, hd);
      const Mat<T> dp = dc * v.transpose();
      dqkv.middleCols(2 * d + h * hd, hd).noalias() = p.transpose() * dc;
      Mat<T> ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
      ds *= scale;
      dqkv.middleCols(h * hd, hd).noalias() = ds * k;
      dqkv.middleCols(d + h * hd, hd).noalias() = ds.transpose() * q;
    }
    Mat<T> da1;
    qkv.backward(c.a1, dqkv, grad ? &grad->qkv : nullptr, &da1);
    return dh + ln1.backward(c.ln1, da1, grad ? &grad->ln1 : nullptr);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    ln1.for_each(prefix + ".ln1", f);
    qkv.for_each(prefix + ".qkv", f);
    proj.for_each(prefix + ".proj", f);
    ln2.for_each(prefix + ".ln2", f);
    fc1.for_each(prefix + ".fc1", f);
    fc2.for_each(prefix + ".fc2", f);
  }
};

// Sinusoidal features: out[2i] = sin(x * w_i), out[2i+1] = cos(x * w_i),
// w_i = 10000^(-2i/d).
inline VecD sinusoid(double x, int d) {
  VecD e(d);
  for (int i = 0; 2 * i < d; ++i) {
    const double w = std::pow(10000.0, -2.0 * i / d);
    e(2 * i) = std::sin(x * w);
    if (2 * i + 1 < d) e(2 * i + 1) = std::cos(x * w);
  }
  return e;
}

template <class T>
Mat<T> positional_encoding(Eigen::Index rows, int d) {
  Mat<T> pe(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) pe.row(i) = sinusoid(static_cast<double>(i), d).transpose().cast<T>();
  return pe;
}

// Collects all parameters of a model exposing for_each(prefix, f).
template <class T, class Model>
std::vector<ParamRef<T>> collect_params(Model& m) {
  std::vector<ParamRef<T>> out;
  m.for_each([&](const std::string& name, Mat<T>& v) { out.push_back({name, &v}); });
  return out;
}

// Same structure as m with every array zeroed (gradient accumulator).
template <class Model>
Model zeros_like(const Model& m) {
  Model z = m;
  z.for_each([](const std::string&, auto& v) { v.setZero(); });
  return z;
}

}  // namespace modmo::nn
