// Copyright 2026 The segtrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal layer toolkit with explicit forward/backward passes.
//
// Tensors are single-sample C x H x W (images) or N x D row-major (point
// sets). Layers cache nothing themselves: callers keep the activations they
// need and hand them back to backward(). Gradients accumulate into Param::grad.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "segtrack/errors.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace segtrack::nn {

// Flushes denormal floats to zero for the guard's lifetime. Tiny Gaussian
// tails in the loss gradients otherwise slow float GEMMs down by ~10x.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

// 64-byte aligned storage so float results do not depend on allocation addresses.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  Buffer<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return v.size(); }
  T* channel(int k) { return v.data() + k * plane(); }
  const T* channel(int k) const { return v.data() + k * plane(); }
  T& at(int k, int y, int x) { return v[k * plane() + static_cast<std::size_t>(y) * w + x]; }
  T at(int k, int y, int x) const { return v[k * plane() + static_cast<std::size_t>(y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool frozen = false;

  std::size_t size() const { return value.size(); }
};

// Owns parameters with stable addresses, in registration order.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    Param<T>& p = params_.emplace_back();
    p.name = name;
    p.shape = std::move(shape);
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
    return p;
  }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Param<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  std::deque<Param<T>>& all() { return params_; }
  const std::deque<Param<T>>& all() const { return params_; }

 private:
  std::deque<Param<T>> params_;
};

template <typename T>
void he_init(Param<T>& p, int fan_in, std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
  std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  for (auto& x : p.value) x = static_cast<T>(nd(rng));
}

constexpr double kLeakySlope = 0.1;

template <typename T>
void leaky_relu_inplace(Buffer<T>& x) {
  for (auto& v : x) v = v > T(0) ? v : T(kLeakySlope) * v;
}

// dy -> dx given the activation output y (sign of y equals sign of the input).
template <typename T>
void leaky_relu_backward_inplace(const Buffer<T>& y, Buffer<T>& d) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(y[i] > T(0))) d[i] *= T(kLeakySlope);
}

// Square kernel (1 or 3), zero padding k/2, stride 1 or 2.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int cin, int cout, int k, int stride)
      : cin_(cin), cout_(cout), k_(k), stride_(stride) {
    if (k != 1 && k != 3) throw ContractViolation("Conv2d: kernel must be 1 or 3");
    if (stride != 1 && stride != 2) throw ContractViolation("Conv2d: stride must be 1 or 2");
    weight_ = &store.add(name + ".weight", {cout, cin, k, k});
    bias_ = &store.add(name + ".bias", {cout});
  }

  void init(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    he_init(*weight_, cin_ * k_ * k_, rng, gain);
    std::fill(bias_->value.begin(), bias_->value.end(), T(0));
  }

  Param<T>& weight() { return *weight_; }
  Param<T>& bias() { return *bias_; }
  int out_channels() const { return cout_; }

  int out_h(int h) const { return (h + 2 * (k_ / 2) - k_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * (k_ / 2) - k_) / stride_ + 1; }

  void forward(const Tensor<T>& x, Tensor<T>& y, Buffer<T>& col) const {
    if (x.c != cin_) throw ContractViolation("Conv2d: input channel mismatch");
    const int oh = out_h(x.h), ow = out_w(x.w);
    y = Tensor<T>(cout_, oh, ow);
    const int kk = cin_ * k_ * k_;
    const T* src = x.v.data();
    if (k_ == 1 && stride_ == 1) {
      ConstMatMap<T> in(src, cin_, oh * ow);
      multiply(in, y);
      return;
    }
    if (k_ == 3 && stride_ == 1) {
      forward_shifted(x, y, col);
      return;
    }
    im2col(x, oh, ow, col);
    ConstMatMap<T> c(col.data(), kk, oh * ow);
    multiply(c, y);
  }

  // dx is overwritten; col must be the buffer filled by forward().
  void backward(const Tensor<T>& x, const Buffer<T>& col, const Tensor<T>& dy, Tensor<T>* dx) {
    if (k_ == 3 && stride_ == 1) {
      backward_shifted(x, col, dy, dx);
      return;
    }
    const int oh = dy.h, ow = dy.w, kk = cin_ * k_ * k_;
    ConstMatMap<T> g(dy.v.data(), cout_, oh * ow);
    MatMap<T> dw(weight_->grad.data(), cout_, kk);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_->grad.data(), cout_);
    db += g.rowwise().sum();
    ConstMatMap<T> w(weight_->value.data(), cout_, kk);
    const bool pointwise = k_ == 1 && stride_ == 1;
    if (pointwise) {
      ConstMatMap<T> in(x.v.data(), cin_, oh * ow);
      dw.noalias() += g * in.transpose();
    } else {
      ConstMatMap<T> c(col.data(), kk, oh * ow);
      dw.noalias() += g * c.transpose();
    }
    if (!dx) return;
    *dx = Tensor<T>(cin_, x.h, x.w);
    if (pointwise) {
      MatMap<T> out(dx->v.data(), cin_, oh * ow);
      out.noalias() = w.transpose() * g;
      return;
    }
    Buffer<T> dcol(static_cast<std::size_t>(kk) * oh * ow);
    MatMap<T> dc(dcol.data(), kk, oh * ow);
    dc.noalias() = w.transpose() * g;
    col2im(dcol, oh, ow, *dx);
  }

 private:
  // 3x3 stride-1 convolution as nine shifted GEMMs over a zero-padded copy of
  // the input. Rows are computed W+2 wide; the two extra columns are junk and
  // get dropped, which lets every tap read a plain strided block.
  std::size_t padded_plane(const Tensor<T>& x) const { return static_cast<std::size_t>(x.h + 2) * (x.w + 2); }

  void pad_input(const Tensor<T>& x, Buffer<T>& xpad) const {
    const int wp = x.w + 2;
    const std::size_t sp = padded_plane(x);
    xpad.assign(sp * cin_ + 2, T(0));
    for (int ci = 0; ci < cin_; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        std::copy_n(x.channel(ci) + static_cast<std::size_t>(yy) * x.w, x.w,
                    xpad.data() + ci * sp + static_cast<std::size_t>(yy + 1) * wp + 1);
  }

  // Weight tap k as a cout x cin matrix.
  RowMat<T> tap(const Buffer<T>& w, int k) const {
    RowMat<T> m(cout_, cin_);
    for (int co = 0; co < cout_; ++co)
      for (int ci = 0; ci < cin_; ++ci) m(co, ci) = w[(static_cast<std::size_t>(co) * cin_ + ci) * 9 + k];
    return m;
  }

  void forward_shifted(const Tensor<T>& x, Tensor<T>& y, Buffer<T>& xpad) const {
    pad_input(x, xpad);
    const int wp = x.w + 2;
    const Eigen::Index n = static_cast<Eigen::Index>(x.h) * wp;
    const Eigen::Index sp = static_cast<Eigen::Index>(padded_plane(x));
    RowMat<T> ypad = RowMat<T>::Zero(cout_, n);
    for (int k = 0; k < 9; ++k) {
      const std::size_t off = static_cast<std::size_t>(k / 3) * wp + k % 3;
      ConstStridedMap<T> xs(xpad.data() + off, cin_, n, Eigen::OuterStride<>(sp));
      ypad.noalias() += tap(weight_->value, k) * xs;
    }
    for (int co = 0; co < cout_; ++co) {
      const T b = bias_->value[co];
      T* dst = y.channel(co);
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx) dst[yy * x.w + xx] = ypad(co, yy * wp + xx) + b;
    }
  }

  void backward_shifted(const Tensor<T>& x, const Buffer<T>& xpad, const Tensor<T>& dy, Tensor<T>* dx) {
    const int wp = x.w + 2;
    const Eigen::Index n = static_cast<Eigen::Index>(x.h) * wp;
    const Eigen::Index sp = static_cast<Eigen::Index>(padded_plane(x));
    RowMat<T> g = RowMat<T>::Zero(cout_, n);
    for (int co = 0; co < cout_; ++co) {
      const T* src = dy.channel(co);
      T bsum = T(0);
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx) {
          const T v = src[yy * x.w + xx];
          g(co, yy * wp + xx) = v;
          bsum += v;
        }
      bias_->grad[co] += bsum;
    }
    Buffer<T> dxpad;
    if (dx) dxpad.assign(xpad.size(), T(0));
    for (int k = 0; k < 9; ++k) {
      const std::size_t off = static_cast<std::size_t>(k / 3) * wp + k % 3;
      ConstStridedMap<T> xs(xpad.data() + off, cin_, n, Eigen::OuterStride<>(sp));
      RowMat<T> dwk = g * xs.transpose();
      for (int co = 0; co < cout_; ++co)
        for (int ci = 0; ci < cin_; ++ci) weight_->grad[(static_cast<std::size_t>(co) * cin_ + ci) * 9 + k] += dwk(co, ci);
      if (dx) {
        StridedMap<T> ds(dxpad.data() + off, cin_, n, Eigen::OuterStride<>(sp));
        ds.noalias() += tap(weight_->value, k).transpose() * g;
      }
    }
    if (!dx) return;
    *dx = Tensor<T>(cin_, x.h, x.w);
    for (int ci = 0; ci < cin_; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        std::copy_n(dxpad.data() + ci * sp + static_cast<std::size_t>(yy + 1) * wp + 1, x.w,
                    dx->channel(ci) + static_cast<std::size_t>(yy) * x.w);
  }

  template <typename M>
  void multiply(const M& in, Tensor<T>& y) const {
    MatMap<T> out(y.v.data(), cout_, y.h * y.w);
    ConstMatMap<T> w(weight_->value.data(), cout_, in.rows());
    out.noalias() = w * in;
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_->value.data(), cout_);
    out.colwise() += b;
  }

  void im2col(const Tensor<T>& x, int oh, int ow, Buffer<T>& col) const {
    const int pad = k_ / 2;
    col.assign(static_cast<std::size_t>(cin_) * k_ * k_ * oh * ow, T(0));
    std::size_t row = 0;
    for (int ci = 0; ci < cin_; ++ci) {
      const T* plane = x.channel(ci);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++row) {
          T* dst = col.data() + row * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            const T* srow = plane + static_cast<std::size_t>(iy) * x.w;
            T* drow = dst + static_cast<std::size_t>(oy) * ow;
            if (stride_ == 1) {
              const int shift = kx - pad;
              const int lo = std::max(0, -shift), hi = std::min(ow, x.w - shift);
              for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox + shift];
            } else {
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ + kx - pad;
                if (ix >= 0 && ix < x.w) drow[ox] = srow[ix];
              }
            }
          }
        }
      }
    }
  }

  void col2im(const Buffer<T>& dcol, int oh, int ow, Tensor<T>& dx) const {
    const int pad = k_ / 2;
    std::size_t row = 0;
    for (int ci = 0; ci < cin_; ++ci) {
      T* plane = dx.channel(ci);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++row) {
          const T* src = dcol.data() + row * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ + ky - pad;
            if (iy < 0 || iy >= dx.h) continue;
            T* drow = plane + static_cast<std::size_t>(iy) * dx.w;
            const T* srow = src + static_cast<std::size_t>(oy) * ow;
            if (stride_ == 1) {
              const int shift = kx - pad;
              const int lo = std::max(0, -shift), hi = std::min(ow, dx.w - shift);
              for (int ox = lo; ox < hi; ++ox) drow[ox + shift] += srow[ox];
            } else {
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ + kx - pad;
                if (ix >= 0 && ix < dx.w) drow[ix] += srow[ox];
              }
            }
          }
        }
      }
    }
  }

  int cin_ = 0, cout_ = 0, k_ = 3, stride_ = 1;
  Param<T>* weight_ = nullptr;
  Param<T>* bias_ = nullptr;
};

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  Tensor<T> y(x.c, x.h * 2, x.w * 2);
  for (int k = 0; k < x.c; ++k)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) y.at(k, yy, xx) = x.at(k, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.c, dy.h / 2, dy.w / 2);
  for (int k = 0; k < dy.c; ++k)
    for (int yy = 0; yy < dy.h; ++yy)
      for (int xx = 0; xx < dy.w; ++xx) dx.at(k, yy / 2, xx / 2) += dy.at(k, yy, xx);
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.h != b.h || a.w != b.w) throw ContractViolation("concat_channels: spatial size mismatch");
  Tensor<T> y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& d, int ca, Tensor<T>& da, Tensor<T>& db) {
  da = Tensor<T>(ca, d.h, d.w);
  db = Tensor<T>(d.c - ca, d.h, d.w);
  std::copy(d.v.begin(), d.v.begin() + static_cast<std::ptrdiff_t>(da.size()), da.v.begin());
  std::copy(d.v.begin() + static_cast<std::ptrdiff_t>(da.size()), d.v.end(), db.v.begin());
}

// Fully connected layer over the rows of an N x in matrix.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, int in, int out) : in_(in), out_(out) {
    weight_ = &store.add(name + ".weight", {out, in});
    bias_ = &store.add(name + ".bias", {out});
  }

  void init(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    he_init(*weight_, in_, rng, gain);
    std::fill(bias_->value.begin(), bias_->value.end(), T(0));
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param<T>& weight() { return *weight_; }
  Param<T>& bias() { return *bias_; }

  RowMat<T> forward(const RowMat<T>& x) const {
    if (x.cols() != in_) throw ContractViolation("Linear: input width mismatch");
    ConstMatMap<T> w(weight_->value.data(), out_, in_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_->value.data(), out_);
    RowMat<T> y = x * w.transpose();
    y.rowwise() += b;
    return y;
  }

  // Returns dx; accumulates parameter gradients unless the layer is frozen.
  RowMat<T> backward(const RowMat<T>& x, const RowMat<T>& dy, bool need_dx = true) {
    ConstMatMap<T> w(weight_->value.data(), out_, in_);
    if (!weight_->frozen) {
      MatMap<T> dw(weight_->grad.data(), out_, in_);
      dw.noalias() += dy.transpose() * x;
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_->grad.data(), out_);
      db += dy.colwise().sum();
    }
    if (!need_dx) return {};
    return dy * w;
  }

 private:
  int in_ = 0, out_ = 0;
  Param<T>* weight_ = nullptr;
  Param<T>* bias_ = nullptr;
};

template <typename T>
void leaky_relu_inplace(RowMat<T>& x) {
  x = x.unaryExpr([](T v) { return v > T(0) ? v : T(kLeakySlope) * v; });
}

template <typename T>
void leaky_relu_backward_inplace(const RowMat<T>& y, RowMat<T>& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!(y.data()[i] > T(0))) d.data()[i] *= T(kLeakySlope);
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Skips frozen parameters entirely, so their values stay bit-identical.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, AdamOptions opt) : store_(&store), opt_(opt) {
    for (auto& p : store.all()) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }

  // grad_scale multiplies the accumulated gradients (e.g. 1/batch).
  void step(double grad_scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_);
    const double c2 = 1.0 - std::pow(opt_.beta2, t_);
    std::size_t k = 0;
    for (auto& p : store_->all()) {
      auto& m = m_[k];
      auto& v = v_[k];
      ++k;
      if (p.frozen) continue;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]) * grad_scale;
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
        const double upd = opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
        p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - upd);
      }
    }
  }

 private:
  ParamStore<T>* store_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace segtrack::nn
