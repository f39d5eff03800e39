#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tfd/error.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"

// Layer catalog: conv2d (3x3, stride 1, pad 1), conv_transpose2d (2x2,
// stride 2), maxpool2d (2x2, stride 2), batchnorm2d, linear, relu, sigmoid,
// softmax, dropout. Every layer caches what its backward pass needs and
// accumulates parameter gradients until zero_grad.

namespace tfd::nn {

enum class Mode { kTrain, kEval };

template <typename T>
using MatM = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using MatC = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
inline void he_uniform(Tensor<T>& w, int64_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
}

template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&)>;

// Reallocate a workspace only when its shape changes. Training loops call
// layers with fixed shapes, so scratch buffers persist across steps instead
// of paying an allocation plus zero-fill per call.
template <typename T>
inline void ensure_shape(Tensor<T>& t, std::vector<int64_t> shape) {
  if (t.shape() != shape) t = Tensor<T>(shape);
}

// Strictly sequential sum. Eigen's vectorized reductions split scalar head
// from packet body by buffer alignment, so their rounding depends on where
// the allocator placed the data; bias gradients must not.
template <typename T>
inline T ordered_sum(const T* p, int64_t n) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += p[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, x [B,Din], W [Dout,Din]
// ---------------------------------------------------------------------------
template <typename T>
class Linear {
 public:
  Linear(int64_t in_dim, int64_t out_dim, bool use_bias = true)
      : in_(in_dim), out_(out_dim), use_bias_(use_bias),
        w_({out_dim, in_dim}), gw_({out_dim, in_dim}),
        b_({out_dim}), gb_({out_dim}) {}

  void init_params(Rng& rng) {
    he_uniform(w_, in_, rng);
    b_.set_zero();
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require(x.rank() == 2 && x.dim(1) == in_, ErrorKind::Invalid,
            "linear: input shape " + x.shape_string() + " does not match in_dim " +
                std::to_string(in_));
    x_ = x;
    int64_t batch = x.dim(0);
    Tensor<T> y({batch, out_});
    MatC<T> xm(x.data(), batch, in_);
    MatC<T> wm(w_.data(), out_, in_);
    MatM<T> ym(y.data(), batch, out_);
    ym.noalias() = xm * wm.transpose();
    if (use_bias_) {
      MatC<T> bm(b_.data(), 1, out_);
      ym.rowwise() += bm.row(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    backward_params_only(dy);
    int64_t batch = x_.dim(0);
    MatC<T> dym(dy.data(), batch, out_);
    Tensor<T> dx({batch, in_});
    MatM<T> dxm(dx.data(), batch, in_);
    MatC<T> wm(w_.data(), out_, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  // Parameter gradients without the input gradient, for layers whose input
  // is constant data; skips the dx product, which costs as much as the
  // weight-gradient one.
  void backward_params_only(const Tensor<T>& dy) {
    int64_t batch = x_.dim(0);
    MatC<T> dym(dy.data(), batch, out_);
    MatC<T> xm(x_.data(), batch, in_);
    MatM<T> gwm(gw_.data(), out_, in_);
    gwm.noalias() += dym.transpose() * xm;
    if (use_bias_) {
      for (int64_t n = 0; n < batch; ++n) {
        const T* row = dy.data() + n * out_;
        for (int64_t o = 0; o < out_; ++o) gb_[o] += row[o];
      }
    }
  }

  void for_each_param(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", w_);
    if (use_bias_) fn(prefix + ".b", b_);
  }
  void for_each_grad(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", gw_);
    if (use_bias_) fn(prefix + ".b", gb_);
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }
  Tensor<T>& weight_grad() { return gw_; }
  int64_t in_dim() const { return in_; }
  int64_t out_dim() const { return out_; }

 private:
  int64_t in_, out_;
  bool use_bias_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Conv2d: 3x3 kernels, stride 1, zero-padding 1; spatial size preserved.
// Forward lowers each image to a column matrix and multiplies once.
// ---------------------------------------------------------------------------
template <typename T>
class Conv2d {
 public:
  Conv2d(int64_t in_ch, int64_t out_ch)
      : cin_(in_ch), cout_(out_ch),
        w_({out_ch, in_ch, 3, 3}), gw_({out_ch, in_ch, 3, 3}),
        b_({out_ch}), gb_({out_ch}) {}

  void init_params(Rng& rng) {
    he_uniform(w_, cin_ * 9, rng);
    b_.set_zero();
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require(x.rank() == 4 && x.dim(1) == cin_, ErrorKind::Invalid,
            "conv2d: input shape " + x.shape_string() + " does not match in_ch " +
                std::to_string(cin_));
    const int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    h_ = h;
    w_img_ = w;
    batch_ = batch;
    ensure_shape(col_, {batch, cin_ * 9, hw});

    Tensor<T> y({batch, cout_, h, w});
    MatC<T> wm(w_.data(), cout_, cin_ * 9);
    for (int64_t n = 0; n < batch; ++n) {
      T* col = col_.data() + n * cin_ * 9 * hw;
      im2col(x.data() + n * cin_ * hw, col, h, w);
      MatC<T> cm(col, cin_ * 9, hw);
      MatM<T> ym(y.data() + n * cout_ * hw, cout_, hw);
      ym.noalias() = wm * cm;
      for (int64_t co = 0; co < cout_; ++co) ym.row(co).array() += b_[co];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int64_t h = h_, w = w_img_, hw = h * w, batch = batch_;
    Tensor<T> dx({batch, cin_, h, w});
    Tensor<T> dcol({cin_ * 9, hw});
    MatM<T> gwm(gw_.data(), cout_, cin_ * 9);
    MatC<T> wm(w_.data(), cout_, cin_ * 9);
    for (int64_t n = 0; n < batch; ++n) {
      const T* col = col_.data() + n * cin_ * 9 * hw;
      MatC<T> cm(col, cin_ * 9, hw);
      MatC<T> dym(dy.data() + n * cout_ * hw, cout_, hw);
      gwm.noalias() += dym * cm.transpose();
      const T* dyp = dy.data() + n * cout_ * hw;
      for (int64_t co = 0; co < cout_; ++co)
        gb_[co] += ordered_sum(dyp + co * hw, hw);
      MatM<T> dcm(dcol.data(), cin_ * 9, hw);
      dcm.noalias() = wm.transpose() * dym;
      col2im(dcol.data(), dx.data() + n * cin_ * hw, h, w);
    }
    return dx;
  }

  void for_each_param(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", w_);
    fn(prefix + ".b", b_);
  }
  void for_each_grad(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", gw_);
    fn(prefix + ".b", gb_);
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }
  int64_t in_ch() const { return cin_; }
  int64_t out_ch() const { return cout_; }

 private:
  // col rows are (ci, di, dj); taps run over the 3x3 window at offset -1..1
  void im2col(const T* x, T* col, int64_t h, int64_t w) const {
    for (int64_t ci = 0; ci < cin_; ++ci) {
      const T* xc = x + ci * h * w;
      for (int64_t di = -1; di <= 1; ++di) {
        for (int64_t dj = -1; dj <= 1; ++dj) {
          T* row = col + ((ci * 3 + (di + 1)) * 3 + (dj + 1)) * h * w;
          for (int64_t i = 0; i < h; ++i) {
            T* dst = row + i * w;
            int64_t si = i + di;
            if (si < 0 || si >= h) {
              std::fill(dst, dst + w, T(0));
              continue;
            }
            const T* src = xc + si * w;
            if (dj == 0) {
              std::copy(src, src + w, dst);
            } else if (dj < 0) {
              dst[0] = T(0);
              std::copy(src, src + w - 1, dst + 1);
            } else {
              std::copy(src + 1, src + w, dst);
              dst[w - 1] = T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, T* dx, int64_t h, int64_t w) const {
    std::fill(dx, dx + cin_ * h * w, T(0));
    for (int64_t ci = 0; ci < cin_; ++ci) {
      T* xc = dx + ci * h * w;
      for (int64_t di = -1; di <= 1; ++di) {
        for (int64_t dj = -1; dj <= 1; ++dj) {
          const T* row = col + ((ci * 3 + (di + 1)) * 3 + (dj + 1)) * h * w;
          for (int64_t i = 0; i < h; ++i) {
            int64_t si = i + di;
            if (si < 0 || si >= h) continue;
            const T* src = row + i * w;
            T* dst = xc + si * w;
            int64_t j0 = dj < 0 ? 1 : 0;
            int64_t j1 = dj > 0 ? w - 1 : w;
            for (int64_t j = j0; j < j1; ++j) dst[j + dj] += src[j];
          }
        }
      }
    }
  }

  int64_t cin_, cout_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> col_;
  int64_t h_ = 0, w_img_ = 0, batch_ = 0;
};

// ---------------------------------------------------------------------------
// ConvTranspose2d: 2x2 kernels, stride 2; exact x2 upsampling. Gradient-of-
// convolution semantics; with stride 2 the four kernel taps tile the output
// disjointly, so each tap is one matrix product.
// Weight layout [Cin, Cout, 2, 2].
// ---------------------------------------------------------------------------
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d(int64_t in_ch, int64_t out_ch)
      : cin_(in_ch), cout_(out_ch),
        w_({in_ch, out_ch, 2, 2}), gw_({in_ch, out_ch, 2, 2}),
        b_({out_ch}), gb_({out_ch}) {}

  void init_params(Rng& rng) {
    he_uniform(w_, cin_ * 4, rng);
    b_.set_zero();
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require(x.rank() == 4 && x.dim(1) == cin_, ErrorKind::Invalid,
            "conv_transpose2d: input shape " + x.shape_string() +
                " does not match in_ch " + std::to_string(cin_));
    x_ = x;
    const int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    const int64_t ho = 2 * h, wo = 2 * w;
    Tensor<T> y({batch, cout_, ho, wo});

    std::vector<Tensor<T>> taps = unpack_taps(w_);  // 4 of [Cin, Cout]
    Tensor<T> m({cout_, hw});
    for (int64_t n = 0; n < batch; ++n) {
      MatC<T> xm(x.data() + n * cin_ * hw, cin_, hw);
      for (int64_t t = 0; t < 4; ++t) {
        const int64_t di = t / 2, dj = t % 2;
        MatC<T> km(taps[t].data(), cin_, cout_);
        MatM<T> mm(m.data(), cout_, hw);
        mm.noalias() = km.transpose() * xm;
        for (int64_t co = 0; co < cout_; ++co) {
          const T* src = m.data() + co * hw;
          T* yc = y.data() + ((n * cout_ + co) * ho) * wo;
          T bias = b_[co];
          for (int64_t i = 0; i < h; ++i) {
            T* dst = yc + (2 * i + di) * wo + dj;
            const T* s = src + i * w;
            for (int64_t j = 0; j < w; ++j) dst[2 * j] = s[j] + bias;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int64_t batch = x_.dim(0), h = x_.dim(2), w = x_.dim(3), hw = h * w;
    const int64_t ho = 2 * h, wo = 2 * w;
    Tensor<T> dx({batch, cin_, h, w});
    std::vector<Tensor<T>> taps = unpack_taps(w_);
    std::vector<Tensor<T>> gtaps(4, Tensor<T>({cin_, cout_}));
    Tensor<T> g({cout_, hw});
    for (int64_t n = 0; n < batch; ++n) {
      MatC<T> xm(x_.data() + n * cin_ * hw, cin_, hw);
      MatM<T> dxm(dx.data() + n * cin_ * hw, cin_, hw);
      for (int64_t t = 0; t < 4; ++t) {
        const int64_t di = t / 2, dj = t % 2;
        // gather the tap's output positions
        for (int64_t co = 0; co < cout_; ++co) {
          T* dst = g.data() + co * hw;
          const T* yc = dy.data() + ((n * cout_ + co) * ho) * wo;
          for (int64_t i = 0; i < h; ++i) {
            const T* src = yc + (2 * i + di) * wo + dj;
            T* d = dst + i * w;
            for (int64_t j = 0; j < w; ++j) d[j] = src[2 * j];
          }
        }
        MatC<T> gm(g.data(), cout_, hw);
        MatC<T> km(taps[t].data(), cin_, cout_);
        if (t == 0)
          dxm.noalias() = km * gm;
        else
          dxm.noalias() += km * gm;
        MatM<T> gk(gtaps[t].data(), cin_, cout_);
        gk.noalias() += xm * gm.transpose();
        for (int64_t co = 0; co < cout_; ++co)
          gb_[co] += ordered_sum(g.data() + co * hw, hw);
      }
    }
    pack_taps(gtaps, gw_);
    return dx;
  }

  void for_each_param(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", w_);
    fn(prefix + ".b", b_);
  }
  void for_each_grad(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".w", gw_);
    fn(prefix + ".b", gb_);
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }

 private:
  std::vector<Tensor<T>> unpack_taps(const Tensor<T>& w) const {
    std::vector<Tensor<T>> taps(4, Tensor<T>({cin_, cout_}));
    for (int64_t ci = 0; ci < cin_; ++ci)
      for (int64_t co = 0; co < cout_; ++co)
        for (int64_t t = 0; t < 4; ++t)
          taps[t][ci * cout_ + co] = w[((ci * cout_ + co) * 2 + t / 2) * 2 + t % 2];
    return taps;
  }

  void pack_taps(const std::vector<Tensor<T>>& taps, Tensor<T>& gw) const {
    for (int64_t ci = 0; ci < cin_; ++ci)
      for (int64_t co = 0; co < cout_; ++co)
        for (int64_t t = 0; t < 4; ++t)
          gw[((ci * cout_ + co) * 2 + t / 2) * 2 + t % 2] += taps[t][ci * cout_ + co];
  }

  int64_t cin_, cout_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// MaxPool2d: 2x2 window, stride 2. Backward routes the gradient to the
// argmax; ties break to the first index in row-major window order.
// ---------------------------------------------------------------------------
template <typename T>
class MaxPool2d {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    require(x.rank() == 4, ErrorKind::Invalid, "maxpool2d: rank-4 input required");
    const int64_t h = x.dim(2), w = x.dim(3);
    require(h % 2 == 0 && w % 2 == 0, ErrorKind::Invalid,
            "maxpool2d: H and W must be even, got " + x.shape_string());
    const int64_t batch = x.dim(0), c = x.dim(1), ho = h / 2, wo = w / 2;
    in_shape_ = x.shape();
    Tensor<T> y({batch, c, ho, wo});
    argmax_.assign(static_cast<size_t>(batch * c * ho * wo), 0);
    int64_t o = 0;
    for (int64_t nc = 0; nc < batch * c; ++nc) {
      const T* xc = x.data() + nc * h * w;
      for (int64_t i = 0; i < ho; ++i) {
        for (int64_t j = 0; j < wo; ++j, ++o) {
          int64_t base = 2 * i * w + 2 * j;
          int64_t best = base;
          T val = xc[base];
          const int64_t cand[3] = {base + 1, base + w, base + w + 1};
          for (int64_t k : cand) {
            if (xc[k] > val) {
              val = xc[k];
              best = k;
            }
          }
          y[o] = val;
          argmax_[static_cast<size_t>(o)] = static_cast<int32_t>(best);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    const int64_t h = in_shape_[2], w = in_shape_[3];
    const int64_t ho = h / 2, wo = w / 2;
    const int64_t nc_total = in_shape_[0] * in_shape_[1];
    int64_t o = 0;
    for (int64_t nc = 0; nc < nc_total; ++nc) {
      T* dxc = dx.data() + nc * h * w;
      for (int64_t k = 0; k < ho * wo; ++k, ++o)
        dxc[argmax_[static_cast<size_t>(o)]] += dy[o];
    }
    return dx;
  }

 private:
  std::vector<int64_t> in_shape_;
  std::vector<int32_t> argmax_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d. Train mode normalizes with per-channel batch statistics
// (biased variance) and updates running stats with momentum 0.1; eval mode
// normalizes with the running stats.
// ---------------------------------------------------------------------------
template <typename T>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int64_t channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum),
        gamma_({channels}), ggamma_({channels}),
        beta_({channels}), gbeta_({channels}),
        running_mean_({channels}), running_var_({channels}),
        inv_std_({channels}) {
    gamma_.fill(T(1));
    running_var_.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == c_, ErrorKind::Invalid,
            "batchnorm2d: input shape " + x.shape_string() +
                " does not match channels " + std::to_string(c_));
    const int64_t batch = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    const int64_t n = batch * hw;
    mode_ = mode;
    ensure_shape(xhat_, x.shape());
    Tensor<T> y(x.shape());
    for (int64_t c = 0; c < c_; ++c) {
      double mean, var;
      if (mode == Mode::kTrain) {
        double s = 0.0, s2 = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
          const T* p = x.data() + (b * c_ + c) * hw;
          for (int64_t k = 0; k < hw; ++k) {
            s += p[k];
            s2 += static_cast<double>(p[k]) * p[k];
          }
        }
        mean = s / n;
        var = s2 / n - mean * mean;
        if (var < 0) var = 0;  // guard fp cancellation
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] +
                                          momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] +
                                         momentum_ * var);
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const T istd = static_cast<T>(1.0 / std::sqrt(var + eps_));
      inv_std_[c] = istd;
      const T m = static_cast<T>(mean), g = gamma_[c], bt = beta_[c];
      for (int64_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * c_ + c) * hw;
        T* xh = xhat_.data() + (b * c_ + c) * hw;
        T* yo = y.data() + (b * c_ + c) * hw;
        for (int64_t k = 0; k < hw; ++k) {
          xh[k] = (p[k] - m) * istd;
          yo[k] = g * xh[k] + bt;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int64_t batch = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
    const int64_t n = batch * hw;
    Tensor<T> dx(dy.shape());
    for (int64_t c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const T* d = dy.data() + (b * c_ + c) * hw;
        const T* xh = xhat_.data() + (b * c_ + c) * hw;
        for (int64_t k = 0; k < hw; ++k) {
          sum_dy += d[k];
          sum_dy_xh += static_cast<double>(d[k]) * xh[k];
        }
      }
      ggamma_[c] += static_cast<T>(sum_dy_xh);
      gbeta_[c] += static_cast<T>(sum_dy);
      const T g_istd = gamma_[c] * inv_std_[c];
      if (mode_ == Mode::kTrain) {
        const T mean_dy = static_cast<T>(sum_dy / n);
        const T mean_dy_xh = static_cast<T>(sum_dy_xh / n);
        for (int64_t b = 0; b < batch; ++b) {
          const T* d = dy.data() + (b * c_ + c) * hw;
          const T* xh = xhat_.data() + (b * c_ + c) * hw;
          T* o = dx.data() + (b * c_ + c) * hw;
          for (int64_t k = 0; k < hw; ++k)
            o[k] = g_istd * (d[k] - mean_dy - xh[k] * mean_dy_xh);
        }
      } else {
        for (int64_t b = 0; b < batch; ++b) {
          const T* d = dy.data() + (b * c_ + c) * hw;
          T* o = dx.data() + (b * c_ + c) * hw;
          for (int64_t k = 0; k < hw; ++k) o[k] = g_istd * d[k];
        }
      }
    }
    return dx;
  }

  void for_each_param(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".gamma", gamma_);
    fn(prefix + ".beta", beta_);
  }
  void for_each_grad(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".gamma", ggamma_);
    fn(prefix + ".beta", gbeta_);
  }
  void for_each_state(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".running_mean", running_mean_);
    fn(prefix + ".running_var", running_var_);
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  int64_t c_;
  double eps_, momentum_;
  Tensor<T> gamma_, ggamma_, beta_, gbeta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> inv_std_, xhat_;
  Mode mode_ = Mode::kTrain;
};

// ---------------------------------------------------------------------------
// ReLU / Sigmoid
// ---------------------------------------------------------------------------
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    mask_.assign(static_cast<size_t>(x.size()), 0);
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[static_cast<size_t>(i)] = 1;
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.size(); ++i)
      dx[i] = mask_[static_cast<size_t>(i)] ? dy[i] : T(0);
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

template <typename T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.shape());
    for (int64_t i = 0; i < x.size(); ++i)
      y_[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// Dropout: zeroes entries with probability p in train mode and scales the
// survivors by 1/(1-p); identity in eval mode.
// ---------------------------------------------------------------------------
template <typename T>
class Dropout {
 public:
  explicit Dropout(double p) : p_(p) {
    require(p >= 0.0 && p < 1.0, ErrorKind::Invalid,
            "dropout: p must be in [0, 1), got " + std::to_string(p));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) {
    if (mode == Mode::kEval || p_ == 0.0) {
      active_ = false;
      return x;
    }
    require(rng != nullptr, ErrorKind::Invalid, "dropout: train mode needs an rng");
    active_ = true;
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    mask_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
      mask_[i] = rng->uniform() < p_ ? T(0) : scale;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (!active_) return dy;
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
    return dx;
  }

 private:
  double p_;
  bool active_ = false;
  Tensor<T> mask_;
};

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// softmax over the last axis, with max subtraction
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const int64_t d = x.dim(x.rank() - 1);
  const int64_t rows = x.size() / d;
  Tensor<T> y(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T* yr = y.data() + r * d;
    T mx = xr[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    double z = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      double e = std::exp(static_cast<double>(xr[i] - mx));
      yr[i] = static_cast<T>(e);
      z += e;
    }
    for (int64_t i = 0; i < d; ++i) yr[i] = static_cast<T>(yr[i] / z);
  }
  return y;
}

// dx for softmax given its output y: dx = y .* (dy - rowsum(dy .* y))
template <typename T>
Tensor<T> softmax_backward_lastdim(const Tensor<T>& y, const Tensor<T>& dy) {
  const int64_t d = y.dim(y.rank() - 1);
  const int64_t rows = y.size() / d;
  Tensor<T> dx(y.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* yr = y.data() + r * d;
    const T* dr = dy.data() + r * d;
    T* o = dx.data() + r * d;
    double dot = 0.0;
    for (int64_t i = 0; i < d; ++i) dot += static_cast<double>(dr[i]) * yr[i];
    for (int64_t i = 0; i < d; ++i)
      o[i] = yr[i] * (dr[i] - static_cast<T>(dot));
  }
  return dx;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, uint64_t seed) {
  Dropout<T> layer(p);
  Rng rng(seed);
  return layer.forward(x, mode, &rng);
}

}  // namespace tfd::nn
