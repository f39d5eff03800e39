#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tfd/error.hpp"
#include "tfd/nn/layers.hpp"
#include "tfd/nn/losses.hpp"
#include "tfd/nn/optim.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"

namespace tfd::vae {

using nn::Mode;

// ---------------------------------------------------------------------------
// Configuration. Defaults give the 64x64 model: encoder widths [16,32,64,128]
// halve the image four times to 128x4x4 (flatten 2048), latent dimension 64.
// Down-scaled configurations (for gradient checks) are the same structure.
// ---------------------------------------------------------------------------
struct VaeConfig {
  int64_t image_size = 64;
  std::vector<int64_t> widths = {16, 32, 64, 128};
  int64_t latent_dim = 64;
};

struct VaeHyper {
  double alpha = 1.0;  // KL weight
  double lr = 0.001;
  int64_t batch_size = 32;
  int64_t max_epochs = 20;
  int64_t patience = 5;  // consecutive non-improving epochs tolerated
};

// ---------------------------------------------------------------------------
// Convolutional VAE. Encoder: per block, (conv3x3 + batchnorm + ReLU) twice
// then 2x2 maxpool; two linear heads produce mu and logvar. Decoder: linear
// back to the flatten size, then per block a 2x2/stride-2 transposed conv
// (upsample) and a 3x3 conv (refine), each with batchnorm + ReLU; a final
// 3x3 conv to one channel plus sigmoid yields the reconstruction.
// ---------------------------------------------------------------------------
template <typename T>
class Vae {
 public:
  struct Encoding {
    Tensor<T> mu, logvar;                   // each [B, latent]
    std::vector<Tensor<T>> block_features;  // post-pool output per block
  };

  explicit Vae(VaeConfig cfg = {})
      : cfg_(validated(std::move(cfg))),
        mu_head_(flatten_of(cfg_), cfg_.latent_dim),
        logvar_head_(flatten_of(cfg_), cfg_.latent_dim),
        dec_fc_(cfg_.latent_dim, flatten_of(cfg_)),
        out_conv_(cfg_.widths.front(), 1) {
    const auto& w = cfg_.widths;
    const size_t nb = w.size();
    enc_.reserve(nb);
    for (size_t b = 0; b < nb; ++b) {
      const int64_t cin = b == 0 ? 1 : w[b - 1];
      enc_.push_back(EncBlock{nn::Conv2d<T>(cin, w[b]), nn::BatchNorm2d<T>(w[b]),
                              nn::ReLU<T>{}, nn::Conv2d<T>(w[b], w[b]),
                              nn::BatchNorm2d<T>(w[b]), nn::ReLU<T>{},
                              nn::MaxPool2d<T>{}});
    }
    dec_.reserve(nb);
    for (size_t b = 0; b < nb; ++b) {
      const int64_t cin = b == 0 ? w[nb - 1] : w[nb - 1 - b];
      const int64_t cout = b + 1 < nb ? w[nb - 2 - b] : w[0];
      dec_.push_back(DecBlock{nn::ConvTranspose2d<T>(cin, cout),
                              nn::BatchNorm2d<T>(cout), nn::ReLU<T>{},
                              nn::Conv2d<T>(cout, cout), nn::BatchNorm2d<T>(cout),
                              nn::ReLU<T>{}});
    }
  }

  void init_params(Rng& rng) {
    for (auto& b : enc_) {
      b.conv1.init_params(rng);
      b.conv2.init_params(rng);
    }
    mu_head_.init_params(rng);
    logvar_head_.init_params(rng);
    dec_fc_.init_params(rng);
    for (auto& b : dec_) {
      b.tconv.init_params(rng);
      b.conv.init_params(rng);
    }
    out_conv_.init_params(rng);
  }

  Encoding encode(const Tensor<T>& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == cfg_.image_size &&
                x.dim(3) == cfg_.image_size,
            ErrorKind::Invalid,
            "vae encode: expected [B,1," + std::to_string(cfg_.image_size) + "," +
                std::to_string(cfg_.image_size) + "], got " + x.shape_string());
    batch_ = x.dim(0);
    Encoding out;
    Tensor<T> h = x;
    for (auto& b : enc_) {
      h = b.relu1.forward(b.bn1.forward(b.conv1.forward(h), mode));
      h = b.relu2.forward(b.bn2.forward(b.conv2.forward(h), mode));
      h = b.pool.forward(h);
      out.block_features.push_back(h);
    }
    Tensor<T> flat = h.reshaped({batch_, flatten_of(cfg_)});
    out.mu = mu_head_.forward(flat);
    out.logvar = logvar_head_.forward(flat);
    return out;
  }

  Tensor<T> decode(const Tensor<T>& z, Mode mode) {
    require(z.rank() == 2 && z.dim(1) == cfg_.latent_dim, ErrorKind::Invalid,
            "vae decode: expected [B," + std::to_string(cfg_.latent_dim) +
                "], got " + z.shape_string());
    const int64_t s0 = final_spatial(cfg_);
    Tensor<T> h = dec_fc_.forward(z);
    h = h.reshaped({z.dim(0), cfg_.widths.back(), s0, s0});
    for (auto& b : dec_) {
      h = b.relu1.forward(b.bn1.forward(b.tconv.forward(h), mode));
      h = b.relu2.forward(b.bn2.forward(b.conv.forward(h), mode));
    }
    return out_sig_.forward(out_conv_.forward(h));
  }

  // Backward through the decoder; returns dLoss/dz. Valid after decode().
  Tensor<T> backward_decode(const Tensor<T>& dxhat) {
    Tensor<T> d = out_conv_.backward(out_sig_.backward(dxhat));
    for (auto it = dec_.rbegin(); it != dec_.rend(); ++it) {
      d = it->conv.backward(it->bn2.backward(it->relu2.backward(d)));
      d = it->tconv.backward(it->bn1.backward(it->relu1.backward(d)));
    }
    d = d.reshaped({d.dim(0), flatten_of(cfg_)});
    return dec_fc_.backward(d);
  }

  // Backward through the heads and encoder. Valid after encode().
  void backward_encode(const Tensor<T>& dmu, const Tensor<T>& dlogvar) {
    Tensor<T> dflat = mu_head_.backward(dmu);
    Tensor<T> dflat2 = logvar_head_.backward(dlogvar);
    for (int64_t i = 0; i < dflat.size(); ++i) dflat[i] += dflat2[i];
    const int64_t s0 = final_spatial(cfg_);
    Tensor<T> d = dflat.reshaped({batch_, cfg_.widths.back(), s0, s0});
    for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) {
      d = it->pool.backward(d);
      d = it->conv2.backward(it->bn2.backward(it->relu2.backward(d)));
      d = it->conv1.backward(it->bn1.backward(it->relu1.backward(d)));
    }
  }

  void for_each_param(const nn::ParamVisitor<T>& fn) { visit(fn, Kind::kParam); }
  void for_each_grad(const nn::ParamVisitor<T>& fn) { visit(fn, Kind::kGrad); }
  void for_each_state(const nn::ParamVisitor<T>& fn) { visit(fn, Kind::kState); }

  void register_params(nn::ParamStore<T>& store) {
    std::vector<std::pair<std::string, Tensor<T>*>> vals, grads;
    for_each_param([&](const std::string& n, Tensor<T>& t) { vals.emplace_back(n, &t); });
    for_each_grad([&](const std::string& n, Tensor<T>& t) { grads.emplace_back(n, &t); });
    require(vals.size() == grads.size(), ErrorKind::Internal,
            "vae: param/grad visitor mismatch");
    for (size_t i = 0; i < vals.size(); ++i) {
      require(vals[i].first == grads[i].first, ErrorKind::Internal,
              "vae: param/grad name mismatch at '" + vals[i].first + "'");
      store.add(vals[i].first, vals[i].second, grads[i].second);
    }
  }

  // Named copies of all parameters and batchnorm running statistics.
  std::map<std::string, Tensor<T>> state_dict() {
    std::map<std::string, Tensor<T>> sd;
    auto grab = [&](const std::string& n, Tensor<T>& t) { sd.emplace(n, t); };
    for_each_param(grab);
    for_each_state(grab);
    return sd;
  }

  void load_state_dict(const std::map<std::string, Tensor<T>>& sd) {
    size_t used = 0;
    auto put = [&](const std::string& n, Tensor<T>& t) {
      auto it = sd.find(n);
      require(it != sd.end(), ErrorKind::Invalid, "vae state: missing '" + n + "'");
      require(it->second.same_shape(t), ErrorKind::Invalid,
              "vae state: shape mismatch for '" + n + "'");
      t = it->second;
      ++used;
    };
    for_each_param(put);
    for_each_state(put);
    require(used == sd.size(), ErrorKind::Invalid,
            "vae state: dictionary has entries this model does not use");
  }

  const VaeConfig& config() const { return cfg_; }
  int64_t flatten_dim() const { return flatten_of(cfg_); }

 private:
  struct EncBlock {
    nn::Conv2d<T> conv1;
    nn::BatchNorm2d<T> bn1;
    nn::ReLU<T> relu1;
    nn::Conv2d<T> conv2;
    nn::BatchNorm2d<T> bn2;
    nn::ReLU<T> relu2;
    nn::MaxPool2d<T> pool;
  };
  struct DecBlock {
    nn::ConvTranspose2d<T> tconv;
    nn::BatchNorm2d<T> bn1;
    nn::ReLU<T> relu1;
    nn::Conv2d<T> conv;
    nn::BatchNorm2d<T> bn2;
    nn::ReLU<T> relu2;
  };

  enum class Kind { kParam, kGrad, kState };

  void visit(const nn::ParamVisitor<T>& fn, Kind kind) {
    auto conv = [&](nn::Conv2d<T>& l, const std::string& p) {
      if (kind == Kind::kParam) l.for_each_param(p, fn);
      if (kind == Kind::kGrad) l.for_each_grad(p, fn);
    };
    auto tconv = [&](nn::ConvTranspose2d<T>& l, const std::string& p) {
      if (kind == Kind::kParam) l.for_each_param(p, fn);
      if (kind == Kind::kGrad) l.for_each_grad(p, fn);
    };
    auto lin = [&](nn::Linear<T>& l, const std::string& p) {
      if (kind == Kind::kParam) l.for_each_param(p, fn);
      if (kind == Kind::kGrad) l.for_each_grad(p, fn);
    };
    auto bn = [&](nn::BatchNorm2d<T>& l, const std::string& p) {
      if (kind == Kind::kParam) l.for_each_param(p, fn);
      if (kind == Kind::kGrad) l.for_each_grad(p, fn);
      if (kind == Kind::kState) l.for_each_state(p, fn);
    };
    for (size_t b = 0; b < enc_.size(); ++b) {
      const std::string p = "enc" + std::to_string(b + 1);
      conv(enc_[b].conv1, p + ".conv1");
      bn(enc_[b].bn1, p + ".bn1");
      conv(enc_[b].conv2, p + ".conv2");
      bn(enc_[b].bn2, p + ".bn2");
    }
    lin(mu_head_, "mu_head");
    lin(logvar_head_, "logvar_head");
    lin(dec_fc_, "dec.fc");
    for (size_t b = 0; b < dec_.size(); ++b) {
      const std::string p = "dec" + std::to_string(b + 1);
      tconv(dec_[b].tconv, p + ".tconv");
      bn(dec_[b].bn1, p + ".bn1");
      conv(dec_[b].conv, p + ".conv");
      bn(dec_[b].bn2, p + ".bn2");
    }
    conv(out_conv_, "out.conv");
  }

  static VaeConfig validated(VaeConfig cfg) {
    require(!cfg.widths.empty(), ErrorKind::Config, "vae: widths must be non-empty");
    for (int64_t w : cfg.widths)
      require(w >= 1, ErrorKind::Config, "vae: widths must be positive");
    const int64_t halvings = int64_t{1} << cfg.widths.size();
    require(cfg.image_size >= halvings && cfg.image_size % halvings == 0,
            ErrorKind::Config,
            "vae: image_size " + std::to_string(cfg.image_size) +
                " is not divisible by 2^" + std::to_string(cfg.widths.size()));
    require(cfg.latent_dim >= 1, ErrorKind::Config, "vae: latent_dim must be >= 1");
    return cfg;
  }
  static int64_t final_spatial(const VaeConfig& c) {
    return c.image_size >> c.widths.size();
  }
  static int64_t flatten_of(const VaeConfig& c) {
    return c.widths.back() * final_spatial(c) * final_spatial(c);
  }

  VaeConfig cfg_;
  std::vector<EncBlock> enc_;
  nn::Linear<T> mu_head_, logvar_head_;
  nn::Linear<T> dec_fc_;
  std::vector<DecBlock> dec_;
  nn::Conv2d<T> out_conv_;
  nn::Sigmoid<T> out_sig_;
  int64_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// Reparameterization: z = mu + exp(logvar/2) * eps.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar,
                         const Tensor<T>& eps) {
  require(mu.same_shape(logvar) && mu.same_shape(eps), ErrorKind::Invalid,
          "reparameterize: mu/logvar/eps shapes differ");
  require(mu.all_finite() && logvar.all_finite(), ErrorKind::Invalid,
          "reparameterize: non-finite mu or logvar");
  Tensor<T> z(mu.shape());
  for (int64_t i = 0; i < z.size(); ++i)
    z[i] = mu[i] + static_cast<T>(std::exp(static_cast<double>(logvar[i]) / 2.0)) * eps[i];
  return z;
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, Rng& rng) {
  Tensor<T> eps(mu.shape());
  for (int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng.normal());
  return reparameterize(mu, logvar, eps);
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, uint64_t seed) {
  Rng rng(seed);
  return reparameterize(mu, logvar, rng);
}

// ---------------------------------------------------------------------------
// Loss: pixel MSE plus alpha times the closed-form Gaussian KL divergence,
// KL = mean over the batch of -1/2 * sum_d (1 + logvar - mu^2 - exp(logvar)).
// ---------------------------------------------------------------------------
struct VaeLossParts {
  double total = 0.0;
  double mse = 0.0;
  double kl = 0.0;
};

template <typename T>
VaeLossParts vae_loss(const Tensor<T>& x, const Tensor<T>& xhat, const Tensor<T>& mu,
                      const Tensor<T>& logvar, double alpha) {
  require(x.same_shape(xhat), ErrorKind::Invalid, "vae_loss: x/xhat shapes differ");
  require(mu.same_shape(logvar), ErrorKind::Invalid,
          "vae_loss: mu/logvar shapes differ");
  VaeLossParts parts;
  parts.mse = nn::mse(xhat, x);
  double acc = 0.0;
  for (int64_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i], lv = logvar[i];
    acc += 1.0 + lv - m * m - std::exp(lv);
  }
  parts.kl = -0.5 * acc / static_cast<double>(mu.dim(0));
  parts.total = parts.mse + alpha * parts.kl;
  return parts;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------
struct VaeEpochLog {
  int64_t epoch = 0;      // 0 is the untrained baseline (validation only)
  double train_loss = 0;  // NaN for epoch 0
  double val_loss = 0;
};

template <typename T>
struct VaeTrainResult {
  std::map<std::string, Tensor<T>> best_state;  // snapshot at minimum val loss
  int64_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<VaeEpochLog> history;
  int64_t epochs_run = 0;
};

// Copies the rows order[start .. start+count) into a fresh batch tensor.
template <typename T>
Tensor<T> gather_images(const Tensor<T>& images, const std::vector<int64_t>& order,
                        int64_t start, int64_t count) {
  const int64_t item = images.size() / images.dim(0);
  Tensor<T> out({count, images.dim(1), images.dim(2), images.dim(3)});
  for (int64_t i = 0; i < count; ++i) {
    const T* src = images.data() + order[static_cast<size_t>(start + i)] * item;
    std::copy(src, src + item, out.data() + i * item);
  }
  return out;
}

// Deterministic whole-dataset loss in eval mode with z = mu (no sampling).
// Accumulates squared error and KL over items so the result is independent
// of the batch size. Optionally reports the MSE part alone.
template <typename T>
double eval_vae_loss(Vae<T>& model, const Tensor<T>& images, int64_t batch_size,
                     double alpha, double* out_mse = nullptr) {
  const int64_t n = images.dim(0);
  const int64_t item = images.size() / n;
  double sse = 0.0, kl_sum = 0.0;
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t count = std::min(batch_size, n - start);
    Tensor<T> xb = gather_images(images, order, start, count);
    auto enc = model.encode(xb, Mode::kEval);
    Tensor<T> xhat = model.decode(enc.mu, Mode::kEval);
    for (int64_t i = 0; i < xhat.size(); ++i) {
      const double d = static_cast<double>(xhat[i]) - static_cast<double>(xb[i]);
      sse += d * d;
    }
    for (int64_t i = 0; i < enc.mu.size(); ++i) {
      const double m = enc.mu[i], lv = enc.logvar[i];
      kl_sum += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
  }
  const double mse = sse / static_cast<double>(n * item);
  if (out_mse) *out_mse = mse;
  return mse + alpha * kl_sum / static_cast<double>(n);
}

// Adam on MSE + alpha*KL with per-epoch validation; stops once validation
// loss has failed to improve for more than `patience` consecutive epochs and
// restores the parameters of the best epoch. `on_epoch` fires after every
// history entry, including the epoch-0 untrained baseline.
template <typename T>
VaeTrainResult<T> train_vae(Vae<T>& model, const Tensor<T>& train_images,
                            const Tensor<T>& val_images, const VaeHyper& hyper,
                            uint64_t seed,
                            const std::function<void(const VaeEpochLog&)>& on_epoch = {}) {
  require(train_images.rank() == 4 && train_images.dim(0) > 0, ErrorKind::Invalid,
          "train_vae: empty training set");
  require(val_images.rank() == 4 && val_images.dim(0) > 0, ErrorKind::Invalid,
          "train_vae: empty validation set");
  require(hyper.alpha >= 0.0, ErrorKind::Config, "train_vae: alpha must be >= 0");
  require(hyper.lr > 0.0, ErrorKind::Config, "train_vae: lr must be > 0");
  require(hyper.batch_size >= 1 && hyper.max_epochs >= 1 && hyper.patience >= 0,
          ErrorKind::Config, "train_vae: batch_size/max_epochs/patience out of range");

  nn::ParamStore<T> store;
  model.register_params(store);
  Rng rng(seed);

  const int64_t n = train_images.dim(0);
  const int64_t latent = model.config().latent_dim;
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  VaeTrainResult<T> res;
  const double val0 = eval_vae_loss(model, val_images, hyper.batch_size, hyper.alpha);
  res.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), val0});
  if (on_epoch) on_epoch(res.history.back());

  double best = std::numeric_limits<double>::infinity();
  int64_t stall = 0;
  for (int64_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (int64_t start = 0; start < n; start += hyper.batch_size) {
      const int64_t count = std::min(hyper.batch_size, n - start);
      Tensor<T> xb = gather_images(train_images, order, start, count);

      auto enc = model.encode(xb, Mode::kTrain);
      Tensor<T> eps({count, latent});
      for (int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng.normal());
      Tensor<T> z = reparameterize(enc.mu, enc.logvar, eps);
      Tensor<T> xhat = model.decode(z, Mode::kTrain);

      VaeLossParts parts = vae_loss(xb, xhat, enc.mu, enc.logvar, hyper.alpha);
      if (!std::isfinite(parts.total))
        fail(ErrorKind::Internal,
             "train_vae: non-finite loss at epoch " + std::to_string(epoch) +
                 ", batch offset " + std::to_string(start));
      loss_sum += parts.total * static_cast<double>(count);

      store.zero_grads();
      Tensor<T> dxhat = nn::mse_backward(xhat, xb);
      Tensor<T> dz = model.backward_decode(dxhat);
      Tensor<T> dmu(enc.mu.shape()), dlv(enc.logvar.shape());
      const double inv_b = 1.0 / static_cast<double>(count);
      for (int64_t i = 0; i < dmu.size(); ++i) {
        const double m = enc.mu[i], lv = enc.logvar[i];
        dmu[i] = dz[i] + static_cast<T>(hyper.alpha * m * inv_b);
        dlv[i] = static_cast<T>(static_cast<double>(dz[i]) * eps[i] * 0.5 *
                                    std::exp(lv / 2.0) +
                                hyper.alpha * (std::exp(lv) - 1.0) * 0.5 * inv_b);
      }
      model.backward_encode(dmu, dlv);
      nn::adam_step(store, hyper.lr);
    }

    const double train_loss = loss_sum / static_cast<double>(n);
    const double val = eval_vae_loss(model, val_images, hyper.batch_size, hyper.alpha);
    res.history.push_back({epoch, train_loss, val});
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(res.history.back());
    if (val < best) {
      best = val;
      res.best_epoch = epoch;
      res.best_val_loss = val;
      res.best_state = model.state_dict();
      stall = 0;
    } else if (++stall > hyper.patience) {
      break;
    }
  }
  model.load_state_dict(res.best_state);
  return res;
}

}  // namespace tfd::vae
