#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tfd/error.hpp"
#include "tfd/nn/layers.hpp"
#include "tfd/nn/losses.hpp"
#include "tfd/nn/optim.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"
#include "tfd/vae.hpp"

// Fault classifier over the frozen twin encoders. Each sample contributes
// the flattened post-pool output of every encoder block from both models;
// the classifier projects each of those vectors to a common width, stacks
// them as rows, optionally pools the rows with single-head scaled
// dot-product self-attention, and feeds the flattened stack to a two-layer
// MLP that scores normal vs faulty.

namespace tfd::clf {

using nn::Mode;

// Label convention everywhere: 0 = normal, 1 = faulty. Faulty is the
// positive class for detection metrics.
inline constexpr int kFaultyClass = 1;

// Which encoder features the head consumes, and whether attention runs:
// kP / kN use the four rows of one encoder, kPN both without attention,
// kPNS both with attention.
enum class Variant { kP, kN, kPN, kPNS };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kP: return "p";
    case Variant::kN: return "n";
    case Variant::kPN: return "pn";
    case Variant::kPNS: return "pns";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "p") return Variant::kP;
  if (name == "n") return Variant::kN;
  if (name == "pn") return Variant::kPN;
  if (name == "pns") return Variant::kPNS;
  fail(ErrorKind::Invalid,
       "unknown classifier variant '" + name + "' (expected p, n, pn or pns)");
}

struct ClassifierConfig {
  Variant variant = Variant::kPNS;
  // Flattened feature length of each encoder block, shallow to deep, for
  // one encoder; both encoders must share this geometry. Defaults match the
  // 64x64 encoder with widths {16, 32, 64, 128}.
  std::vector<int64_t> block_dims{16384, 8192, 4096, 2048};
  int64_t proj_dim = 1024;
  int64_t hidden_dim = 256;
  double dropout_p = 0.5;
};

// Flattened block feature lengths of an encoder, shallow to deep.
inline std::vector<int64_t> block_dims_for(const vae::VaeConfig& cfg) {
  std::vector<int64_t> dims;
  dims.reserve(cfg.widths.size());
  int64_t side = cfg.image_size;
  for (int64_t w : cfg.widths) {
    side /= 2;
    dims.push_back(w * side * side);
  }
  return dims;
}

// ---------------------------------------------------------------------------
// FeatureBank: encoder features for a whole dataset, extracted once since
// the encoders stay frozen. rows[k] holds row k of every sample's stack,
// shape [num_samples, dim_k]; the first half of the rows comes from the
// positive-data encoder (shallow to deep), the second half from the
// negative-data encoder.
// ---------------------------------------------------------------------------
template <typename T>
struct FeatureBank {
  std::vector<Tensor<T>> rows;

  int64_t num_samples() const { return rows.empty() ? 0 : rows.front().dim(0); }
};

template <typename T>
FeatureBank<T> extract_features(vae::Vae<T>& pos, vae::Vae<T>& neg,
                                const Tensor<T>& images, int64_t batch_size) {
  require(images.rank() == 4 && images.dim(0) > 0, ErrorKind::Invalid,
          "feature extraction: expected a non-empty [B,1,S,S] batch, got " +
              images.shape_string());
  require(batch_size >= 1, ErrorKind::Config,
          "feature extraction: batch_size must be >= 1");
  require(pos.config().image_size == neg.config().image_size &&
              pos.config().widths == neg.config().widths,
          ErrorKind::Config, "feature extraction: encoder geometries differ");

  const int64_t n = images.dim(0);
  const std::vector<int64_t> dims = block_dims_for(pos.config());
  const size_t nb = dims.size();

  FeatureBank<T> bank;
  bank.rows.reserve(2 * nb);
  for (size_t half = 0; half < 2; ++half)
    for (int64_t d : dims) bank.rows.emplace_back(std::vector<int64_t>{n, d});

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t count = std::min(batch_size, n - start);
    Tensor<T> xb = vae::gather_images(images, order, start, count);
    auto ep = pos.encode(xb, Mode::kEval);
    auto en = neg.encode(xb, Mode::kEval);
    for (size_t half = 0; half < 2; ++half) {
      const auto& feats = half == 0 ? ep.block_features : en.block_features;
      for (size_t k = 0; k < nb; ++k) {
        const Tensor<T>& f = feats[k];
        std::memcpy(bank.rows[half * nb + k].data() + start * dims[k],
                    f.data(), sizeof(T) * static_cast<size_t>(f.size()));
      }
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------
// SelfAttention: single-head scaled dot-product attention over per-sample
// row stacks. Q = F Wq, K = F Wk, V = F Wv with no biases; the output is
// softmax(Q K^T / sqrt(d)) V with the softmax taken row-wise over the keys.
// ---------------------------------------------------------------------------
template <typename T>
class SelfAttention {
 public:
  explicit SelfAttention(int64_t dim)
      : d_(dim), wq_({dim, dim}), wk_({dim, dim}), wv_({dim, dim}),
        gwq_({dim, dim}), gwk_({dim, dim}), gwv_({dim, dim}) {
    require(dim >= 1, ErrorKind::Config, "attention: dim must be >= 1");
  }

  void init_params(Rng& rng) {
    nn::he_uniform(wq_, d_, rng);
    nn::he_uniform(wk_, d_, rng);
    nn::he_uniform(wv_, d_, rng);
  }

  // f: [B, R, d] -> [B, R, d]
  Tensor<T> forward(const Tensor<T>& f) {
    require(f.rank() == 3 && f.dim(2) == d_, ErrorKind::Invalid,
            "attention: expected [B,R," + std::to_string(d_) + "], got " +
                f.shape_string());
    const int64_t batch = f.dim(0), r = f.dim(1);
    f_ = f;
    q_ = rows_times(f, wq_);
    k_ = rows_times(f, wk_);
    v_ = rows_times(f, wv_);

    Tensor<T> scores({batch, r, r});
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_)));
    for (int64_t n = 0; n < batch; ++n) {
      nn::MatC<T> qm(q_.data() + n * r * d_, r, d_);
      nn::MatC<T> km(k_.data() + n * r * d_, r, d_);
      nn::MatM<T> sm(scores.data() + n * r * r, r, r);
      sm.noalias() = qm * km.transpose();
      sm *= inv;
    }
    a_ = nn::softmax_lastdim(scores);

    Tensor<T> out({batch, r, d_});
    for (int64_t n = 0; n < batch; ++n) {
      nn::MatC<T> am(a_.data() + n * r * r, r, r);
      nn::MatC<T> vm(v_.data() + n * r * d_, r, d_);
      nn::MatM<T> om(out.data() + n * r * d_, r, d_);
      om.noalias() = am * vm;
    }
    return out;
  }

  // Returns dLoss/dF and accumulates the weight gradients.
  Tensor<T> backward(const Tensor<T>& dout) {
    const int64_t batch = f_.dim(0), r = f_.dim(1);
    Tensor<T> da({batch, r, r});
    Tensor<T> dv({batch, r, d_});
    for (int64_t n = 0; n < batch; ++n) {
      nn::MatC<T> dom(dout.data() + n * r * d_, r, d_);
      nn::MatC<T> vm(v_.data() + n * r * d_, r, d_);
      nn::MatC<T> am(a_.data() + n * r * r, r, r);
      nn::MatM<T> dam(da.data() + n * r * r, r, r);
      nn::MatM<T> dvm(dv.data() + n * r * d_, r, d_);
      dam.noalias() = dom * vm.transpose();
      dvm.noalias() = am.transpose() * dom;
    }
    Tensor<T> ds = nn::softmax_backward_lastdim(a_, da);
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_)));
    for (int64_t i = 0; i < ds.size(); ++i) ds[i] *= inv;

    Tensor<T> dq({batch, r, d_}), dk({batch, r, d_});
    for (int64_t n = 0; n < batch; ++n) {
      nn::MatC<T> dsm(ds.data() + n * r * r, r, r);
      nn::MatC<T> qm(q_.data() + n * r * d_, r, d_);
      nn::MatC<T> km(k_.data() + n * r * d_, r, d_);
      nn::MatM<T> dqm(dq.data() + n * r * d_, r, d_);
      nn::MatM<T> dkm(dk.data() + n * r * d_, r, d_);
      dqm.noalias() = dsm * km;
      dkm.noalias() = dsm.transpose() * qm;
    }

    // Weight gradients over the whole batch in one product each.
    nn::MatC<T> fm(f_.data(), batch * r, d_);
    accumulate_weight_grad(gwq_, fm, dq);
    accumulate_weight_grad(gwk_, fm, dk);
    accumulate_weight_grad(gwv_, fm, dv);

    Tensor<T> df({batch, r, d_});
    nn::MatM<T> dfm(df.data(), batch * r, d_);
    nn::MatC<T> dqm(dq.data(), batch * r, d_);
    nn::MatC<T> dkm(dk.data(), batch * r, d_);
    nn::MatC<T> dvm(dv.data(), batch * r, d_);
    nn::MatC<T> wqm(wq_.data(), d_, d_);
    nn::MatC<T> wkm(wk_.data(), d_, d_);
    nn::MatC<T> wvm(wv_.data(), d_, d_);
    dfm.noalias() = dqm * wqm.transpose();
    dfm.noalias() += dkm * wkm.transpose();
    dfm.noalias() += dvm * wvm.transpose();
    return df;
  }

  void for_each_param(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
    fn(prefix + ".wq", wq_);
    fn(prefix + ".wk", wk_);
    fn(prefix + ".wv", wv_);
  }
  void for_each_grad(const std::string& prefix, const nn::ParamVisitor<T>& fn) {
    fn(prefix + ".wq", gwq_);
    fn(prefix + ".wk", gwk_);
    fn(prefix + ".wv", gwv_);
  }

  // Attention weights of the most recent forward, [B, R, R].
  const Tensor<T>& weights() const { return a_; }

  Tensor<T>& wq() { return wq_; }
  Tensor<T>& wk() { return wk_; }
  Tensor<T>& wv() { return wv_; }

 private:
  // [B, R, d] x [d, d] as one flattened product.
  Tensor<T> rows_times(const Tensor<T>& f, const Tensor<T>& w) const {
    Tensor<T> y(f.shape());
    nn::MatC<T> fm(f.data(), f.dim(0) * f.dim(1), d_);
    nn::MatC<T> wm(w.data(), d_, d_);
    nn::MatM<T> ym(y.data(), f.dim(0) * f.dim(1), d_);
    ym.noalias() = fm * wm;
    return y;
  }

  void accumulate_weight_grad(Tensor<T>& gw, const nn::MatC<T>& fm,
                              const Tensor<T>& dproj) {
    nn::MatM<T> gm(gw.data(), d_, d_);
    nn::MatC<T> dm(dproj.data(), fm.rows(), d_);
    gm.noalias() += fm.transpose() * dm;
  }

  int64_t d_;
  Tensor<T> wq_, wk_, wv_;
  Tensor<T> gwq_, gwk_, gwv_;
  Tensor<T> f_, q_, k_, v_, a_;
};

// ---------------------------------------------------------------------------
// Classifier head. Owns one projection per consumed bank row, the optional
// attention block, and the MLP; the frozen encoders live outside, feeding
// it through a FeatureBank.
// ---------------------------------------------------------------------------
template <typename T>
class Classifier {
 public:
  explicit Classifier(ClassifierConfig cfg)
      : cfg_(validated(std::move(cfg))),
        fc1_(owned_rows(cfg_) * cfg_.proj_dim, cfg_.hidden_dim),
        fc2_(cfg_.hidden_dim, 2),
        drop_(cfg_.dropout_p) {
    const size_t nb = cfg_.block_dims.size();
    row_base_ = cfg_.variant == Variant::kN ? static_cast<int64_t>(nb) : 0;
    const int64_t owned = owned_rows(cfg_);
    proj_.reserve(static_cast<size_t>(owned));
    for (int64_t k = 0; k < owned; ++k)
      proj_.emplace_back(cfg_.block_dims[static_cast<size_t>(k) % nb],
                         cfg_.proj_dim);
    if (cfg_.variant == Variant::kPNS) attn_.emplace(cfg_.proj_dim);
  }

  void init_params(Rng& rng) {
    for (auto& p : proj_) p.init_params(rng);
    if (attn_) attn_->init_params(rng);
    fc1_.init_params(rng);
    fc2_.init_params(rng);
  }

  // Projected feature stacks [B, rows, proj_dim] for the given samples.
  Tensor<T> project(const FeatureBank<T>& bank, const std::vector<int64_t>& idx) {
    check_bank(bank, idx);
    const int64_t batch = static_cast<int64_t>(idx.size());
    const int64_t r = owned_rows(cfg_), pd = cfg_.proj_dim;
    Tensor<T> stack({batch, r, pd});
    for (int64_t k = 0; k < r; ++k) {
      const Tensor<T>& src = bank.rows[static_cast<size_t>(row_base_ + k)];
      const int64_t dim = src.dim(1);
      Tensor<T> xk({batch, dim});
      for (int64_t b = 0; b < batch; ++b)
        std::memcpy(xk.data() + b * dim, src.data() + idx[static_cast<size_t>(b)] * dim,
                    sizeof(T) * static_cast<size_t>(dim));
      Tensor<T> pk = proj_[static_cast<size_t>(k)].forward(xk);
      for (int64_t b = 0; b < batch; ++b)
        std::memcpy(stack.data() + (b * r + k) * pd, pk.data() + b * pd,
                    sizeof(T) * static_cast<size_t>(pd));
    }
    return stack;
  }

  // Logits [B, 2]. Train mode needs an rng for dropout.
  Tensor<T> forward(const FeatureBank<T>& bank, const std::vector<int64_t>& idx,
                    Mode mode, Rng* rng = nullptr) {
    Tensor<T> stack = project(bank, idx);
    if (attn_) stack = attn_->forward(stack);
    const int64_t batch = stack.dim(0);
    Tensor<T> h = stack.reshaped({batch, owned_rows(cfg_) * cfg_.proj_dim});
    h = drop_.forward(relu_.forward(fc1_.forward(h)), mode, rng);
    return fc2_.forward(h);
  }

  // Accumulates gradients for every owned parameter; the bank itself is
  // constant data, so no input gradient exists. Valid after forward(kTrain).
  void backward(const Tensor<T>& dlogits) {
    Tensor<T> d = fc1_.backward(relu_.backward(drop_.backward(fc2_.backward(dlogits))));
    const int64_t batch = d.dim(0);
    const int64_t r = owned_rows(cfg_), pd = cfg_.proj_dim;
    Tensor<T> dstack = d.reshaped({batch, r, pd});
    if (attn_) dstack = attn_->backward(dstack);
    for (int64_t k = 0; k < r; ++k) {
      Tensor<T> dk({batch, pd});
      for (int64_t b = 0; b < batch; ++b)
        std::memcpy(dk.data() + b * pd, dstack.data() + (b * r + k) * pd,
                    sizeof(T) * static_cast<size_t>(pd));
      proj_[static_cast<size_t>(k)].backward_params_only(dk);
    }
  }

  void for_each_param(const nn::ParamVisitor<T>& fn) { visit(fn, Kind::kParam); }
  void for_each_grad(const nn::ParamVisitor<T>& fn) { visit(fn, Kind::kGrad); }

  void register_params(nn::ParamStore<T>& store) {
    std::vector<std::pair<std::string, Tensor<T>*>> vals, grads;
    for_each_param([&](const std::string& n, Tensor<T>& t) { vals.emplace_back(n, &t); });
    for_each_grad([&](const std::string& n, Tensor<T>& t) { grads.emplace_back(n, &t); });
    require(vals.size() == grads.size(), ErrorKind::Internal,
            "classifier: param/grad visitor mismatch");
    for (size_t i = 0; i < vals.size(); ++i) {
      require(vals[i].first == grads[i].first, ErrorKind::Internal,
              "classifier: param/grad name mismatch at '" + vals[i].first + "'");
      store.add(vals[i].first, vals[i].second, grads[i].second);
    }
  }

  std::map<std::string, Tensor<T>> state_dict() {
    std::map<std::string, Tensor<T>> sd;
    for_each_param([&](const std::string& n, Tensor<T>& t) { sd.emplace(n, t); });
    return sd;
  }

  void load_state_dict(const std::map<std::string, Tensor<T>>& sd) {
    size_t used = 0;
    for_each_param([&](const std::string& n, Tensor<T>& t) {
      auto it = sd.find(n);
      require(it != sd.end(), ErrorKind::Invalid,
              "classifier state: missing '" + n + "'");
      require(it->second.same_shape(t), ErrorKind::Invalid,
              "classifier state: shape mismatch for '" + n + "'");
      t = it->second;
      ++used;
    });
    require(used == sd.size(), ErrorKind::Invalid,
            "classifier state: dictionary has entries this model does not use");
  }

  const ClassifierConfig& config() const { return cfg_; }
  SelfAttention<T>* attention() { return attn_ ? &*attn_ : nullptr; }
  nn::Linear<T>& projection(int64_t k) { return proj_.at(static_cast<size_t>(k)); }
  nn::Linear<T>& mlp_out() { return fc2_; }

  static int64_t owned_rows(const ClassifierConfig& cfg) {
    const auto nb = static_cast<int64_t>(cfg.block_dims.size());
    return cfg.variant == Variant::kP || cfg.variant == Variant::kN ? nb : 2 * nb;
  }

 private:
  enum class Kind { kParam, kGrad };

  static ClassifierConfig validated(ClassifierConfig cfg) {
    require(!cfg.block_dims.empty(), ErrorKind::Config,
            "classifier config: block_dims must be non-empty");
    for (int64_t d : cfg.block_dims)
      require(d >= 1, ErrorKind::Config,
              "classifier config: block dims must be positive");
    require(cfg.proj_dim >= 1 && cfg.hidden_dim >= 1, ErrorKind::Config,
            "classifier config: proj_dim and hidden_dim must be >= 1");
    require(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0, ErrorKind::Config,
            "classifier config: dropout_p must be in [0, 1)");
    return cfg;
  }

  void check_bank(const FeatureBank<T>& bank, const std::vector<int64_t>& idx) const {
    const size_t nb = cfg_.block_dims.size();
    require(bank.rows.size() == 2 * nb, ErrorKind::Invalid,
            "classifier: bank has " + std::to_string(bank.rows.size()) +
                " rows, config expects " + std::to_string(2 * nb));
    const int64_t n = bank.num_samples();
    for (size_t k = 0; k < bank.rows.size(); ++k) {
      require(bank.rows[k].rank() == 2 && bank.rows[k].dim(0) == n &&
                  bank.rows[k].dim(1) == cfg_.block_dims[k % nb],
              ErrorKind::Invalid,
              "classifier: bank row " + std::to_string(k) + " has shape " +
                  bank.rows[k].shape_string() + ", expected [" +
                  std::to_string(n) + "," +
                  std::to_string(cfg_.block_dims[k % nb]) + "]");
    }
    require(!idx.empty(), ErrorKind::Invalid, "classifier: empty sample batch");
    for (int64_t i : idx)
      require(i >= 0 && i < n, ErrorKind::Invalid,
              "classifier: sample index " + std::to_string(i) +
                  " outside bank of " + std::to_string(n));
  }

  void visit(const nn::ParamVisitor<T>& fn, Kind kind) {
    auto lin = [&](nn::Linear<T>& l, const std::string& p) {
      if (kind == Kind::kParam) l.for_each_param(p, fn);
      if (kind == Kind::kGrad) l.for_each_grad(p, fn);
    };
    // Projections are named by bank row so the checkpoint says which
    // encoder's features each one consumes.
    for (size_t k = 0; k < proj_.size(); ++k)
      lin(proj_[k], "proj" + std::to_string(row_base_ + static_cast<int64_t>(k)));
    if (attn_) {
      if (kind == Kind::kParam) attn_->for_each_param("attn", fn);
      if (kind == Kind::kGrad) attn_->for_each_grad("attn", fn);
    }
    lin(fc1_, "mlp.fc1");
    lin(fc2_, "mlp.fc2");
  }

  ClassifierConfig cfg_;
  nn::Linear<T> fc1_, fc2_;
  nn::Dropout<T> drop_;
  nn::ReLU<T> relu_;
  std::vector<nn::Linear<T>> proj_;
  std::optional<SelfAttention<T>> attn_;
  int64_t row_base_ = 0;
};

// softmax(logits)[faulty] per sample.
template <typename T>
std::vector<double> prob_faulty(const Tensor<T>& logits) {
  require(logits.rank() == 2 && logits.dim(1) == 2, ErrorKind::Invalid,
          "prob_faulty: expected [B,2] logits, got " + logits.shape_string());
  Tensor<T> p = nn::softmax_lastdim(logits);
  std::vector<double> out(static_cast<size_t>(p.dim(0)));
  for (int64_t b = 0; b < p.dim(0); ++b)
    out[static_cast<size_t>(b)] = static_cast<double>(p[b * 2 + kFaultyClass]);
  return out;
}

inline int argmax2(const float* row) { return row[1] > row[0] ? 1 : 0; }
inline int argmax2(const double* row) { return row[1] > row[0] ? 1 : 0; }

struct ClassifierHyper {
  double lr = 0.00001;
  int64_t batch_size = 32;
  int64_t max_epochs = 50;
};

struct ClfEpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0, train_accuracy = 0.0;
  double val_loss = 0.0, val_accuracy = 0.0;
};

template <typename T>
struct ClassifierTrainResult {
  std::map<std::string, Tensor<T>> best_state;  // snapshot at best val accuracy
  int64_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<ClfEpochLog> history;
  int64_t epochs_run = 0;
};

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

namespace detail {
inline std::vector<int64_t> identity_order(int64_t n) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  return order;
}
}  // namespace detail

// Mean cross-entropy and accuracy over the whole bank in eval mode. Sums
// are accumulated per sample and divided once, so the batch size only
// affects grouping, not the result.
template <typename T>
EvalStats eval_classifier(Classifier<T>& model, const FeatureBank<T>& bank,
                          const std::vector<int>& labels, int64_t batch_size) {
  const int64_t n = bank.num_samples();
  require(static_cast<int64_t>(labels.size()) == n, ErrorKind::Invalid,
          "classifier eval: label count does not match bank");
  require(batch_size >= 1, ErrorKind::Config,
          "classifier eval: batch_size must be >= 1");
  const std::vector<int64_t> order = detail::identity_order(n);
  double loss_sum = 0.0;
  int64_t correct = 0;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t count = std::min(batch_size, n - start);
    std::vector<int64_t> idx(order.begin() + start, order.begin() + start + count);
    Tensor<T> logits = model.forward(bank, idx, Mode::kEval);
    std::vector<int> batch_labels(labels.begin() + start,
                                  labels.begin() + start + count);
    loss_sum += nn::cross_entropy(logits, batch_labels) * static_cast<double>(count);
    for (int64_t b = 0; b < count; ++b)
      correct += argmax2(logits.data() + b * 2) == batch_labels[static_cast<size_t>(b)];
  }
  return {loss_sum / static_cast<double>(n),
          static_cast<double>(correct) / static_cast<double>(n)};
}

// Faulty-class probability for every sample, in bank order (eval mode).
template <typename T>
std::vector<double> faulty_scores(Classifier<T>& model, const FeatureBank<T>& bank,
                                  int64_t batch_size) {
  const int64_t n = bank.num_samples();
  require(batch_size >= 1, ErrorKind::Config,
          "classifier scores: batch_size must be >= 1");
  std::vector<double> scores;
  scores.reserve(static_cast<size_t>(n));
  const std::vector<int64_t> order = detail::identity_order(n);
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t count = std::min(batch_size, n - start);
    std::vector<int64_t> idx(order.begin() + start, order.begin() + start + count);
    Tensor<T> logits = model.forward(bank, idx, Mode::kEval);
    for (double p : prob_faulty(logits)) scores.push_back(p);
  }
  return scores;
}

// Adam on cross-entropy for a fixed number of epochs; keeps the parameters
// of the epoch with the best validation accuracy (earliest on ties) and
// restores them into the model before returning. The encoders are not
// touched: the model only ever sees the pre-extracted banks.
template <typename T>
ClassifierTrainResult<T> train_classifier(Classifier<T>& model,
                                          const FeatureBank<T>& train_bank,
                                          const std::vector<int>& train_labels,
                                          const FeatureBank<T>& val_bank,
                                          const std::vector<int>& val_labels,
                                          const ClassifierHyper& hyper,
                                          uint64_t seed,
                                          const std::function<void(const ClfEpochLog&)>& on_epoch = {}) {
  const int64_t n = train_bank.num_samples();
  require(n > 0 && val_bank.num_samples() > 0, ErrorKind::Invalid,
          "train_classifier: empty split");
  require(static_cast<int64_t>(train_labels.size()) == n &&
              static_cast<int64_t>(val_labels.size()) == val_bank.num_samples(),
          ErrorKind::Invalid, "train_classifier: label count does not match bank");
  require(hyper.lr > 0.0, ErrorKind::Config, "train_classifier: lr must be > 0");
  require(hyper.batch_size >= 1 && hyper.max_epochs >= 1, ErrorKind::Config,
          "train_classifier: batch_size/max_epochs out of range");
  for (int cls = 0; cls < 2; ++cls)
    require(std::find(train_labels.begin(), train_labels.end(), cls) !=
                train_labels.end(),
            ErrorKind::Invalid,
            "train_classifier: train split has no samples of class " +
                std::to_string(cls));

  nn::ParamStore<T> store;
  model.register_params(store);
  Rng rng(seed);

  ClassifierTrainResult<T> res;
  std::vector<int64_t> order = detail::identity_order(n);
  double best = -1.0;
  for (int64_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += hyper.batch_size) {
      const int64_t count = std::min(hyper.batch_size, n - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + count);
      std::vector<int> batch_labels(static_cast<size_t>(count));
      for (int64_t b = 0; b < count; ++b)
        batch_labels[static_cast<size_t>(b)] =
            train_labels[static_cast<size_t>(idx[static_cast<size_t>(b)])];

      Tensor<T> logits = model.forward(train_bank, idx, Mode::kTrain, &rng);
      const double loss = nn::cross_entropy(logits, batch_labels);
      if (!std::isfinite(loss))
        fail(ErrorKind::Internal,
             "train_classifier: non-finite loss at epoch " + std::to_string(epoch) +
                 ", batch offset " + std::to_string(start));
      loss_sum += loss * static_cast<double>(count);
      for (int64_t b = 0; b < count; ++b)
        correct += argmax2(logits.data() + b * 2) == batch_labels[static_cast<size_t>(b)];

      store.zero_grads();
      model.backward(nn::cross_entropy_backward(logits, batch_labels));
      nn::adam_step(store, hyper.lr);
    }

    EvalStats val = eval_classifier(model, val_bank, val_labels, hyper.batch_size);
    res.history.push_back({epoch, loss_sum / static_cast<double>(n),
                           static_cast<double>(correct) / static_cast<double>(n),
                           val.loss, val.accuracy});
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(res.history.back());
    if (val.accuracy > best) {
      best = val.accuracy;
      res.best_epoch = epoch;
      res.best_val_accuracy = val.accuracy;
      res.best_state = model.state_dict();
    }
  }
  model.load_state_dict(res.best_state);
  return res;
}

}  // namespace tfd::clf
