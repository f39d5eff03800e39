#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "tfd/classifier.hpp"
#include "tfd/error.hpp"
#include "tfd/nn/gradcheck.hpp"
#include "tfd/rng.hpp"
#include "tfd/tensor.hpp"
#include "tfd/vae.hpp"

using doctest::Approx;
using tfd::Rng;
using tfd::Tensor;
using tfd::clf::Classifier;
using tfd::clf::ClassifierConfig;
using tfd::clf::ClassifierHyper;
using tfd::clf::FeatureBank;
using tfd::clf::SelfAttention;
using tfd::clf::Variant;
using tfd::vae::Vae;
using tfd::vae::VaeConfig;
using Mode = tfd::nn::Mode;

namespace {

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(lo + (hi - lo) * rng.uniform());
}

// A bank of random features whose class signal is a mean shift on every
// row's first few coordinates, so a linear head can separate it.
template <typename T>
FeatureBank<T> toy_bank(const std::vector<int64_t>& dims_one_encoder, int64_t n,
                        const std::vector<int>& labels, double shift, Rng& rng) {
  FeatureBank<T> bank;
  for (size_t half = 0; half < 2; ++half) {
    for (int64_t d : dims_one_encoder) {
      Tensor<T> row({n, d});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
          double v = rng.normal() * 0.5;
          if (j < 3 && labels[static_cast<size_t>(i)] == 1) v += shift;
          row[i * d + j] = static_cast<T>(v);
        }
      bank.rows.push_back(std::move(row));
    }
  }
  return bank;
}

template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> param_grad_pairs(Classifier<T>& m) {
  std::vector<Tensor<T>*> vals, grads;
  m.for_each_param([&](const std::string&, Tensor<T>& t) { vals.push_back(&t); });
  m.for_each_grad([&](const std::string&, Tensor<T>& t) { grads.push_back(&t); });
  REQUIRE(vals.size() == grads.size());
  std::vector<std::pair<Tensor<T>*, Tensor<T>*>> out;
  for (size_t i = 0; i < vals.size(); ++i) out.emplace_back(vals[i], grads[i]);
  return out;
}

// Finite-difference check of the full head (projections, attention when the
// variant has it, dropout, MLP, cross-entropy). The dropout mask is pinned
// by reseeding the rng for every loss evaluation.
double gradcheck_classifier(Variant variant, uint64_t seed) {
  ClassifierConfig cfg;
  cfg.variant = variant;
  cfg.block_dims = {12, 8};
  cfg.proj_dim = 6;
  cfg.hidden_dim = 5;
  Classifier<double> model(cfg);
  Rng rng(seed);
  model.init_params(rng);

  const int64_t n = 3;
  std::vector<int> labels{0, 1, 1};
  FeatureBank<double> bank = toy_bank<double>(cfg.block_dims, n, labels, 0.8, rng);
  std::vector<int64_t> idx{0, 1, 2};

  auto loss = [&]() {
    Rng drop_rng(seed + 17);
    Tensor<double> logits = model.forward(bank, idx, Mode::kTrain, &drop_rng);
    return tfd::nn::cross_entropy(logits, labels);
  };
  for (auto [v, g] : param_grad_pairs(model)) {
    (void)v;
    g->set_zero();
  }
  {
    Rng drop_rng(seed + 17);
    Tensor<double> logits = model.forward(bank, idx, Mode::kTrain, &drop_rng);
    model.backward(tfd::nn::cross_entropy_backward(logits, labels));
  }
  double worst = 0.0;
  for (auto [v, g] : param_grad_pairs(model)) {
    Tensor<double> analytic = *g;
    worst = std::max(worst, tfd::nn::max_rel_error_central(loss, *v, analytic));
  }
  return worst;
}

}  // namespace

TEST_CASE("extract_features flattens every block of both encoders") {
  VaeConfig vcfg{16, {2, 3}, 4};
  Vae<float> pos(vcfg), neg(vcfg);
  Rng rng(51);
  pos.init_params(rng);
  neg.init_params(rng);

  Tensor<float> images({5, 1, 16, 16});
  fill_uniform(images, rng, 0.0, 1.0);
  auto bank = tfd::clf::extract_features(pos, neg, images, 2);

  // Geometry: dims 2*(8*8)=128 and 3*(4*4)=48, positive rows first.
  const auto dims = tfd::clf::block_dims_for(vcfg);
  REQUIRE(dims == std::vector<int64_t>{128, 48});
  REQUIRE(bank.rows.size() == 4);
  CHECK(bank.num_samples() == 5);
  for (size_t k = 0; k < 4; ++k) {
    CHECK(bank.rows[k].dim(0) == 5);
    CHECK(bank.rows[k].dim(1) == dims[k % 2]);
  }

  // Content: row k of sample i equals the flattened block output of a
  // direct single-image encode.
  for (int64_t i : {0, 4}) {
    Tensor<float> one({1, 1, 16, 16});
    std::memcpy(one.data(), images.data() + i * 256, sizeof(float) * 256);
    auto ep = pos.encode(one, Mode::kEval);
    auto en = neg.encode(one, Mode::kEval);
    for (size_t k = 0; k < 2; ++k) {
      const auto& fp = ep.block_features[k];
      const auto& fn = en.block_features[k];
      for (int64_t j = 0; j < fp.size(); ++j) {
        CHECK(bank.rows[k][i * dims[k] + j] == fp[j]);
        CHECK(bank.rows[2 + k][i * dims[k] + j] == fn[j]);
      }
    }
  }
}

TEST_CASE("extract_features leaves the encoders untouched") {
  VaeConfig vcfg{16, {2, 2}, 4};
  Vae<float> pos(vcfg), neg(vcfg);
  Rng rng(52);
  pos.init_params(rng);
  neg.init_params(rng);

  auto before_p = pos.state_dict();
  auto before_n = neg.state_dict();
  Tensor<float> images({7, 1, 16, 16});
  fill_uniform(images, rng, 0.0, 1.0);
  tfd::clf::extract_features(pos, neg, images, 3);

  for (auto* pair : {&before_p, &before_n}) {
    Vae<float>& m = pair == &before_p ? pos : neg;
    auto after = m.state_dict();
    REQUIRE(after.size() == pair->size());
    for (const auto& [name, t] : *pair) {
      const Tensor<float>& now = after.at(name);
      REQUIRE(now.size() == t.size());
      for (int64_t i = 0; i < t.size(); ++i) CHECK(now[i] == t[i]);
    }
  }
}

TEST_CASE("extract_features validation") {
  VaeConfig a{16, {2, 2}, 4};
  VaeConfig b{16, {2, 3}, 4};
  Vae<float> va(a), vb(b);
  Rng rng(53);
  va.init_params(rng);
  vb.init_params(rng);
  Tensor<float> images({2, 1, 16, 16});
  fill_uniform(images, rng, 0.0, 1.0);
  CHECK_THROWS_AS(tfd::clf::extract_features(va, vb, images, 2), tfd::Error);
  CHECK_THROWS_AS(tfd::clf::extract_features(va, va, images, 0), tfd::Error);
}

TEST_CASE("mirrored encoders and shared projections mirror the stack") {
  VaeConfig vcfg{16, {2, 2}, 4};
  Vae<float> enc(vcfg);
  Rng rng(54);
  enc.init_params(rng);
  Tensor<float> images({3, 1, 16, 16});
  fill_uniform(images, rng, 0.0, 1.0);
  // Same model on both sides: rows 0..1 must equal rows 2..3.
  auto bank = tfd::clf::extract_features(enc, enc, images, 3);
  for (size_t k = 0; k < 2; ++k)
    for (int64_t i = 0; i < bank.rows[k].size(); ++i)
      CHECK(bank.rows[k][i] == bank.rows[2 + k][i]);

  ClassifierConfig cfg;
  cfg.variant = Variant::kPN;
  cfg.block_dims = tfd::clf::block_dims_for(vcfg);
  cfg.proj_dim = 4;
  cfg.hidden_dim = 3;
  Classifier<float> model(cfg);
  model.init_params(rng);
  // Copy the positive-row projection weights onto the negative rows.
  for (int64_t k = 0; k < 2; ++k) {
    model.projection(2 + k).weight() = model.projection(k).weight();
    model.projection(2 + k).bias() = model.projection(k).bias();
  }
  Tensor<float> stack = model.project(bank, {0, 1, 2});
  REQUIRE(stack.dim(1) == 4);
  for (int64_t b = 0; b < 3; ++b)
    for (int64_t k = 0; k < 2; ++k)
      for (int64_t j = 0; j < 4; ++j)
        CHECK(stack[((b * 4) + k) * 4 + j] == stack[((b * 4) + k + 2) * 4 + j]);
}

TEST_CASE("zero projection weights reduce every stack row to its bias") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kP;
  cfg.block_dims = {10, 6};
  cfg.proj_dim = 5;
  cfg.hidden_dim = 4;
  Classifier<float> model(cfg);
  Rng rng(55);
  model.init_params(rng);
  for (int64_t k = 0; k < 2; ++k) {
    model.projection(k).weight().set_zero();
    for (int64_t j = 0; j < 5; ++j)
      model.projection(k).bias()[j] = static_cast<float>(0.1 * (k + 1) + 0.01 * j);
  }
  std::vector<int> labels{0, 1};
  FeatureBank<float> bank = toy_bank<float>(cfg.block_dims, 2, labels, 0.5, rng);
  Tensor<float> stack = model.project(bank, {0, 1});
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t k = 0; k < 2; ++k)
      for (int64_t j = 0; j < 5; ++j)
        CHECK(stack[(b * 2 + k) * 5 + j] ==
              Approx(0.1 * (k + 1) + 0.01 * j).epsilon(1e-6));
}

TEST_CASE("attention: singleton row passes its V projection through") {
  SelfAttention<double> attn(3);
  Rng rng(56);
  attn.init_params(rng);
  Tensor<double> f({2, 1, 3});
  fill_uniform(f, rng, -1.0, 1.0);
  Tensor<double> out = attn.forward(f);

  // One key: the attention weight is exactly 1 and out = f Wv.
  const Tensor<double>& a = attn.weights();
  REQUIRE(a.size() == 2);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == 1.0);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t j = 0; j < 3; ++j) {
      double want = 0.0;
      for (int64_t i = 0; i < 3; ++i) want += f[n * 3 + i] * attn.wv()[i * 3 + j];
      CHECK(out[n * 3 + j] == Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("attention: identical rows give identical output rows") {
  SelfAttention<float> attn(16);
  Rng rng(57);
  attn.init_params(rng);
  Tensor<float> f({1, 8, 16});
  for (int64_t j = 0; j < 16; ++j) f[j] = static_cast<float>(rng.uniform() - 0.5);
  for (int64_t r = 1; r < 8; ++r)
    std::memcpy(f.data() + r * 16, f.data(), sizeof(float) * 16);

  Tensor<float> out = attn.forward(f);
  const Tensor<float>& a = attn.weights();
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == 0.125f);
  for (int64_t r = 1; r < 8; ++r)
    for (int64_t j = 0; j < 16; ++j) CHECK(out[r * 16 + j] == out[j]);
}

TEST_CASE("attention matches a hand-evaluated 2x2 case") {
  // Hand case chosen so every intermediate is simple to follow: F picks out
  // rows/columns of the weight matrices.
  SelfAttention<double> attn(2);
  attn.wq() = Tensor<double>::from({2, 2}, {1.0, 0.0, 0.0, 2.0});
  attn.wk() = Tensor<double>::from({2, 2}, {0.5, 0.0, 0.0, 1.0});
  attn.wv() = Tensor<double>::from({2, 2}, {1.0, 3.0, 2.0, -1.0});
  Tensor<double> f = Tensor<double>::from({1, 2, 2}, {1.0, 0.0, 0.0, 1.0});

  // Q = F Wq = [[1,0],[0,2]]; K = F Wk = [[0.5,0],[0,1]]
  // S = Q K^T / sqrt(2) = [[0.5,0],[0,2]] / sqrt(2)
  // A = row softmax of S; V = F Wv = [[1,3],[2,-1]]; out = A V.
  const double s00 = 0.5 / std::sqrt(2.0), s11 = 2.0 / std::sqrt(2.0);
  const double a00 = std::exp(s00) / (std::exp(s00) + 1.0);
  const double a01 = 1.0 - a00;
  const double a11 = std::exp(s11) / (std::exp(s11) + 1.0);
  const double a10 = 1.0 - a11;
  const double want[4] = {a00 * 1.0 + a01 * 2.0, a00 * 3.0 + a01 * -1.0,
                          a10 * 1.0 + a11 * 2.0, a10 * 3.0 + a11 * -1.0};

  Tensor<double> out = attn.forward(f);
  for (int64_t i = 0; i < 4; ++i) CHECK(out[i] == Approx(want[i]).epsilon(1e-12));
  const Tensor<double>& a = attn.weights();
  CHECK(a[0] == Approx(a00).epsilon(1e-12));
  CHECK(a[1] == Approx(a01).epsilon(1e-12));
  CHECK(a[2] == Approx(a10).epsilon(1e-12));
  CHECK(a[3] == Approx(a11).epsilon(1e-12));
}

TEST_CASE("attention weights are a row-stochastic matrix") {
  Rng rng(58);
  SelfAttention<float> attn(24);
  attn.init_params(rng);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor<float> f({2, 8, 24});
    fill_uniform(f, rng, -2.0, 2.0);
    attn.forward(f);
    const Tensor<float>& a = attn.weights();
    for (int64_t r = 0; r < 2 * 8; ++r) {
      double sum = 0.0;
      for (int64_t c = 0; c < 8; ++c) {
        CHECK(a[r * 8 + c] >= 0.0f);
        sum += a[r * 8 + c];
      }
      CHECK(sum == Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("attention is equivariant to row permutations") {
  Rng rng(59);
  SelfAttention<double> attn(12);
  attn.init_params(rng);
  Tensor<double> f({1, 8, 12});
  fill_uniform(f, rng, -1.5, 1.5);
  Tensor<double> out = attn.forward(f);

  const int64_t perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
  Tensor<double> fp({1, 8, 12});
  for (int64_t r = 0; r < 8; ++r)
    std::memcpy(fp.data() + r * 12, f.data() + perm[r] * 12, sizeof(double) * 12);
  Tensor<double> outp = attn.forward(fp);

  for (int64_t r = 0; r < 8; ++r)
    for (int64_t j = 0; j < 12; ++j)
      CHECK(outp[r * 12 + j] == Approx(out[perm[r] * 12 + j]).epsilon(1e-12));
}

TEST_CASE("classifier logits behave like a two-class head") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kPNS;
  cfg.block_dims = {14, 9};
  cfg.proj_dim = 7;
  cfg.hidden_dim = 6;
  Classifier<float> model(cfg);
  Rng rng(60);
  model.init_params(rng);
  std::vector<int> labels{0, 1, 0, 1, 1};
  FeatureBank<float> bank = toy_bank<float>(cfg.block_dims, 5, labels, 0.6, rng);
  std::vector<int64_t> idx{0, 1, 2, 3, 4};

  SUBCASE("probabilities sum to one") {
    Tensor<float> logits = model.forward(bank, idx, Mode::kEval);
    auto p = tfd::clf::prob_faulty(logits);
    Tensor<float> sm = tfd::nn::softmax_lastdim(logits);
    for (int64_t b = 0; b < 5; ++b) {
      CHECK(sm[b * 2] + sm[b * 2 + 1] == Approx(1.0).epsilon(1e-6));
      CHECK(p[static_cast<size_t>(b)] == Approx(sm[b * 2 + 1]).epsilon(1e-6));
    }
  }
  SUBCASE("zero final layer gives even odds") {
    model.mlp_out().weight().set_zero();
    model.mlp_out().bias().set_zero();
    Tensor<float> logits = model.forward(bank, idx, Mode::kEval);
    for (double p : tfd::clf::prob_faulty(logits)) CHECK(p == 0.5);
  }
  SUBCASE("eval mode repeats bitwise") {
    Tensor<float> a = model.forward(bank, idx, Mode::kEval);
    Tensor<float> b = model.forward(bank, idx, Mode::kEval);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("classifier loss gradients match finite differences") {
  CHECK(gradcheck_classifier(Variant::kPNS, 71) < 1e-4);
  CHECK(gradcheck_classifier(Variant::kPN, 72) < 1e-4);
  CHECK(gradcheck_classifier(Variant::kP, 73) < 1e-4);
  CHECK(gradcheck_classifier(Variant::kN, 74) < 1e-4);
}

TEST_CASE("variants own the rows they are named after") {
  ClassifierConfig cfg;
  cfg.block_dims = {10, 6};
  cfg.proj_dim = 4;
  cfg.hidden_dim = 3;

  auto names_of = [&](Variant v) {
    cfg.variant = v;
    Classifier<float> m(cfg);
    std::vector<std::string> names;
    m.for_each_param([&](const std::string& n, Tensor<float>&) { names.push_back(n); });
    return names;
  };

  auto p = names_of(Variant::kP);
  CHECK(std::count(p.begin(), p.end(), "proj0.w") == 1);
  CHECK(std::count(p.begin(), p.end(), "proj2.w") == 0);
  CHECK(std::count(p.begin(), p.end(), "attn.wq") == 0);

  auto n = names_of(Variant::kN);
  CHECK(std::count(n.begin(), n.end(), "proj0.w") == 0);
  CHECK(std::count(n.begin(), n.end(), "proj2.w") == 1);
  CHECK(std::count(n.begin(), n.end(), "proj3.w") == 1);

  auto pn = names_of(Variant::kPN);
  CHECK(std::count(pn.begin(), pn.end(), "proj0.w") == 1);
  CHECK(std::count(pn.begin(), pn.end(), "proj3.w") == 1);
  CHECK(std::count(pn.begin(), pn.end(), "attn.wq") == 0);

  auto pns = names_of(Variant::kPNS);
  CHECK(std::count(pns.begin(), pns.end(), "attn.wq") == 1);
  CHECK(std::count(pns.begin(), pns.end(), "attn.wk") == 1);
  CHECK(std::count(pns.begin(), pns.end(), "attn.wv") == 1);

  // MLP input width adapts: 2 rows * 4 for P, 4 rows * 4 for PN.
  cfg.variant = Variant::kP;
  CHECK(Classifier<float>::owned_rows(cfg) == 2);
  cfg.variant = Variant::kPN;
  CHECK(Classifier<float>::owned_rows(cfg) == 4);
}

TEST_CASE("classifier state dict round-trips and is strict") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kPNS;
  cfg.block_dims = {8, 5};
  cfg.proj_dim = 4;
  cfg.hidden_dim = 3;
  Classifier<float> model(cfg);
  Rng rng(61);
  model.init_params(rng);
  auto sd = model.state_dict();

  Classifier<float> other(cfg);
  other.init_params(rng);
  other.load_state_dict(sd);
  auto sd2 = other.state_dict();
  REQUIRE(sd2.size() == sd.size());
  for (const auto& [name, t] : sd) {
    const Tensor<float>& u = sd2.at(name);
    for (int64_t i = 0; i < t.size(); ++i) CHECK(u[i] == t[i]);
  }

  SUBCASE("missing entry is rejected") {
    sd.erase("attn.wq");
    CHECK_THROWS_AS(other.load_state_dict(sd), tfd::Error);
  }
  SUBCASE("stray entry is rejected") {
    sd.emplace("thulium", Tensor<float>({1}));
    CHECK_THROWS_AS(other.load_state_dict(sd), tfd::Error);
  }
  SUBCASE("a different variant's dict is rejected") {
    ClassifierConfig pcfg = cfg;
    pcfg.variant = Variant::kP;
    Classifier<float> p(pcfg);
    Rng r2(62);
    p.init_params(r2);
    CHECK_THROWS_AS(p.load_state_dict(sd), tfd::Error);
  }
}

TEST_CASE("toy training separates a shifted-mean bank") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kPNS;
  cfg.block_dims = {12, 8};
  cfg.proj_dim = 8;
  cfg.hidden_dim = 8;
  Classifier<float> model(cfg);
  Rng rng(63);
  model.init_params(rng);

  const int64_t n = 200, nv = 60;
  std::vector<int> train_labels(n), val_labels(nv);
  for (int64_t i = 0; i < n; ++i) train_labels[i] = static_cast<int>(i % 2);
  for (int64_t i = 0; i < nv; ++i) val_labels[i] = static_cast<int>(i % 2);
  FeatureBank<float> train = toy_bank<float>(cfg.block_dims, n, train_labels, 1.0, rng);
  FeatureBank<float> val = toy_bank<float>(cfg.block_dims, nv, val_labels, 1.0, rng);

  ClassifierHyper hyper;
  hyper.lr = 0.002;
  hyper.max_epochs = 5;
  auto res = tfd::clf::train_classifier(model, train, train_labels, val, val_labels,
                                        hyper, 901);

  REQUIRE(res.history.size() == 5);
  CHECK(res.history.back().train_loss < res.history.front().train_loss);
  CHECK(res.best_val_accuracy > 0.8);

  // Selection rule: best epoch is the first one attaining the maximum.
  int64_t first_best = 0;
  double best = -1.0;
  for (const auto& h : res.history)
    if (h.val_accuracy > best) {
      best = h.val_accuracy;
      first_best = h.epoch;
    }
  CHECK(res.best_epoch == first_best);
  CHECK(res.best_val_accuracy == best);

  // The restored model reproduces the best epoch's validation numbers.
  auto stats = tfd::clf::eval_classifier(model, val, val_labels, hyper.batch_size);
  CHECK(stats.accuracy == res.best_val_accuracy);
}

TEST_CASE("classifier training is deterministic for a fixed seed") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kPNS;
  cfg.block_dims = {10, 6};
  cfg.proj_dim = 6;
  cfg.hidden_dim = 5;

  std::vector<int> labels(40), val_labels(12);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  for (size_t i = 0; i < val_labels.size(); ++i) val_labels[i] = static_cast<int>(i % 2);

  auto run = [&]() {
    Rng rng(64);
    Classifier<float> model(cfg);
    model.init_params(rng);
    FeatureBank<float> train = toy_bank<float>(cfg.block_dims, 40, labels, 0.7, rng);
    FeatureBank<float> val = toy_bank<float>(cfg.block_dims, 12, val_labels, 0.7, rng);
    ClassifierHyper hyper;
    hyper.lr = 0.001;
    hyper.max_epochs = 4;
    hyper.batch_size = 8;
    return tfd::clf::train_classifier(model, train, labels, val, val_labels, hyper, 77);
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].train_accuracy == b.history[i].train_accuracy);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
    CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
  }
  CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("evaluation does not depend on batch grouping") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kPN;
  cfg.block_dims = {11, 7};
  cfg.proj_dim = 5;
  cfg.hidden_dim = 4;
  Classifier<float> model(cfg);
  Rng rng(65);
  model.init_params(rng);
  std::vector<int> labels(13);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  FeatureBank<float> bank = toy_bank<float>(cfg.block_dims, 13, labels, 0.5, rng);

  auto a = tfd::clf::eval_classifier(model, bank, labels, 4);
  auto b = tfd::clf::eval_classifier(model, bank, labels, 13);
  CHECK(a.accuracy == b.accuracy);
  CHECK(std::abs(a.loss - b.loss) <= 1e-6 * std::max(std::abs(a.loss), 1.0));

  auto sa = tfd::clf::faulty_scores(model, bank, 4);
  auto sb = tfd::clf::faulty_scores(model, bank, 13);
  REQUIRE(sa.size() == sb.size());
  for (size_t i = 0; i < sa.size(); ++i)
    CHECK(sa[i] == Approx(sb[i]).epsilon(1e-5));
}

TEST_CASE("train_classifier validation errors") {
  ClassifierConfig cfg;
  cfg.variant = Variant::kP;
  cfg.block_dims = {6, 4};
  cfg.proj_dim = 3;
  cfg.hidden_dim = 3;
  Classifier<float> model(cfg);
  Rng rng(66);
  model.init_params(rng);
  std::vector<int> ones(8, 1), mixed{0, 1, 0, 1, 0, 1, 0, 1};
  FeatureBank<float> bank = toy_bank<float>(cfg.block_dims, 8, mixed, 0.5, rng);
  ClassifierHyper hyper;
  hyper.max_epochs = 1;

  // Single-class train split is refused; the same bank with both classes
  // trains fine.
  CHECK_THROWS_WITH_AS(
      tfd::clf::train_classifier(model, bank, ones, bank, mixed, hyper, 1),
      doctest::Contains("class 0"), tfd::Error);
  CHECK_NOTHROW(tfd::clf::train_classifier(model, bank, mixed, bank, mixed, hyper, 1));

  ClassifierHyper bad = hyper;
  bad.lr = 0.0;
  CHECK_THROWS_AS(tfd::clf::train_classifier(model, bank, mixed, bank, mixed, bad, 1),
                  tfd::Error);
  std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(
      tfd::clf::train_classifier(model, bank, short_labels, bank, mixed, hyper, 1),
      tfd::Error);
}

TEST_CASE("classifier config and bank validation") {
  ClassifierConfig cfg;
  cfg.block_dims = {};
  CHECK_THROWS_AS(Classifier<float>{cfg}, tfd::Error);
  cfg.block_dims = {4, 4};
  cfg.dropout_p = 1.0;
  CHECK_THROWS_AS(Classifier<float>{cfg}, tfd::Error);

  cfg.dropout_p = 0.5;
  cfg.proj_dim = 3;
  cfg.hidden_dim = 2;
  Classifier<float> model(cfg);
  Rng rng(67);
  model.init_params(rng);

  FeatureBank<float> bank;
  bank.rows.emplace_back(std::vector<int64_t>{2, 4});
  CHECK_THROWS_AS(model.forward(bank, {0}, Mode::kEval), tfd::Error);  // 1 row, needs 4
  bank.rows.emplace_back(std::vector<int64_t>{2, 4});
  bank.rows.emplace_back(std::vector<int64_t>{2, 4});
  bank.rows.emplace_back(std::vector<int64_t>{2, 5});  // wrong width
  CHECK_THROWS_AS(model.forward(bank, {0}, Mode::kEval), tfd::Error);
  bank.rows[3] = Tensor<float>({2, 4});
  CHECK_NOTHROW(model.forward(bank, {0, 1}, Mode::kEval));
  CHECK_THROWS_AS(model.forward(bank, {0, 2}, Mode::kEval), tfd::Error);  // index range
  CHECK_THROWS_AS(model.forward(bank, {}, Mode::kEval), tfd::Error);
}
