#pragma once

#include <memory>
#include <string>
#include <vector>

#include "saga/autodiff.hpp"
#include "saga/conv.hpp"
#include "saga/rng.hpp"
#include "saga/tensor_file.hpp"

namespace saga::nn {

using ad::Graph;
using ad::ImgShape;
using ad::Var;

template <class T>
struct Param {
  std::string name;
  MatX<T> value;
  MatX<T> grad;
  void zero_grad() { grad.setZero(); }
};

// Owns parameters in creation order; order defines optimizer state layout
// and serialization, so keep construction deterministic.
template <class T>
class ParamStore {
 public:
  Param<T>* add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = MatX<T>::Zero(rows, cols);
    p->grad = MatX<T>::Zero(rows, cols);
    items_.push_back(std::move(p));
    return items_.back().get();
  }

  std::vector<Param<T>*> all() const {
    std::vector<Param<T>*> out;
    out.reserve(items_.size());
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }

  void zero_grad() {
    for (auto& p : items_) p->zero_grad();
  }

  long count_scalars() const {
    long n = 0;
    for (auto& p : items_) n += static_cast<long>(p->value.size());
    return n;
  }

  void save(TensorFile& tf, const std::string& prefix) const {
    for (auto& p : items_) tf.set(prefix + p->name, MatXf(p->value.template cast<float>()));
  }

  void load(const TensorFile& tf, const std::string& prefix) {
    for (auto& p : items_) {
      const MatXf& m = tf.get_f(prefix + p->name);
      SAGA_REQUIRE(m.rows() == p->value.rows() && m.cols() == p->value.cols(), InvalidInput,
                   "checkpoint shape mismatch for " + p->name);
      p->value = m.template cast<T>();
    }
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> items_;
};

template <class T>
Var leaf(Graph<T>& g, Param<T>* p) {
  return g.param(&p->value, &p->grad);
}

template <class T>
void init_normal(Rng& rng, MatX<T>& m, double std) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.normal() * std);
}

template <class T>
struct Linear {
  Param<T>* W = nullptr;
  Param<T>* b = nullptr;

  void build(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng,
             double gain = 2.0) {
    W = ps.add(name + ".w", out, in);
    b = ps.add(name + ".b", out, 1);
    init_normal(rng, W->value, std::sqrt(gain / in));
  }

  Var fwd(Graph<T>& g, Var x) const { return g.linear(leaf(g, W), leaf(g, b), x); }
};

// y = x + L2(lrelu(L1(x))); hidden width chosen at build time.
template <class T>
struct ResBlock {
  Linear<T> l1, l2;

  void build(ParamStore<T>& ps, const std::string& name, int dim, int hidden, Rng& rng) {
    l1.build(ps, name + ".l1", dim, hidden, rng);
    l2.build(ps, name + ".l2", hidden, dim, rng);
  }

  Var fwd(Graph<T>& g, Var x) const {
    return g.add(x, l2.fwd(g, g.lrelu(l1.fwd(g, x), T(0.1))));
  }
};

// Depthwise-separable downsampling conv block: 3x3 depthwise stride (2,2),
// 1x1 pointwise with bias, LeakyReLU.
template <class T>
struct SepConvDown {
  Param<T>* dw = nullptr;
  Param<T>* pw = nullptr;
  Param<T>* b = nullptr;
  int cin = 0, cout = 0;

  void build(ParamStore<T>& ps, const std::string& name, int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    dw = ps.add(name + ".dw", cin, 9);
    pw = ps.add(name + ".pw", cout, cin);
    b = ps.add(name + ".b", cout, 1);
    init_normal(rng, dw->value, std::sqrt(2.0 / 9.0));
    init_normal(rng, pw->value, std::sqrt(2.0 / cin));
  }

  Var fwd(Graph<T>& g, Var x, ImgShape in, ImgShape* out) const {
    ImgShape mid;
    Var h = ad::depthwise_conv3(g, leaf(g, dw), x, in, 2, 2, &mid);
    Var y = ad::pointwise_conv(g, leaf(g, pw), leaf(g, b), h, mid);
    if (out) *out = ImgShape{cout, mid.h, mid.w};
    return g.lrelu(y, T(0.1));
  }
};

// Mirror block: 1x1 pointwise (with bias) then transposed 3x3 depthwise
// stride (2,2) with explicit output padding, LeakyReLU optional.
template <class T>
struct SepConvUp {
  Param<T>* pw = nullptr;
  Param<T>* b = nullptr;
  Param<T>* dw = nullptr;
  int cin = 0, cout = 0;

  void build(ParamStore<T>& ps, const std::string& name, int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    pw = ps.add(name + ".pw", cout, cin);
    b = ps.add(name + ".b", cout, 1);
    dw = ps.add(name + ".dw", cout, 9);
    init_normal(rng, pw->value, std::sqrt(2.0 / cin));
    init_normal(rng, dw->value, std::sqrt(2.0 / 9.0));
  }

  Var fwd(Graph<T>& g, Var x, ImgShape in, int target_h, int target_w, ImgShape* out,
          bool act = true) const {
    Var h = ad::pointwise_conv(g, leaf(g, pw), leaf(g, b), x, in);
    ImgShape mid{cout, in.h, in.w};
    int oph = target_h - ad::tconv_out_size(in.h, 3, 2, 1, 0);
    int opw = target_w - ad::tconv_out_size(in.w, 3, 2, 1, 0);
    SAGA_REQUIRE(oph >= 0 && oph <= 1 && opw >= 0 && opw <= 1, InvalidInput,
                 "SepConvUp: unreachable target size");
    Var y = ad::depthwise_tconv3(g, leaf(g, dw), h, mid, 2, 2, oph, opw, out);
    return act ? g.lrelu(y, T(0.1)) : y;
  }
};

template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Param<T>*> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, t_);
    double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      m_[k] = T(b1_) * m_[k] + T(1 - b1_) * p.grad;
      v_[k] = T(b2_) * v_[k] + T(1 - b2_) * p.grad.cwiseProduct(p.grad);
      MatX<T> mhat = m_[k] / T(bc1);
      MatX<T> vhat = v_[k] / T(bc2);
      p.value -= (T(lr) * mhat.array() / (vhat.array().sqrt() + T(eps_))).matrix();
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<MatX<T>> m_, v_;
  double b1_, b2_, eps_;
  long t_ = 0;
};

}  // namespace saga::nn
