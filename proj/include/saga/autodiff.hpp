#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "saga/common.hpp"
#include "saga/geometry.hpp"

namespace saga::ad {

// Reverse-mode autodiff on dense matrices. One Graph is built per forward
// pass; creation order doubles as the topological order, so backward() is a
// single reverse sweep. The scalar type is a template parameter: training
// runs float for speed, gradient checks run double. Everything is
// single-threaded and accumulates in creation order, which makes results
// bit-reproducible for a fixed seed.
//
// Conventions: a matrix value is (features x items); image batches flatten
// each (C,H,W) sample into one column (row index c*H*W + h*W + w).

struct Var {
  int i = -1;
  bool ok() const { return i >= 0; }
};

template <class T>
class Graph {
 public:
  struct Node {
    MatX<T> val;
    const MatX<T>* view = nullptr;  // leaf view into external storage
    MatX<T> grad;
    MatX<T>* sink = nullptr;  // external gradient accumulator (parameters)
    bool needs = false;
    std::function<void(Graph&, Node&)> back;
    std::vector<int> parents;
    const MatX<T>& v() const { return view ? *view : val; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const MatX<T>& val(Var v) const { return node(v.i).v(); }
  Node& node(int i) { return *nodes_[static_cast<size_t>(i)]; }
  const Node& node(int i) const { return *nodes_[static_cast<size_t>(i)]; }
  size_t size() const { return nodes_.size(); }

  // --- leaves ---------------------------------------------------------

  Var input(MatX<T> m) {
    Var v = make();
    node(v.i).val = std::move(m);
    return v;
  }

  // View of caller-owned storage; caller keeps it alive for the graph's life.
  Var input_view(const MatX<T>* m) {
    Var v = make();
    node(v.i).view = m;
    return v;
  }

  // Trainable leaf: value viewed, gradients accumulated into *grad_sink.
  Var param(const MatX<T>* value, MatX<T>* grad_sink) {
    Var v = make();
    Node& n = node(v.i);
    n.view = value;
    n.sink = grad_sink;
    n.needs = true;
    n.back = [](Graph&, Node& self) {
      if (self.grad.size()) *self.sink += self.grad;
    };
    return v;
  }

  // --- elementwise ----------------------------------------------------

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var v = make({a.i, b.i});
    node(v.i).val = val(a) + val(b);
    set_back(v, [a, b](Graph& g, Node& self) {
      g.accum(a.i, self.grad);
      g.accum(b.i, self.grad);
    });
    return v;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var v = make({a.i, b.i});
    node(v.i).val = val(a) - val(b);
    set_back(v, [a, b](Graph& g, Node& self) {
      g.accum(a.i, self.grad);
      g.accum(b.i, -self.grad);
    });
    return v;
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Var v = make({a.i, b.i});
    node(v.i).val = val(a).cwiseProduct(val(b));
    set_back(v, [a, b](Graph& g, Node& self) {
      g.accum(a.i, self.grad.cwiseProduct(g.val(b)));
      g.accum(b.i, self.grad.cwiseProduct(g.val(a)));
    });
    return v;
  }

  Var scale(Var a, T s) {
    Var v = make({a.i});
    node(v.i).val = val(a) * s;
    set_back(v, [a, s](Graph& g, Node& self) { g.accum(a.i, MatX<T>(self.grad * s)); });
    return v;
  }

  Var add_const(Var a, T c) {
    Var v = make({a.i});
    node(v.i).val = val(a).array() + c;
    set_back(v, [a](Graph& g, Node& self) { g.accum(a.i, self.grad); });
    return v;
  }

  Var relu(Var a) { return lrelu(a, T(0)); }

  Var lrelu(Var a, T slope) {
    Var v = make({a.i});
    node(v.i).val = val(a).unaryExpr([slope](T x) { return x > T(0) ? x : slope * x; });
    set_back(v, [a, slope](Graph& g, Node& self) {
      const MatX<T>& x = g.val(a);
      MatX<T> gr = self.grad;
      for (Eigen::Index j = 0; j < gr.cols(); ++j)
        for (Eigen::Index i = 0; i < gr.rows(); ++i)
          if (x(i, j) <= T(0)) gr(i, j) *= slope;
      g.accum(a.i, gr);
    });
    return v;
  }

  Var sigmoid(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).unaryExpr([](T x) {
      return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    });
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& y = self.v();
      g.accum(a.i, MatX<T>(self.grad.array() * y.array() * (T(1) - y.array())));
    });
    return v;
  }

  Var tanh_(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).array().tanh();
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& y = self.v();
      g.accum(a.i, MatX<T>(self.grad.array() * (T(1) - y.array().square())));
    });
    return v;
  }

  Var exp_(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).array().exp();
    set_back(v, [a](Graph& g, Node& self) {
      g.accum(a.i, MatX<T>(self.grad.array() * self.v().array()));
    });
    return v;
  }

  Var square(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).array().square();
    set_back(v, [a](Graph& g, Node& self) {
      g.accum(a.i, MatX<T>(T(2) * self.grad.array() * g.val(a).array()));
    });
    return v;
  }

  // Elementwise |x|; subgradient 0 at x = 0.
  Var abs_(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).array().abs();
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& x = g.val(a);
      MatX<T> gr = self.grad;
      for (Eigen::Index j = 0; j < gr.cols(); ++j)
        for (Eigen::Index i = 0; i < gr.rows(); ++i)
          gr(i, j) *= (x(i, j) > T(0)) ? T(1) : (x(i, j) < T(0) ? T(-1) : T(0));
      g.accum(a.i, gr);
    });
    return v;
  }

  // Elementwise robust wrapper Psi(s) = sqrt(s^2+1) - 1.
  Var charbonnier(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).unaryExpr([](T x) { return robust_psi(x); });
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& x = g.val(a);
      MatX<T> gr = self.grad;
      for (Eigen::Index j = 0; j < gr.cols(); ++j)
        for (Eigen::Index i = 0; i < gr.rows(); ++i) gr(i, j) *= robust_psi_grad(x(i, j));
      g.accum(a.i, gr);
    });
    return v;
  }

  // --- linear algebra ---------------------------------------------------

  Var matmul(Var a, Var b) {
    SAGA_REQUIRE(val(a).cols() == val(b).rows(), InvalidInput, "matmul: inner dims differ");
    Var v = make({a.i, b.i});
    node(v.i).val = val(a) * val(b);
    set_back(v, [a, b](Graph& g, Node& self) {
      g.accum(a.i, MatX<T>(self.grad * g.val(b).transpose()));
      g.accum(b.i, MatX<T>(g.val(a).transpose() * self.grad));
    });
    return v;
  }

  // W (out x in), bias (out x 1), x (in x batch) -> W x + bias per column.
  Var linear(Var W, Var bias, Var x) {
    SAGA_REQUIRE(val(W).cols() == val(x).rows(), InvalidInput, "linear: dims differ");
    SAGA_REQUIRE(val(bias).rows() == val(W).rows() && val(bias).cols() == 1, InvalidInput,
                 "linear: bias shape");
    Var v = make({W.i, bias.i, x.i});
    node(v.i).val = (val(W) * val(x)).colwise() + VecX<T>(val(bias));
    set_back(v, [W, bias, x](Graph& g, Node& self) {
      g.accum(W.i, MatX<T>(self.grad * g.val(x).transpose()));
      g.accum(bias.i, MatX<T>(self.grad.rowwise().sum()));
      g.accum(x.i, MatX<T>(g.val(W).transpose() * self.grad));
    });
    return v;
  }

  Var rowcat(const std::vector<Var>& parts) {
    SAGA_REQUIRE(!parts.empty(), InvalidInput, "rowcat: empty");
    Eigen::Index rows = 0, cols = val(parts[0]).cols();
    std::vector<int> pis;
    for (Var p : parts) {
      SAGA_REQUIRE(val(p).cols() == cols, InvalidInput, "rowcat: column mismatch");
      rows += val(p).rows();
      pis.push_back(p.i);
    }
    Var v = make(pis);
    MatX<T>& out = node(v.i).val;
    out.resize(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      out.middleRows(r, val(p).rows()) = val(p);
      r += val(p).rows();
    }
    set_back(v, [pis](Graph& g, Node& self) {
      Eigen::Index r = 0;
      for (int pi : pis) {
        Eigen::Index nr = g.node(pi).v().rows();
        g.accum(pi, MatX<T>(self.grad.middleRows(r, nr)));
        r += nr;
      }
    });
    return v;
  }

  Var rows(Var a, Eigen::Index r0, Eigen::Index nr) {
    SAGA_REQUIRE(r0 >= 0 && r0 + nr <= val(a).rows(), InvalidInput, "rows: out of range");
    Var v = make({a.i});
    node(v.i).val = val(a).middleRows(r0, nr);
    set_back(v, [a, r0, nr](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      MatX<T> gr = MatX<T>::Zero(av.rows(), av.cols());
      gr.middleRows(r0, nr) = self.grad;
      g.accum(a.i, gr);
    });
    return v;
  }

  Var transpose_(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).transpose();
    set_back(v, [a](Graph& g, Node& self) { g.accum(a.i, MatX<T>(self.grad.transpose())); });
    return v;
  }

  Var gather_cols(Var a, std::vector<int> idx) {
    Var v = make({a.i});
    const MatX<T>& av = val(a);
    MatX<T>& out = node(v.i).val;
    out.resize(av.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j) {
      SAGA_REQUIRE(idx[j] >= 0 && idx[j] < av.cols(), InvalidInput, "gather_cols: bad index");
      out.col(static_cast<Eigen::Index>(j)) = av.col(idx[j]);
    }
    set_back(v, [a, idx = std::move(idx)](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      MatX<T> gr = MatX<T>::Zero(av.rows(), av.cols());
      for (size_t j = 0; j < idx.size(); ++j)
        gr.col(idx[j]) += self.grad.col(static_cast<Eigen::Index>(j));
      g.accum(a.i, gr);
    });
    return v;
  }

  // --- reductions -------------------------------------------------------

  Var sum(Var a) {
    Var v = make({a.i});
    node(v.i).val = scalar(ordered_sum(val(a)));
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      g.accum(a.i, MatX<T>(MatX<T>::Constant(av.rows(), av.cols(), self.grad(0, 0))));
    });
    return v;
  }

  Var mean(Var a) {
    Eigen::Index n = val(a).size();
    SAGA_REQUIRE(n > 0, InvalidInput, "mean: empty");
    return scale(sum(a), T(1) / static_cast<T>(n));
  }

  Var sum_sq(Var a) {
    Var v = make({a.i});
    T acc = T(0);
    const MatX<T>& av = val(a);
    for (Eigen::Index j = 0; j < av.cols(); ++j)
      for (Eigen::Index i = 0; i < av.rows(); ++i) acc += av(i, j) * av(i, j);
    node(v.i).val = scalar(acc);
    set_back(v, [a](Graph& g, Node& self) {
      g.accum(a.i, MatX<T>(T(2) * self.grad(0, 0) * g.val(a)));
    });
    return v;
  }

  Var sum_abs(Var a) {
    Var v = make({a.i});
    T acc = T(0);
    const MatX<T>& av = val(a);
    for (Eigen::Index j = 0; j < av.cols(); ++j)
      for (Eigen::Index i = 0; i < av.rows(); ++i) acc += std::abs(av(i, j));
    node(v.i).val = scalar(acc);
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      MatX<T> gr(av.rows(), av.cols());
      for (Eigen::Index j = 0; j < av.cols(); ++j)
        for (Eigen::Index i = 0; i < av.rows(); ++i)
          gr(i, j) = self.grad(0, 0) * (av(i, j) > T(0) ? T(1) : (av(i, j) < T(0) ? T(-1) : T(0)));
      g.accum(a.i, gr);
    });
    return v;
  }

  // Per-column sum -> (1 x C).
  Var colwise_sum(Var a) {
    Var v = make({a.i});
    node(v.i).val = val(a).colwise().sum();
    set_back(v, [a](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      MatX<T> gr(av.rows(), av.cols());
      for (Eigen::Index j = 0; j < av.cols(); ++j) gr.col(j).setConstant(self.grad(0, j));
      g.accum(a.i, gr);
    });
    return v;
  }

  // --- fused losses -----------------------------------------------------

  // Per-column Gaussian KL to the unit prior: 0.5 * sum(mu^2 + e^lv - lv - 1).
  Var gauss_kl(Var mu, Var logvar) {
    check_same(mu, logvar, "gauss_kl");
    Var v = make({mu.i, logvar.i});
    const MatX<T>& m = val(mu);
    const MatX<T>& lv = val(logvar);
    MatX<T> out(1, m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      T acc = T(0);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        acc += m(i, j) * m(i, j) + std::exp(lv(i, j)) - lv(i, j) - T(1);
      out(0, j) = T(0.5) * acc;
    }
    node(v.i).val = std::move(out);
    set_back(v, [mu, logvar](Graph& g, Node& self) {
      const MatX<T>& m = g.val(mu);
      const MatX<T>& lv = g.val(logvar);
      MatX<T> gm(m.rows(), m.cols()), gl(m.rows(), m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        T go = self.grad(0, j);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          gm(i, j) = go * m(i, j);
          gl(i, j) = go * T(0.5) * (std::exp(lv(i, j)) - T(1));
        }
      }
      g.accum(mu.i, gm);
      g.accum(logvar.i, gl);
    });
    return v;
  }

  // Mean binary cross-entropy with logits over all elements; positive
  // targets weighted by pos_weight (targets must be 0/1).
  Var bce_logits(Var logits, const MatX<T>& target, T pos_weight) {
    SAGA_REQUIRE(val(logits).rows() == target.rows() && val(logits).cols() == target.cols(),
                 InvalidInput, "bce_logits: shape mismatch");
    Var v = make({logits.i});
    const MatX<T>& x = val(logits);
    T acc = T(0);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        T y = target(i, j);
        T w = y * pos_weight + (T(1) - y);
        T z = x(i, j);
        // -log sigma(z) = max(-z,0)+log1p(exp(-|z|)); -log(1-sigma) symmetric.
        T soft = std::log1p(std::exp(-std::abs(z)));
        T term = y * (std::max(-z, T(0)) + soft) + (T(1) - y) * (std::max(z, T(0)) + soft);
        acc += w * term;
      }
    T inv_n = T(1) / static_cast<T>(x.size());
    node(v.i).val = scalar(acc * inv_n);
    set_back(v, [logits, target, pos_weight, inv_n](Graph& g, Node& self) {
      const MatX<T>& x = g.val(logits);
      MatX<T> gr(x.rows(), x.cols());
      T go = self.grad(0, 0) * inv_n;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          T y = target(i, j);
          T w = y * pos_weight + (T(1) - y);
          T z = x(i, j);
          T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
          gr(i, j) = go * w * (s - y);
        }
      g.accum(logits.i, gr);
    });
    return v;
  }

  // --- pooling over column segments --------------------------------------

  // Input columns form consecutive runs of length seg; output one column of
  // per-row maxima per run. Used as the PointNet max pool.
  Var segment_max(Var a, int seg) {
    const MatX<T>& av = val(a);
    SAGA_REQUIRE(seg > 0 && av.cols() % seg == 0, InvalidInput, "segment_max: bad segment");
    Eigen::Index groups = av.cols() / seg;
    Var v = make({a.i});
    MatX<T>& out = node(v.i).val;
    out.resize(av.rows(), groups);
    std::vector<int> arg(static_cast<size_t>(av.rows() * groups));
    for (Eigen::Index gcol = 0; gcol < groups; ++gcol) {
      Eigen::Index base = gcol * seg;
      for (Eigen::Index i = 0; i < av.rows(); ++i) {
        T best = av(i, base);
        int bj = 0;
        for (int j = 1; j < seg; ++j) {
          if (av(i, base + j) > best) {
            best = av(i, base + j);
            bj = j;
          }
        }
        out(i, gcol) = best;
        arg[static_cast<size_t>(i * groups + gcol)] = static_cast<int>(base) + bj;
      }
    }
    set_back(v, [a, arg = std::move(arg)](Graph& g, Node& self) {
      const MatX<T>& av = g.val(a);
      Eigen::Index groups = self.grad.cols();
      MatX<T> gr = MatX<T>::Zero(av.rows(), av.cols());
      for (Eigen::Index gcol = 0; gcol < groups; ++gcol)
        for (Eigen::Index i = 0; i < av.rows(); ++i)
          gr(i, arg[static_cast<size_t>(i * groups + gcol)]) += self.grad(i, gcol);
      g.accum(a.i, gr);
    });
    return v;
  }

  // --- distance nodes -----------------------------------------------------

  // X (3 x N) varying points, cloud (3 x P) fixed: per X column the min
  // squared distance to the cloud -> (1 x N). Argmins are treated as
  // constant during differentiation.
  Var sqdist_to_cloud(Var X, const MatX<T>& cloud) {
    SAGA_REQUIRE(val(X).rows() == 3 && cloud.rows() == 3, InvalidInput,
                 "sqdist_to_cloud: expects 3 x N");
    Var v = make({X.i});
    const MatX<T>& xv = val(X);
    Eigen::Index N = xv.cols();
    MatX<T>& out = node(v.i).val;
    out.resize(1, N);
    std::vector<int> arg(static_cast<size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::Index bi;
      out(0, i) = (cloud.colwise() - VecX<T>(xv.col(i))).colwise().squaredNorm().minCoeff(&bi);
      arg[static_cast<size_t>(i)] = static_cast<int>(bi);
    }
    set_back(v, [X, &cloud, arg = std::move(arg)](Graph& g, Node& self) {
      const MatX<T>& xv = g.val(X);
      MatX<T> gr(3, xv.cols());
      for (Eigen::Index i = 0; i < xv.cols(); ++i)
        gr.col(i) = T(2) * self.grad(0, i) * (xv.col(i) - cloud.col(arg[static_cast<size_t>(i)]));
      g.accum(X.i, gr);
    });
    return v;
  }

  // cloud (3 x Q) fixed, X (3 x N) varying: per cloud column the min squared
  // distance to the varying set -> (1 x Q).
  Var sqdist_from_cloud(const MatX<T>& cloud, Var X) {
    SAGA_REQUIRE(val(X).rows() == 3 && cloud.rows() == 3, InvalidInput,
                 "sqdist_from_cloud: expects 3 x N");
    Var v = make({X.i});
    const MatX<T>& xv = val(X);
    Eigen::Index Q = cloud.cols();
    MatX<T>& out = node(v.i).val;
    out.resize(1, Q);
    std::vector<int> arg(static_cast<size_t>(Q));
    for (Eigen::Index q = 0; q < Q; ++q) {
      Eigen::Index bi;
      out(0, q) = (xv.colwise() - VecX<T>(cloud.col(q))).colwise().squaredNorm().minCoeff(&bi);
      arg[static_cast<size_t>(q)] = static_cast<int>(bi);
    }
    set_back(v, [X, &cloud, arg = std::move(arg)](Graph& g, Node& self) {
      const MatX<T>& xv = g.val(X);
      MatX<T> gr = MatX<T>::Zero(3, xv.cols());
      for (Eigen::Index q = 0; q < cloud.cols(); ++q) {
        int j = arg[static_cast<size_t>(q)];
        gr.col(j) += T(2) * self.grad(0, q) * (xv.col(j) - cloud.col(q));
      }
      g.accum(X.i, gr);
    });
    return v;
  }

  // --- generic hook for custom nodes (body skinning etc.) -----------------

  Var custom(std::vector<int> parents, MatX<T> value,
             std::function<void(Graph&, Node&)> back_fn) {
    Var v = make(std::move(parents));
    node(v.i).val = std::move(value);
    set_back(v, std::move(back_fn));
    return v;
  }

  void accum(int i, const MatX<T>& g) {
    Node& n = node(i);
    if (!n.needs) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  void backward(Var root) {
    Node& r = node(root.i);
    r.grad = MatX<T>::Ones(r.v().rows(), r.v().cols());
    for (int i = root.i; i >= 0; --i) {
      Node& n = node(i);
      if (n.grad.size() && n.back) n.back(*this, n);
    }
  }

 private:
  static MatX<T> scalar(T x) {
    MatX<T> m(1, 1);
    m(0, 0) = x;
    return m;
  }

  static T ordered_sum(const MatX<T>& m) {
    T acc = T(0);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) acc += m(i, j);
    return acc;
  }

  void check_same(Var a, Var b, const char* op) {
    SAGA_REQUIRE(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), InvalidInput,
                 std::string(op) + ": shape mismatch");
  }

  Var make(std::vector<int> parents = {}) {
    auto n = std::make_unique<Node>();
    n->parents = parents;
    for (int p : parents)
      if (node(p).needs) n->needs = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_back(Var v, std::function<void(Graph&, Node&)> fn) {
    Node& n = node(v.i);
    if (n.needs) n.back = std::move(fn);
  }

  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace saga::ad
