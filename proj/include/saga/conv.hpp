#pragma once

#include "saga/autodiff.hpp"

namespace saga::ad {

// Image batches live in Graph matrices as one flattened (C,H,W) sample per
// column (row index c*H*W + h*W + w). Shapes travel beside the Vars; the
// model code owns the chain of shapes.
struct ImgShape {
  int c = 0, h = 0, w = 0;
  Eigen::Index flat() const { return static_cast<Eigen::Index>(c) * h * w; }
};

// 1x1 convolution: weights (Cout x Cin), bias (Cout x 1).
template <class T>
Var pointwise_conv(Graph<T>& g, Var W, Var bias, Var x, ImgShape in) {
  const MatX<T>& xv = g.val(x);
  const MatX<T>& wv = g.val(W);
  SAGA_REQUIRE(xv.rows() == in.flat(), InvalidInput, "pointwise_conv: shape mismatch");
  SAGA_REQUIRE(wv.cols() == in.c, InvalidInput, "pointwise_conv: channel mismatch");
  int cout = static_cast<int>(wv.rows());
  Eigen::Index B = xv.cols();
  Eigen::Index HW = static_cast<Eigen::Index>(in.h) * in.w;

  // Permute to (Cin x HW*B), one GEMM, permute back.
  MatX<T> x2(in.c, HW * B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < in.c; ++c)
      x2.row(c).segment(b * HW, HW) = xv.col(b).segment(c * HW, HW).transpose();
  MatX<T> y2 = (g.val(W) * x2).colwise() + VecX<T>(g.val(bias));
  MatX<T> out(static_cast<Eigen::Index>(cout) * HW, B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < cout; ++c)
      out.col(b).segment(c * HW, HW) = y2.row(c).segment(b * HW, HW).transpose();

  int ci = in.c;
  return g.custom({W.i, bias.i, x.i}, std::move(out),
                  [W, bias, x, ci, cout, HW](Graph<T>& g2, typename Graph<T>::Node& self) {
                    const MatX<T>& xv2 = g2.val(x);
                    Eigen::Index B2 = xv2.cols();
                    MatX<T> x2b(ci, HW * B2), g2b(cout, HW * B2);
                    for (Eigen::Index b = 0; b < B2; ++b)
                      for (int c = 0; c < ci; ++c)
                        x2b.row(c).segment(b * HW, HW) = xv2.col(b).segment(c * HW, HW).transpose();
                    for (Eigen::Index b = 0; b < B2; ++b)
                      for (int c = 0; c < cout; ++c)
                        g2b.row(c).segment(b * HW, HW) =
                            self.grad.col(b).segment(c * HW, HW).transpose();
                    g2.accum(W.i, MatX<T>(g2b * x2b.transpose()));
                    g2.accum(bias.i, MatX<T>(g2b.rowwise().sum()));
                    MatX<T> gx2 = g2.val(W).transpose() * g2b;
                    MatX<T> gx(xv2.rows(), B2);
                    for (Eigen::Index b = 0; b < B2; ++b)
                      for (int c = 0; c < ci; ++c)
                        gx.col(b).segment(c * HW, HW) = gx2.row(c).segment(b * HW, HW).transpose();
                    g2.accum(x.i, gx);
                  });
}

inline int conv_out_size(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
inline int tconv_out_size(int in, int k, int s, int p, int opad) {
  return (in - 1) * s - 2 * p + k + opad;
}

// Depthwise 3x3 convolution, stride (sh, sw), padding 1. Weights (C x 9).
template <class T>
Var depthwise_conv3(Graph<T>& g, Var W, Var x, ImgShape in, int sh, int sw, ImgShape* out_shape) {
  const MatX<T>& xv = g.val(x);
  SAGA_REQUIRE(xv.rows() == in.flat(), InvalidInput, "depthwise_conv3: shape mismatch");
  SAGA_REQUIRE(g.val(W).rows() == in.c && g.val(W).cols() == 9, InvalidInput,
               "depthwise_conv3: weight shape");
  int oh = conv_out_size(in.h, 3, sh, 1), ow = conv_out_size(in.w, 3, sw, 1);
  ImgShape os{in.c, oh, ow};
  if (out_shape) *out_shape = os;
  Eigen::Index B = xv.cols();
  MatX<T> out = MatX<T>::Zero(os.flat(), B);
  const MatX<T>& wv = g.val(W);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < in.c; ++c) {
      const T* xp = xv.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
      T* op = out.col(b).data() + static_cast<Eigen::Index>(c) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          T acc = T(0);
          for (int kh = 0; kh < 3; ++kh) {
            int iy = y * sh - 1 + kh;
            if (iy < 0 || iy >= in.h) continue;
            for (int kw = 0; kw < 3; ++kw) {
              int ix = xo * sw - 1 + kw;
              if (ix < 0 || ix >= in.w) continue;
              acc += wv(c, kh * 3 + kw) * xp[iy * in.w + ix];
            }
          }
          op[y * ow + xo] = acc;
        }
    }
  return g.custom({W.i, x.i}, std::move(out),
                  [W, x, in, os, sh, sw](Graph<T>& g2, typename Graph<T>::Node& self) {
                    const MatX<T>& xv2 = g2.val(x);
                    const MatX<T>& wv2 = g2.val(W);
                    Eigen::Index B2 = xv2.cols();
                    MatX<T> gW = MatX<T>::Zero(in.c, 9);
                    MatX<T> gx = MatX<T>::Zero(xv2.rows(), B2);
                    for (Eigen::Index b = 0; b < B2; ++b)
                      for (int c = 0; c < in.c; ++c) {
                        const T* xp = xv2.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
                        T* gxp = gx.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
                        const T* gop =
                            self.grad.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
                        for (int y = 0; y < os.h; ++y)
                          for (int xo = 0; xo < os.w; ++xo) {
                            T go = gop[y * os.w + xo];
                            if (go == T(0)) continue;
                            for (int kh = 0; kh < 3; ++kh) {
                              int iy = y * sh - 1 + kh;
                              if (iy < 0 || iy >= in.h) continue;
                              for (int kw = 0; kw < 3; ++kw) {
                                int ix = xo * sw - 1 + kw;
                                if (ix < 0 || ix >= in.w) continue;
                                gW(c, kh * 3 + kw) += go * xp[iy * in.w + ix];
                                gxp[iy * in.w + ix] += go * wv2(c, kh * 3 + kw);
                              }
                            }
                          }
                      }
                    g2.accum(W.i, gW);
                    g2.accum(x.i, gx);
                  });
}

// Transposed depthwise 3x3, stride (sh, sw), padding 1, explicit output
// padding. Weights (C x 9).
template <class T>
Var depthwise_tconv3(Graph<T>& g, Var W, Var x, ImgShape in, int sh, int sw, int oph, int opw,
                     ImgShape* out_shape) {
  const MatX<T>& xv = g.val(x);
  SAGA_REQUIRE(xv.rows() == in.flat(), InvalidInput, "depthwise_tconv3: shape mismatch");
  int oh = tconv_out_size(in.h, 3, sh, 1, oph), ow = tconv_out_size(in.w, 3, sw, 1, opw);
  ImgShape os{in.c, oh, ow};
  if (out_shape) *out_shape = os;
  Eigen::Index B = xv.cols();
  MatX<T> out = MatX<T>::Zero(os.flat(), B);
  const MatX<T>& wv = g.val(W);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < in.c; ++c) {
      const T* xp = xv.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
      T* op = out.col(b).data() + static_cast<Eigen::Index>(c) * oh * ow;
      for (int y = 0; y < in.h; ++y)
        for (int xo = 0; xo < in.w; ++xo) {
          T xi = xp[y * in.w + xo];
          if (xi == T(0)) continue;
          for (int kh = 0; kh < 3; ++kh) {
            int oy = y * sh - 1 + kh;
            if (oy < 0 || oy >= oh) continue;
            for (int kw = 0; kw < 3; ++kw) {
              int ox = xo * sw - 1 + kw;
              if (ox < 0 || ox >= ow) continue;
              op[oy * ow + ox] += xi * wv(c, kh * 3 + kw);
            }
          }
        }
    }
  return g.custom({W.i, x.i}, std::move(out),
                  [W, x, in, os, sh, sw](Graph<T>& g2, typename Graph<T>::Node& self) {
                    const MatX<T>& xv2 = g2.val(x);
                    const MatX<T>& wv2 = g2.val(W);
                    Eigen::Index B2 = xv2.cols();
                    MatX<T> gW = MatX<T>::Zero(in.c, 9);
                    MatX<T> gx = MatX<T>::Zero(xv2.rows(), B2);
                    for (Eigen::Index b = 0; b < B2; ++b)
                      for (int c = 0; c < in.c; ++c) {
                        const T* xp = xv2.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
                        T* gxp = gx.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
                        const T* gop =
                            self.grad.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
                        for (int y = 0; y < in.h; ++y)
                          for (int xo = 0; xo < in.w; ++xo) {
                            T xi = xp[y * in.w + xo];
                            T gacc = T(0);
                            for (int kh = 0; kh < 3; ++kh) {
                              int oy = y * sh - 1 + kh;
                              if (oy < 0 || oy >= os.h) continue;
                              for (int kw = 0; kw < 3; ++kw) {
                                int ox = xo * sw - 1 + kw;
                                if (ox < 0 || ox >= os.w) continue;
                                T go = gop[oy * os.w + ox];
                                gacc += go * wv2(c, kh * 3 + kw);
                                gW(c, kh * 3 + kw) += go * xi;
                              }
                            }
                            gxp[y * in.w + xo] += gacc;
                          }
                      }
                    g2.accum(W.i, gW);
                    g2.accum(x.i, gx);
                  });
}

// 2x2 average pool, stride 2 (even input dims).
template <class T>
Var avgpool2(Graph<T>& g, Var x, ImgShape in, ImgShape* out_shape) {
  SAGA_REQUIRE(in.h % 2 == 0 && in.w % 2 == 0, InvalidInput, "avgpool2: dims must be even");
  ImgShape os{in.c, in.h / 2, in.w / 2};
  if (out_shape) *out_shape = os;
  const MatX<T>& xv = g.val(x);
  Eigen::Index B = xv.cols();
  MatX<T> out(os.flat(), B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < in.c; ++c) {
      const T* xp = xv.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
      T* op = out.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo)
          op[y * os.w + xo] = T(0.25) * (xp[(2 * y) * in.w + 2 * xo] +
                                         xp[(2 * y) * in.w + 2 * xo + 1] +
                                         xp[(2 * y + 1) * in.w + 2 * xo] +
                                         xp[(2 * y + 1) * in.w + 2 * xo + 1]);
    }
  return g.custom({x.i}, std::move(out), [x, in, os](Graph<T>& g2, typename Graph<T>::Node& self) {
    const MatX<T>& xv2 = g2.val(x);
    Eigen::Index B2 = xv2.cols();
    MatX<T> gx(xv2.rows(), B2);
    for (Eigen::Index b = 0; b < B2; ++b)
      for (int c = 0; c < in.c; ++c) {
        T* gxp = gx.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
        const T* gop = self.grad.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
        for (int y = 0; y < os.h; ++y)
          for (int xo = 0; xo < os.w; ++xo) {
            T q = T(0.25) * gop[y * os.w + xo];
            gxp[(2 * y) * in.w + 2 * xo] = q;
            gxp[(2 * y) * in.w + 2 * xo + 1] = q;
            gxp[(2 * y + 1) * in.w + 2 * xo] = q;
            gxp[(2 * y + 1) * in.w + 2 * xo + 1] = q;
          }
      }
    g2.accum(x.i, gx);
  });
}

// Nearest-neighbor 2x upsample.
template <class T>
Var upsample2(Graph<T>& g, Var x, ImgShape in, ImgShape* out_shape) {
  ImgShape os{in.c, in.h * 2, in.w * 2};
  if (out_shape) *out_shape = os;
  const MatX<T>& xv = g.val(x);
  Eigen::Index B = xv.cols();
  MatX<T> out(os.flat(), B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int c = 0; c < in.c; ++c) {
      const T* xp = xv.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
      T* op = out.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo) op[y * os.w + xo] = xp[(y / 2) * in.w + (xo / 2)];
    }
  return g.custom({x.i}, std::move(out), [x, in, os](Graph<T>& g2, typename Graph<T>::Node& self) {
    const MatX<T>& xv2 = g2.val(x);
    Eigen::Index B2 = xv2.cols();
    MatX<T> gx = MatX<T>::Zero(xv2.rows(), B2);
    for (Eigen::Index b = 0; b < B2; ++b)
      for (int c = 0; c < in.c; ++c) {
        T* gxp = gx.col(b).data() + static_cast<Eigen::Index>(c) * in.h * in.w;
        const T* gop = self.grad.col(b).data() + static_cast<Eigen::Index>(c) * os.h * os.w;
        for (int y = 0; y < os.h; ++y)
          for (int xo = 0; xo < os.w; ++xo) gxp[(y / 2) * in.w + (xo / 2)] += gop[y * os.w + xo];
      }
    g2.accum(x.i, gx);
  });
}

}  // namespace saga::ad
