#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "balltrain/gemm.hpp"
#include "balltrain/tensor.hpp"

namespace balltrain {

enum class Reduction { Mean, Sum };

// Reverse-mode tape. One forward/backward pair per instance; single
// threaded by contract. Every op records its value and a closure that
// scatters the upstream gradient to its inputs; backward() replays the
// closures in reverse creation order, so each node is visited exactly once.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor<T> v, bool needs_grad = true) {
    return push(std::move(v), nullptr, needs_grad);
  }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }

  // ---- primitives ----

  Var matmul(Var a, Var b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0])
      throw DimensionError("matmul: incompatible shapes " + shape_str(ta.shape) +
                           " and " + shape_str(tb.shape));
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor<T> out({m, n});
    gemm_nn(m, n, k, ta.data.data(), tb.data.data(), out.data.data());
    return push(std::move(out), [this, a, b, m, k, n](const Tensor<T>& g, int) {
      if (wants_grad(a))
        gemm_nt(m, k, n, g.data.data(), value(b).data.data(),
                grad_buf(a).data.data(), true);
      if (wants_grad(b))
        gemm_tn(k, n, m, value(a).data.data(), g.data.data(),
                grad_buf(b).data.data(), true);
    });
  }

  // y = x * w^T + bias, x: [B x n], w: [m x n], bias: [m] -> [B x m]
  Var linear(Var x, Var w, Var bias) {
    const Tensor<T>& tx = value(x);
    const Tensor<T>& tw = value(w);
    const Tensor<T>& tb = value(bias);
    if (tx.ndim() != 2 || tw.ndim() != 2 || tx.shape[1] != tw.shape[1] ||
        tb.numel() != tw.shape[0])
      throw DimensionError("linear: incompatible shapes " + shape_str(tx.shape) +
                           ", " + shape_str(tw.shape) + ", " + shape_str(tb.shape));
    const std::size_t B = tx.shape[0], n = tx.shape[1], m = tw.shape[0];
    Tensor<T> out({B, m});
    gemm_nt(B, m, n, tx.data.data(), tw.data.data(), out.data.data());
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += tb.data[j];
    return push(std::move(out), [this, x, w, bias, B, n, m](const Tensor<T>& g, int) {
      if (wants_grad(x))
        gemm_nn(B, n, m, g.data.data(), value(w).data.data(),
                grad_buf(x).data.data(), true);
      if (wants_grad(w))
        gemm_tn(m, n, B, g.data.data(), value(x).data.data(),
                grad_buf(w).data.data(), true);
      if (wants_grad(bias)) {
        Tensor<T>& gb = grad_buf(bias);
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t j = 0; j < m; ++j) gb.data[j] += g.data[i * m + j];
      }
    });
  }

  // Valid cross-correlation, stride 1. input: [B x C x H x W] (or [C x H x W],
  // treated as B = 1), kernels: [O x C x KH x KW], bias: [O].
  Var conv2d(Var input, Var kernels, Var bias) {
    const Tensor<T>& tin = value(input);
    const Tensor<T>& tk = value(kernels);
    const Tensor<T>& tb = value(bias);
    if (tk.ndim() != 4) throw DimensionError("conv2d: kernels must be 4-d");
    Shape in_shape = tin.shape;
    bool batched = (in_shape.size() == 4);
    if (!batched) {
      if (in_shape.size() != 3) throw DimensionError("conv2d: input must be 3-d or 4-d");
      in_shape.insert(in_shape.begin(), 1);
    }
    const std::size_t B = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    const std::size_t O = tk.shape[0], KH = tk.shape[2], KW = tk.shape[3];
    if (tk.shape[1] != C)
      throw DimensionError("conv2d: kernel channels " + std::to_string(tk.shape[1]) +
                           " != input channels " + std::to_string(C));
    if (H < KH || W < KW)
      throw DimensionError("conv2d: input " + shape_str(tin.shape) +
                           " smaller than kernel " + shape_str(tk.shape));
    if (tb.numel() != O) throw DimensionError("conv2d: bias size != out channels");
    const std::size_t Ho = H - KH + 1, Wo = W - KW + 1;
    const std::size_t R = C * KH * KW;      // col rows
    const std::size_t Ncol = B * Ho * Wo;   // col cols

    std::vector<T> col(R * Ncol);
    im2col(tin.data.data(), B, C, H, W, KH, KW, Ho, Wo, col.data());

    // out_mat [O x Ncol] = kernels [O x R] * col
    std::vector<T> out_mat(O * Ncol);
    gemm_nn(O, Ncol, R, tk.data.data(), col.data(), out_mat.data());

    Shape out_shape = batched ? Shape{B, O, Ho, Wo} : Shape{O, Ho, Wo};
    Tensor<T> out(out_shape);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) {
        const T bv = tb.data[o];
        const T* src = out_mat.data() + o * Ncol + b * Ho * Wo;
        T* dst = out.data.data() + (b * O + o) * Ho * Wo;
        for (std::size_t p = 0; p < Ho * Wo; ++p) dst[p] = src[p] + bv;
      }

    return push(std::move(out),
                [this, input, kernels, bias, B, C, H, W, O, KH, KW, Ho, Wo, R, Ncol,
                 col = std::move(col)](const Tensor<T>& g, int) {
      // gather upstream grad into [O x Ncol]
      std::vector<T> g_mat(O * Ncol);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
          const T* src = g.data.data() + (b * O + o) * Ho * Wo;
          T* dst = g_mat.data() + o * Ncol + b * Ho * Wo;
          for (std::size_t p = 0; p < Ho * Wo; ++p) dst[p] = src[p];
        }
      if (wants_grad(kernels))
        gemm_nt(O, R, Ncol, g_mat.data(), col.data(),
                grad_buf(kernels).data.data(), true);
      if (wants_grad(bias)) {
        Tensor<T>& gb = grad_buf(bias);
        for (std::size_t o = 0; o < O; ++o) {
          T s = 0;
          const T* row = g_mat.data() + o * Ncol;
          for (std::size_t p = 0; p < Ncol; ++p) s += row[p];
          gb.data[o] += s;
        }
      }
      if (wants_grad(input)) {
        std::vector<T> dcol(R * Ncol);
        gemm_tn(R, Ncol, O, value(kernels).data.data(), g_mat.data(), dcol.data());
        col2im(dcol.data(), B, C, H, W, KH, KW, Ho, Wo,
               grad_buf(input).data.data());
      }
    });
  }

  Var relu(Var x) {
    Tensor<T> out = value(x);
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    return push(std::move(out), [this, x](const Tensor<T>& g, int self) {
      if (!wants_grad(x)) return;
      Tensor<T>& gx = grad_buf(x);
      const Tensor<T>& tx = value(x);
      // subgradient at 0 is 0
      for (std::size_t i = 0; i < gx.numel(); ++i)
        if (tx.data[i] > T(0)) gx.data[i] += g.data[i];
      (void)self;
    });
  }

  // 2x2 window, stride 2, no padding; H and W must be even.
  // Tie-break: first cell in scan order.
  Var maxpool2d(Var x) {
    const Tensor<T>& tx = value(x);
    Shape in_shape = tx.shape;
    bool batched = (in_shape.size() == 4);
    if (!batched) {
      if (in_shape.size() != 3) throw DimensionError("maxpool2d: input must be 3-d or 4-d");
      in_shape.insert(in_shape.begin(), 1);
    }
    const std::size_t B = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    if (H % 2 != 0 || W % 2 != 0)
      throw DimensionError("maxpool2d: H and W must be even, got " + shape_str(tx.shape));
    const std::size_t Ho = H / 2, Wo = W / 2;
    Shape out_shape = batched ? Shape{B, C, Ho, Wo} : Shape{C, Ho, Wo};
    Tensor<T> out(out_shape);
    std::vector<std::size_t> argmax(out.numel());
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T* plane = tx.data.data() + bc * H * W;
      T* oplane = out.data.data() + bc * Ho * Wo;
      std::size_t* aplane = argmax.data() + bc * Ho * Wo;
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xo = 0; xo < Wo; ++xo) {
          std::size_t base = (2 * y) * W + 2 * xo;
          std::size_t idx[4] = {base, base + 1, base + W, base + W + 1};
          std::size_t best = idx[0];
          T bv = plane[idx[0]];
          for (int t = 1; t < 4; ++t)
            if (plane[idx[t]] > bv) {
              bv = plane[idx[t]];
              best = idx[t];
            }
          oplane[y * Wo + xo] = bv;
          aplane[y * Wo + xo] = bc * H * W + best;
        }
    }
    return push(std::move(out),
                [this, x, argmax = std::move(argmax)](const Tensor<T>& g, int) {
      if (!wants_grad(x)) return;
      Tensor<T>& gx = grad_buf(x);
      for (std::size_t i = 0; i < g.numel(); ++i) gx.data[argmax[i]] += g.data[i];
    });
  }

  Var reshape(Var x, Shape s) {
    const Tensor<T>& tx = value(x);
    if (shape_numel(s) != tx.numel())
      throw DimensionError("reshape: numel mismatch " + shape_str(tx.shape) +
                           " -> " + shape_str(s));
    Tensor<T> out(std::move(s), tx.data);
    return push(std::move(out), [this, x](const Tensor<T>& g, int) {
      if (!wants_grad(x)) return;
      Tensor<T>& gx = grad_buf(x);
      for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
    });
  }

  // logits: [B x M], labels in [0, M). Returns a scalar.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels,
                            Reduction red = Reduction::Mean) {
    const Tensor<T>& tl = value(logits);
    if (tl.ndim() != 2) throw DimensionError("softmax_cross_entropy: logits must be 2-d");
    const std::size_t B = tl.shape[0], M = tl.shape[1];
    if (labels.size() != B)
      throw ValidationError("softmax_cross_entropy: batch " + std::to_string(B) +
                            " but " + std::to_string(labels.size()) + " labels");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= M)
        throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(M) + ")");
    std::vector<T> probs(B * M);
    T total = 0;
    for (std::size_t i = 0; i < B; ++i) {
      const T* row = tl.data.data() + i * M;
      T mx = row[0];
      for (std::size_t j = 1; j < M; ++j) mx = std::max(mx, row[j]);
      T z = 0;
      for (std::size_t j = 0; j < M; ++j) {
        probs[i * M + j] = std::exp(row[j] - mx);
        z += probs[i * M + j];
      }
      for (std::size_t j = 0; j < M; ++j) probs[i * M + j] /= z;
      total += -std::log(probs[i * M + labels[i]]);
    }
    if (red == Reduction::Mean) total /= static_cast<T>(B);
    return push(Tensor<T>::scalar(total),
                [this, logits, labels, B, M, red, probs = std::move(probs)](
                    const Tensor<T>& g, int) {
      if (!wants_grad(logits)) return;
      Tensor<T>& gl = grad_buf(logits);
      const T scale = g.data[0] * (red == Reduction::Mean ? T(1) / static_cast<T>(B) : T(1));
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < M; ++j) {
          T p = probs[i * M + j];
          if (static_cast<std::size_t>(labels[i]) == j) p -= T(1);
          gl.data[i * M + j] += scale * p;
        }
    });
  }

  Var add(Var a, Var b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (!ta.same_shape(tb))
      throw DimensionError("add: shapes " + shape_str(ta.shape) + " vs " +
                           shape_str(tb.shape));
    Tensor<T> out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), [this, a, b](const Tensor<T>& g, int) {
      for (Var v : {a, b}) {
        if (!wants_grad(v)) continue;
        Tensor<T>& gv = grad_buf(v);
        for (std::size_t i = 0; i < g.numel(); ++i) gv.data[i] += g.data[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (!ta.same_shape(tb))
      throw DimensionError("mul: shapes " + shape_str(ta.shape) + " vs " +
                           shape_str(tb.shape));
    Tensor<T> out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), [this, a, b](const Tensor<T>& g, int) {
      if (wants_grad(a)) {
        Tensor<T>& ga = grad_buf(a);
        for (std::size_t i = 0; i < g.numel(); ++i)
          ga.data[i] += g.data[i] * value(b).data[i];
      }
      if (wants_grad(b)) {
        Tensor<T>& gb = grad_buf(b);
        for (std::size_t i = 0; i < g.numel(); ++i)
          gb.data[i] += g.data[i] * value(a).data[i];
      }
    });
  }

  Var scale(Var a, T c) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v *= c;
    return push(std::move(out), [this, a, c](const Tensor<T>& g, int) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_buf(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += c * g.data[i];
    });
  }

  // left-to-right flat order; fixed so repeated runs are bit-identical
  Var sum(Var a) {
    const Tensor<T>& ta = value(a);
    T s = 0;
    for (T v : ta.data) s += v;
    return push(Tensor<T>::scalar(s), [this, a](const Tensor<T>& g, int) {
      if (!wants_grad(a)) return;
      Tensor<T>& ga = grad_buf(a);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g.data[0];
    });
  }

  // ---- backward ----

  void backward(Var loss) {
    if (value(loss).numel() != 1)
      throw ValidationError("backward: loss must be a scalar, got shape " +
                            shape_str(value(loss).shape));
    for (auto& n : nodes_) {
      n.grad = Tensor<T>(n.value.shape);  // zeros
    }
    nodes_[loss.id].grad.data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      if (nodes_[i].back) nodes_[i].back(nodes_[i].grad, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(const Tensor<T>&, int)> back;
    bool needs_grad = true;
  };

  Var push(Tensor<T> v, std::function<void(const Tensor<T>&, int)> back,
           bool needs_grad = true) {
    Node n;
    n.value = std::move(v);
    n.back = std::move(back);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  bool wants_grad(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor<T>& grad_buf(Var v) { return nodes_[v.id].grad; }

  static void im2col(const T* in, std::size_t B, std::size_t C, std::size_t H,
                     std::size_t W, std::size_t KH, std::size_t KW, std::size_t Ho,
                     std::size_t Wo, T* col) {
    const std::size_t Ncol = B * Ho * Wo;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t u = 0; u < KH; ++u)
        for (std::size_t v = 0; v < KW; ++v) {
          T* crow = col + ((c * KH + u) * KW + v) * Ncol;
          for (std::size_t b = 0; b < B; ++b) {
            const T* plane = in + (b * C + c) * H * W;
            for (std::size_t y = 0; y < Ho; ++y) {
              const T* src = plane + (y + u) * W + v;
              T* dst = crow + (b * Ho + y) * Wo;
              for (std::size_t xo = 0; xo < Wo; ++xo) dst[xo] = src[xo];
            }
          }
        }
  }

  static void col2im(const T* col, std::size_t B, std::size_t C, std::size_t H,
                     std::size_t W, std::size_t KH, std::size_t KW, std::size_t Ho,
                     std::size_t Wo, T* out) {
    const std::size_t Ncol = B * Ho * Wo;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t u = 0; u < KH; ++u)
        for (std::size_t v = 0; v < KW; ++v) {
          const T* crow = col + ((c * KH + u) * KW + v) * Ncol;
          for (std::size_t b = 0; b < B; ++b) {
            T* plane = out + (b * C + c) * H * W;
            for (std::size_t y = 0; y < Ho; ++y) {
              T* dst = plane + (y + u) * W + v;
              const T* src = crow + (b * Ho + y) * Wo;
              for (std::size_t xo = 0; xo < Wo; ++xo) dst[xo] += src[xo];
            }
          }
        }
  }

  std::vector<Node> nodes_;
};

// Central finite-difference gradient check at 64-bit.
//
// f builds a scalar-valued graph from a leaf; it is called many times with
// perturbed copies of `point`, so it must be a pure function of its input.
// Returns max over coordinates of |analytic - fd| / max(1, |analytic|).
// Any NaN on either side is reported as a huge error.
template <typename F>
double grad_check(F&& f, const Tensor<double>& point, double h = 1e-5) {
  Tensor<double> analytic;
  {
    Tape<double> tape;
    auto x = tape.leaf(point);
    auto loss = f(tape, x);
    tape.backward(loss);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor<double>& p) {
    Tape<double> tape;
    auto x = tape.leaf(p, false);
    auto loss = f(tape, x);
    return tape.value(loss).data[0];
  };
  double max_err = 0.0;
  Tensor<double> p = point;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double orig = p.data[i];
    p.data[i] = orig + h;
    const double fp = eval(p);
    p.data[i] = orig - h;
    const double fm = eval(p);
    p.data[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic.data[i];
    if (!std::isfinite(fd) || !std::isfinite(an)) return 1e30;
    const double err = std::abs(an - fd) / std::max(1.0, std::abs(an));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace balltrain
