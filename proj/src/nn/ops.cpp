#include "uadrs/nn/ops.hpp"

#include <cmath>
#include <utility>

namespace uadrs::nn {

namespace {

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || p->requires_grad;
  }
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

void accumulate(Var& p, const Tensor& contribution) {
  if (!p->requires_grad) return;
  Tensor& g = p->ensure_grad();
  g.as_vector() += contribution.as_vector();
}

// Class-dim view: logits are [N,C] (spatial=1) or [N,C,H,W] (spatial=H*W).
struct ClassView {
  int64_t n;
  int c;
  int64_t spatial;
  int64_t units() const { return n * spatial; }
  int64_t idx(int64_t unit, int cls) const {
    int64_t sample = unit / spatial, s = unit % spatial;
    return (sample * c + cls) * spatial + s;
  }
};

ClassView class_view(const Tensor& t) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 4)
    return {t.dim(0), t.dim(1), static_cast<int64_t>(t.dim(2)) * t.dim(3)};
  throw ShapeError("expected [N,C] or [N,C,H,W] logits, got " + t.shape_str());
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor y = a->value;
  y.as_vector() += b->value.as_vector();
  return make_result(std::move(y), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate(self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor y = a->value;
  y.as_vector() -= b->value.as_vector();
  return make_result(std::move(y), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->ensure_grad();
      g.as_vector() -= self.grad.as_vector();
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor y = a->value;
  y.as_vector().array() *= b->value.as_vector().array();
  return make_result(std::move(y), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->ensure_grad();
      g.as_vector().array() +=
          self.grad.as_vector().array() *
          self.parents[1]->value.as_vector().array();
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->ensure_grad();
      g.as_vector().array() +=
          self.grad.as_vector().array() *
          self.parents[0]->value.as_vector().array();
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor y = a->value;
  y.as_vector() *= s;
  return make_result(std::move(y), {a}, [s](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->ensure_grad();
      g.as_vector() += s * self.grad.as_vector();
    }
  });
}

Var add_scalar(const Var& a, float c) {
  Tensor y = a->value;
  y.as_vector().array() += c;
  return make_result(std::move(y), {a}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 ||
      a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: incompatible " + a->value.shape_str() + " x " +
                     b->value.shape_str());
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor y({m, n});
  y.as_matrix(m, n).noalias() =
      a->value.as_matrix(m, k) * b->value.as_matrix(k, n);
  return make_result(std::move(y), {a, b}, [m, k, n](Node& self) {
    auto gy = self.grad.as_matrix(m, n);
    if (self.parents[0]->requires_grad) {
      Tensor& ga = self.parents[0]->ensure_grad();
      ga.as_matrix(m, k).noalias() +=
          gy * self.parents[1]->value.as_matrix(k, n).transpose();
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gb = self.parents[1]->ensure_grad();
      gb.as_matrix(k, n).noalias() +=
          self.parents[0]->value.as_matrix(m, k).transpose() * gy;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 ||
      x->value.dim(1) != w->value.dim(1))
    throw ShapeError("linear: incompatible " + x->value.shape_str() + " and " +
                     w->value.shape_str());
  const int n = x->value.dim(0), in = x->value.dim(1), out = w->value.dim(0);
  if (b->value.size() != out) throw ShapeError("linear: bias size mismatch");
  Tensor y({n, out});
  y.as_matrix(n, out).noalias() =
      x->value.as_matrix(n, in) * w->value.as_matrix(out, in).transpose();
  y.as_matrix(n, out).rowwise() += b->value.as_vector().transpose();
  return make_result(std::move(y), {x, w, b}, [n, in, out](Node& self) {
    auto gy = self.grad.as_matrix(n, out);
    if (self.parents[0]->requires_grad) {
      Tensor& gx = self.parents[0]->ensure_grad();
      gx.as_matrix(n, in).noalias() +=
          gy * self.parents[1]->value.as_matrix(out, in);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gw = self.parents[1]->ensure_grad();
      gw.as_matrix(out, in).noalias() +=
          gy.transpose() * self.parents[0]->value.as_matrix(n, in);
    }
    if (self.parents[2]->requires_grad) {
      Tensor& gb = self.parents[2]->ensure_grad();
      gb.as_vector() += gy.colwise().sum().transpose();
    }
  });
}

Var relu(const Var& x) {
  Tensor y = x->value;
  y.as_vector() = y.as_vector().cwiseMax(0.0f);
  return make_result(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    const Tensor& v = self.parents[0]->value;
    for (int64_t i = 0; i < v.size(); ++i)
      if (v[i] > 0.0f) gx[i] += self.grad[i];
  });
}

Var silu(const Var& x) {
  Tensor y = x->value;
  for (int64_t i = 0; i < y.size(); ++i) {
    float s = 1.0f / (1.0f + std::exp(-y[i]));
    y[i] = y[i] * s;
  }
  return make_result(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    const Tensor& v = self.parents[0]->value;
    for (int64_t i = 0; i < v.size(); ++i) {
      float s = 1.0f / (1.0f + std::exp(-v[i]));
      gx[i] += self.grad[i] * (s * (1.0f + v[i] * (1.0f - s)));
    }
  });
}

Var reshape(const Var& x, const std::vector<int>& shape) {
  Tensor y(shape);
  if (y.size() != x->value.size())
    throw ShapeError("reshape from " + x->value.shape_str() + " to " +
                     y.shape_str() + " changes element count");
  std::copy(x->value.data(), x->value.data() + y.size(), y.data());
  return make_result(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// --- Convolution -----------------------------------------------------------

namespace {

struct ConvDims {
  int n, ci, h, w, co, kh, kw, stride, pad, oh, ow;
  int64_t k() const { return static_cast<int64_t>(ci) * kh * kw; }
  int64_t r() const { return static_cast<int64_t>(n) * oh * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d expects rank-4 input and kernel");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " != kernel channels " + std::to_string(w.dim(1)));
  ConvDims d;
  d.n = x.dim(0), d.ci = x.dim(1), d.h = x.dim(2), d.w = x.dim(3);
  d.co = w.dim(0), d.kh = w.dim(2), d.kw = w.dim(3);
  d.stride = stride, d.pad = pad;
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d: empty output");
  return d;
}

// col layout [K, R]: one row per (ci,ky,kx), one column per (n,oh,ow).
void im2col(const Tensor& x, const ConvDims& d, Tensor& col) {
  const int64_t R = d.r();
  const float* xd = x.data();
  float* cd = col.data();
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const int64_t crow = (static_cast<int64_t>(ci) * d.kh + ky) * d.kw + kx;
        float* crow_ptr = cd + crow * R;
        for (int n = 0; n < d.n; ++n) {
          const float* xplane =
              xd + (static_cast<int64_t>(n) * d.ci + ci) * d.h * d.w;
          for (int oh = 0; oh < d.oh; ++oh) {
            const int iy = oh * d.stride + ky - d.pad;
            float* out =
                crow_ptr + (static_cast<int64_t>(n) * d.oh + oh) * d.ow;
            if (iy < 0 || iy >= d.h) {
              std::fill(out, out + d.ow, 0.0f);
              continue;
            }
            const float* xrow = xplane + static_cast<int64_t>(iy) * d.w;
            for (int ow = 0; ow < d.ow; ++ow) {
              const int ix = ow * d.stride + kx - d.pad;
              out[ow] = (ix >= 0 && ix < d.w) ? xrow[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_accumulate(const Tensor& col, const ConvDims& d, Tensor& gx) {
  const int64_t R = d.r();
  const float* cd = col.data();
  float* gxd = gx.data();
  for (int ci = 0; ci < d.ci; ++ci) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const int64_t crow = (static_cast<int64_t>(ci) * d.kh + ky) * d.kw + kx;
        const float* crow_ptr = cd + crow * R;
        for (int n = 0; n < d.n; ++n) {
          float* gplane =
              gxd + (static_cast<int64_t>(n) * d.ci + ci) * d.h * d.w;
          for (int oh = 0; oh < d.oh; ++oh) {
            const int iy = oh * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.h) continue;
            const float* in =
                crow_ptr + (static_cast<int64_t>(n) * d.oh + oh) * d.ow;
            float* grow = gplane + static_cast<int64_t>(iy) * d.w;
            for (int ow = 0; ow < d.ow; ++ow) {
              const int ix = ow * d.stride + kx - d.pad;
              if (ix >= 0 && ix < d.w) grow[ix] += in[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const ConvDims d = conv_dims(x->value, w->value, stride, pad);
  if (b->value.size() != d.co) throw ShapeError("conv2d: bias size mismatch");
  const int64_t K = d.k(), R = d.r();

  Tensor col({static_cast<int>(K), static_cast<int>(R)});
  im2col(x->value, d, col);
  Tensor out({static_cast<int>(d.co), static_cast<int>(R)});
  out.as_matrix(d.co, R).noalias() =
      w->value.as_matrix(d.co, K) * col.as_matrix(K, R);

  Tensor y({d.n, d.co, d.oh, d.ow});
  {
    const float* om = out.data();
    const float* bias = b->value.data();
    float* yd = y.data();
    const int64_t plane = static_cast<int64_t>(d.oh) * d.ow;
    for (int co = 0; co < d.co; ++co) {
      const float* orow = om + co * R;
      for (int n = 0; n < d.n; ++n) {
        float* dst = yd + (static_cast<int64_t>(n) * d.co + co) * plane;
        const float* src = orow + static_cast<int64_t>(n) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bias[co];
      }
    }
  }

  return make_result(std::move(y), {x, w, b}, [d, K, R](Node& self) {
    // Gather upstream into [Co, R].
    Tensor gyMat({static_cast<int>(d.co), static_cast<int>(R)});
    {
      const float* gy = self.grad.data();
      float* gm = gyMat.data();
      const int64_t plane = static_cast<int64_t>(d.oh) * d.ow;
      for (int co = 0; co < d.co; ++co) {
        float* grow = gm + co * R;
        for (int n = 0; n < d.n; ++n) {
          const float* src = gy + (static_cast<int64_t>(n) * d.co + co) * plane;
          float* dst = grow + static_cast<int64_t>(n) * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
      }
    }
    const Var& xv = self.parents[0];
    const Var& wv = self.parents[1];
    const Var& bv = self.parents[2];

    if (bv->requires_grad) {
      Tensor& gb = bv->ensure_grad();
      gb.as_vector() += gyMat.as_matrix(d.co, R).rowwise().sum();
    }
    if (wv->requires_grad) {
      Tensor col({static_cast<int>(K), static_cast<int>(R)});
      im2col(xv->value, d, col);
      Tensor& gw = wv->ensure_grad();
      gw.as_matrix(d.co, K).noalias() +=
          gyMat.as_matrix(d.co, R) * col.as_matrix(K, R).transpose();
    }
    if (xv->requires_grad) {
      Tensor dcol({static_cast<int>(K), static_cast<int>(R)});
      dcol.as_matrix(K, R).noalias() =
          wv->value.as_matrix(d.co, K).transpose() * gyMat.as_matrix(d.co, R);
      Tensor& gx = xv->ensure_grad();
      col2im_accumulate(dcol, d, gx);
    }
  });
}

Var avg_pool2d(const Var& x) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw ShapeError("avg_pool2d expects [N,C,H,W]");
  const int n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2d: odd spatial size");
  const int oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const float* src = v.data() + p * h * w;
    float* dst = y.data() + p * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        dst[i * ow + j] =
            0.25f * (src[(2 * i) * w + 2 * j] + src[(2 * i) * w + 2 * j + 1] +
                     src[(2 * i + 1) * w + 2 * j] +
                     src[(2 * i + 1) * w + 2 * j + 1]);
  }
  return make_result(std::move(y), {x}, [n, c, h, w, oh, ow](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
      const float* g = self.grad.data() + p * oh * ow;
      float* dst = gx.data() + p * h * w;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const float v4 = 0.25f * g[i * ow + j];
          dst[(2 * i) * w + 2 * j] += v4;
          dst[(2 * i) * w + 2 * j + 1] += v4;
          dst[(2 * i + 1) * w + 2 * j] += v4;
          dst[(2 * i + 1) * w + 2 * j + 1] += v4;
        }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw ShapeError("global_avg_pool expects [N,C,H,W]");
  const int n = v.dim(0), c = v.dim(1);
  const int64_t plane = static_cast<int64_t>(v.dim(2)) * v.dim(3);
  Tensor y({n, c});
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    double acc = 0.0;
    const float* src = v.data() + p * plane;
    for (int64_t i = 0; i < plane; ++i) acc += src[i];
    y[p] = static_cast<float>(acc / static_cast<double>(plane));
  }
  return make_result(std::move(y), {x}, [n, c, plane](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    const float inv = 1.0f / static_cast<float>(plane);
    for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
      const float g = self.grad[p] * inv;
      float* dst = gx.data() + p * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] += g;
    }
  });
}

Var upsample_nearest2(const Var& x) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw ShapeError("upsample expects [N,C,H,W]");
  const int n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const float* src = v.data() + p * h * w;
    float* dst = y.data() + p * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const float s = src[i * w + j];
        dst[(2 * i) * 2 * w + 2 * j] = s;
        dst[(2 * i) * 2 * w + 2 * j + 1] = s;
        dst[(2 * i + 1) * 2 * w + 2 * j] = s;
        dst[(2 * i + 1) * 2 * w + 2 * j + 1] = s;
      }
  }
  return make_result(std::move(y), {x}, [n, c, h, w](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
      const float* g = self.grad.data() + p * 4 * h * w;
      float* dst = gx.data() + p * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          dst[i * w + j] += g[(2 * i) * 2 * w + 2 * j] +
                            g[(2 * i) * 2 * w + 2 * j + 1] +
                            g[(2 * i + 1) * 2 * w + 2 * j] +
                            g[(2 * i + 1) * 2 * w + 2 * j + 1];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& va = a->value;
  const Tensor& vb = b->value;
  if (va.rank() != 4 || vb.rank() != 4 || va.dim(0) != vb.dim(0) ||
      va.dim(2) != vb.dim(2) || va.dim(3) != vb.dim(3))
    throw ShapeError("concat_channels: incompatible " + va.shape_str() +
                     " and " + vb.shape_str());
  const int n = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
  const int64_t plane = static_cast<int64_t>(va.dim(2)) * va.dim(3);
  Tensor y({n, ca + cb, va.dim(2), va.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy(va.data() + static_cast<int64_t>(i) * ca * plane,
              va.data() + static_cast<int64_t>(i + 1) * ca * plane,
              y.data() + static_cast<int64_t>(i) * (ca + cb) * plane);
    std::copy(vb.data() + static_cast<int64_t>(i) * cb * plane,
              vb.data() + static_cast<int64_t>(i + 1) * cb * plane,
              y.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane);
  }
  return make_result(std::move(y), {a, b}, [n, ca, cb, plane](Node& self) {
    for (int i = 0; i < n; ++i) {
      const float* g =
          self.grad.data() + static_cast<int64_t>(i) * (ca + cb) * plane;
      if (self.parents[0]->requires_grad) {
        float* ga = self.parents[0]->ensure_grad().data() +
                    static_cast<int64_t>(i) * ca * plane;
        for (int64_t j = 0; j < ca * plane; ++j) ga[j] += g[j];
      }
      if (self.parents[1]->requires_grad) {
        float* gb = self.parents[1]->ensure_grad().data() +
                    static_cast<int64_t>(i) * cb * plane;
        for (int64_t j = 0; j < cb * plane; ++j) gb[j] += g[ca * plane + j];
      }
    }
  });
}

Var permute_samples(const Var& x, const std::vector<int>& perm) {
  const Tensor& v = x->value;
  if (v.rank() < 1 || static_cast<int>(perm.size()) != v.dim(0))
    throw ShapeError("permute_samples: need one index per sample");
  const int n = v.dim(0);
  const int64_t per = n == 0 ? 0 : v.size() / n;
  for (int p : perm)
    if (p < 0 || p >= n) throw RangeError("permute_samples: index out of range");
  Tensor y = Tensor::zeros_like(v);
  for (int i = 0; i < n; ++i)
    std::copy(v.data() + perm[static_cast<size_t>(i)] * per,
              v.data() + (perm[static_cast<size_t>(i)] + 1) * per,
              y.data() + i * per);
  return make_result(std::move(y), {x}, [perm, per](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < perm.size(); ++i) {
      const float* g = self.grad.data() + static_cast<int64_t>(i) * per;
      float* dst = gx.data() + static_cast<int64_t>(perm[i]) * per;
      for (int64_t j = 0; j < per; ++j) dst[j] += g[j];
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               float eps) {
  const Tensor& v = x->value;
  if (v.rank() != 4) throw ShapeError("group_norm expects [N,C,H,W]");
  const int n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  if (c % groups != 0) throw ShapeError("group_norm: channels % groups != 0");
  if (gamma->value.size() != c || beta->value.size() != c)
    throw ShapeError("group_norm: affine size mismatch");
  const int cg = c / groups;
  const int64_t m = static_cast<int64_t>(cg) * h * w;

  auto xhat = std::make_shared<Tensor>(std::vector<int>{n, c, h, w});
  auto istd = std::make_shared<Tensor>(std::vector<int>{n, groups});
  Tensor y({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const float* src =
          v.data() + (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * h * w;
      double mean = 0.0;
      for (int64_t j = 0; j < m; ++j) mean += src[j];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t j = 0; j < m; ++j) {
        const double d = src[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
      (*istd)[static_cast<int64_t>(i) * groups + g] = is;
      float* xh = xhat->data() +
                  (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * h * w;
      float* dst =
          y.data() + (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * h * w;
      for (int cc = 0; cc < cg; ++cc) {
        const float ga = gamma->value[static_cast<int64_t>(g) * cg + cc];
        const float be = beta->value[static_cast<int64_t>(g) * cg + cc];
        for (int64_t j = 0; j < static_cast<int64_t>(h) * w; ++j) {
          const int64_t o = static_cast<int64_t>(cc) * h * w + j;
          const float xn = (src[o] - static_cast<float>(mean)) * is;
          xh[o] = xn;
          dst[o] = ga * xn + be;
        }
      }
    }
  }

  return make_result(
      std::move(y), {x, gamma, beta},
      [n, c, h, w, groups, cg, m, xhat, istd](Node& self) {
        const Tensor& g = self.grad;
        const Var& xv = self.parents[0];
        const Var& gav = self.parents[1];
        const Var& bev = self.parents[2];
        const int64_t plane = static_cast<int64_t>(h) * w;

        if (gav->requires_grad || bev->requires_grad) {
          Tensor& gga = gav->ensure_grad();
          Tensor& gbe = bev->ensure_grad();
          for (int cc = 0; cc < c; ++cc) {
            double sg = 0.0, sgx = 0.0;
            for (int i = 0; i < n; ++i) {
              const int64_t base = (static_cast<int64_t>(i) * c + cc) * plane;
              for (int64_t j = 0; j < plane; ++j) {
                sg += g[base + j];
                sgx += g[base + j] * (*xhat)[base + j];
              }
            }
            if (gav->requires_grad) gga[cc] += static_cast<float>(sgx);
            if (bev->requires_grad) gbe[cc] += static_cast<float>(sg);
          }
        }
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (int i = 0; i < n; ++i) {
          for (int gr = 0; gr < groups; ++gr) {
            const int64_t base =
                (static_cast<int64_t>(i) * c + static_cast<int64_t>(gr) * cg) * plane;
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int cc = 0; cc < cg; ++cc) {
              const float ga =
                  self.parents[1]->value[static_cast<int64_t>(gr) * cg + cc];
              for (int64_t j = 0; j < plane; ++j) {
                const int64_t o = base + static_cast<int64_t>(cc) * plane + j;
                const double dxh = static_cast<double>(g[o]) * ga;
                mean_dxh += dxh;
                mean_dxh_xh += dxh * (*xhat)[o];
              }
            }
            mean_dxh /= static_cast<double>(m);
            mean_dxh_xh /= static_cast<double>(m);
            const float is = (*istd)[static_cast<int64_t>(i) * groups + gr];
            for (int cc = 0; cc < cg; ++cc) {
              const float ga =
                  self.parents[1]->value[static_cast<int64_t>(gr) * cg + cc];
              for (int64_t j = 0; j < plane; ++j) {
                const int64_t o = base + static_cast<int64_t>(cc) * plane + j;
                const double dxh = static_cast<double>(g[o]) * ga;
                gx[o] += static_cast<float>(
                    is * (dxh - mean_dxh - (*xhat)[o] * mean_dxh_xh));
              }
            }
          }
        }
      });
}

Var add_channel_map(const Var& x, const Var& v) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4 || v->value.rank() != 2 || v->value.dim(0) != xv.dim(0) ||
      v->value.dim(1) != xv.dim(1))
    throw ShapeError("add_channel_map: incompatible " + xv.shape_str() +
                     " and " + v->value.shape_str());
  const int64_t nc = static_cast<int64_t>(xv.dim(0)) * xv.dim(1);
  const int64_t plane = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
  Tensor y = xv;
  for (int64_t p = 0; p < nc; ++p) {
    float* dst = y.data() + p * plane;
    const float add = v->value[p];
    for (int64_t j = 0; j < plane; ++j) dst[j] += add;
  }
  return make_result(std::move(y), {x, v}, [nc, plane](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor& gv = self.parents[1]->ensure_grad();
      for (int64_t p = 0; p < nc; ++p) {
        double acc = 0.0;
        const float* g = self.grad.data() + p * plane;
        for (int64_t j = 0; j < plane; ++j) acc += g[j];
        gv[p] += static_cast<float>(acc);
      }
    }
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  Tensor y({1});
  y[0] = static_cast<float>(acc);
  return make_result(std::move(y), {x}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    gx.as_vector().array() += self.grad[0];
  });
}

Var mean_all(const Var& x) {
  const int64_t n = x->value.size();
  if (n == 0) throw ShapeError("mean_all on empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x->value[i];
  Tensor y({1});
  y[0] = static_cast<float>(acc / static_cast<double>(n));
  return make_result(std::move(y), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& gx = self.parents[0]->ensure_grad();
    gx.as_vector().array() += self.grad[0] / static_cast<float>(n);
  });
}

Var mse_loss(const Var& pred, const Var& target) {
  check_same_shape(pred->value, target->value, "mse_loss");
  const int64_t n = pred->value.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->value[i]) - target->value[i];
    acc += d * d;
  }
  Tensor y({1});
  y[0] = static_cast<float>(acc / static_cast<double>(n));
  return make_result(std::move(y), {pred, target}, [n](Node& self) {
    const float coef = 2.0f * self.grad[0] / static_cast<float>(n);
    const Tensor& a = self.parents[0]->value;
    const Tensor& b = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] += coef * (a[i] - b[i]);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g[i] -= coef * (a[i] - b[i]);
    }
  });
}

Var softmax_cross_entropy(const Var& logits,
                          const std::vector<int32_t>& labels) {
  const ClassView cv = class_view(logits->value);
  if (static_cast<int64_t>(labels.size()) != cv.units())
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(cv.units()) + " units");
  auto probs = std::make_shared<Tensor>(logits->value.shape());
  double loss = 0.0;
  for (int64_t u = 0; u < cv.units(); ++u) {
    const int32_t y = labels[static_cast<size_t>(u)];
    if (y < 0 || y >= cv.c)
      throw SchemaError("class index " + std::to_string(y) +
                        " outside [0, " + std::to_string(cv.c) + ")");
    float mx = logits->value[cv.idx(u, 0)];
    for (int c = 1; c < cv.c; ++c)
      mx = std::max(mx, logits->value[cv.idx(u, c)]);
    double denom = 0.0;
    for (int c = 0; c < cv.c; ++c)
      denom += std::exp(static_cast<double>(logits->value[cv.idx(u, c)]) - mx);
    const double log_denom = std::log(denom);
    for (int c = 0; c < cv.c; ++c) {
      const double lp =
          static_cast<double>(logits->value[cv.idx(u, c)]) - mx - log_denom;
      (*probs)[cv.idx(u, c)] = static_cast<float>(std::exp(lp));
      if (c == y) loss -= lp;
    }
  }
  Tensor out({1});
  out[0] = static_cast<float>(loss / static_cast<double>(cv.units()));
  return make_result(std::move(out), {logits}, [cv, probs, labels](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->ensure_grad();
    const float coef = self.grad[0] / static_cast<float>(cv.units());
    for (int64_t u = 0; u < cv.units(); ++u) {
      const int32_t y = labels[static_cast<size_t>(u)];
      for (int c = 0; c < cv.c; ++c) {
        const float p = (*probs)[cv.idx(u, c)];
        g[cv.idx(u, c)] += coef * (p - (c == y ? 1.0f : 0.0f));
      }
    }
  });
}

Tensor softmax_probs(const Tensor& logits) {
  const ClassView cv = class_view(logits);
  Tensor p(logits.shape());
  for (int64_t u = 0; u < cv.units(); ++u) {
    float mx = logits[cv.idx(u, 0)];
    for (int c = 1; c < cv.c; ++c) mx = std::max(mx, logits[cv.idx(u, c)]);
    double denom = 0.0;
    for (int c = 0; c < cv.c; ++c)
      denom += std::exp(static_cast<double>(logits[cv.idx(u, c)]) - mx);
    for (int c = 0; c < cv.c; ++c)
      p[cv.idx(u, c)] = static_cast<float>(
          std::exp(static_cast<double>(logits[cv.idx(u, c)]) - mx) / denom);
  }
  return p;
}

Var kl_to_reference(const Tensor& ref_probs, const Var& logits) {
  check_same_shape(ref_probs, logits->value, "kl_to_reference");
  const ClassView cv = class_view(logits->value);
  auto q = std::make_shared<Tensor>(softmax_probs(logits->value));
  double loss = 0.0;
  for (int64_t u = 0; u < cv.units(); ++u) {
    float mx = logits->value[cv.idx(u, 0)];
    for (int c = 1; c < cv.c; ++c)
      mx = std::max(mx, logits->value[cv.idx(u, c)]);
    double denom = 0.0;
    for (int c = 0; c < cv.c; ++c)
      denom += std::exp(static_cast<double>(logits->value[cv.idx(u, c)]) - mx);
    const double log_denom = std::log(denom);
    for (int c = 0; c < cv.c; ++c) {
      const double p = ref_probs[cv.idx(u, c)];
      if (p <= 0.0) continue;
      const double log_q =
          static_cast<double>(logits->value[cv.idx(u, c)]) - mx - log_denom;
      loss += p * (std::log(p) - log_q);
    }
  }
  Tensor out({1});
  out[0] = static_cast<float>(loss / static_cast<double>(cv.units()));
  Tensor ref = ref_probs;
  return make_result(std::move(out), {logits}, [cv, q, ref](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->ensure_grad();
    const float coef = self.grad[0] / static_cast<float>(cv.units());
    for (int64_t i = 0; i < ref.size(); ++i)
      g[i] += coef * ((*q)[i] - ref[i]);
  });
}

Var linf_dist_sum(const Var& x, const Tensor& origin) {
  check_same_shape(x->value, origin, "linf_dist_sum");
  if (x->value.rank() < 1) throw ShapeError("linf_dist_sum: rank >= 1");
  const int n = x->value.dim(0);
  const int64_t per = x->value.size() / n;
  auto arg = std::make_shared<std::vector<std::pair<int64_t, float>>>();
  arg->reserve(static_cast<size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    float best = -1.0f;
    int64_t best_idx = i * per;
    float best_sign = 0.0f;
    for (int64_t j = 0; j < per; ++j) {
      const int64_t o = i * per + j;
      const float d = x->value[o] - origin[o];
      const float a = std::fabs(d);
      if (a > best) {
        best = a;
        best_idx = o;
        best_sign = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      }
    }
    total += best;
    arg->emplace_back(best_idx, best_sign);
  }
  Tensor out({1});
  out[0] = static_cast<float>(total);
  return make_result(std::move(out), {x}, [arg](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->ensure_grad();
    for (const auto& [idx, sign] : *arg) g[idx] += self.grad[0] * sign;
  });
}

std::vector<int32_t> argmax_classes(const Tensor& logits) {
  const ClassView cv = class_view(logits);
  std::vector<int32_t> out(static_cast<size_t>(cv.units()));
  for (int64_t u = 0; u < cv.units(); ++u) {
    int best = 0;
    float bv = logits[cv.idx(u, 0)];
    for (int c = 1; c < cv.c; ++c) {
      const float v = logits[cv.idx(u, c)];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[static_cast<size_t>(u)] = best;
  }
  return out;
}

}  // namespace uadrs::nn
