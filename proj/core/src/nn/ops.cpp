#include "vcgan/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "vcgan/error.hpp"

namespace vcgan::nn {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// Eigen's vectorized kernels peel a different prefix depending on where a
// buffer starts, so a product over plain std::vector storage can round
// differently from one run to the next. Products therefore only ever see
// owned (aligned) matrices.
template <typename T, typename E>
MatR<T> own(const E& e) {
  return MatR<T>(e);
}

template <typename T>
T row_sum(const T* row, int n) {
  T acc = 0;
  for (int i = 0; i < n; ++i) acc += row[i];
  return acc;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

struct ConvDims {
  int channels, height, width;  // image side
  int kh, kw;
  int out_h, out_w;             // column side (conv output grid)
};

// cols[(c*kh+i)*kw+j][oh*out_w+ow] = img[c][oh*sh-ph+i][ow*sw-pw+j]
template <typename T>
void im2col(const T* img, const ConvDims& d, const ConvGeometry& g, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(d.out_h) * d.out_w;
  for (int c = 0; c < d.channels; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * d.height * d.width;
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        T* row = cols + ((static_cast<std::size_t>(c) * d.kh + i) * d.kw + j) * plane;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int ih = oh * g.stride_h - g.pad_h + i;
          T* dst = row + static_cast<std::size_t>(oh) * d.out_w;
          if (ih < 0 || ih >= d.height) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(ih) * d.width;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int iw = ow * g.stride_w - g.pad_w + j;
            dst[ow] = (iw >= 0 && iw < d.width) ? line[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* cols, const ConvDims& d, const ConvGeometry& g, T* img) {
  const std::size_t plane = static_cast<std::size_t>(d.out_h) * d.out_w;
  for (int c = 0; c < d.channels; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * d.height * d.width;
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        const T* row = cols + ((static_cast<std::size_t>(c) * d.kh + i) * d.kw + j) * plane;
        for (int oh = 0; oh < d.out_h; ++oh) {
          const int ih = oh * g.stride_h - g.pad_h + i;
          if (ih < 0 || ih >= d.height) continue;
          T* line = dst + static_cast<std::size_t>(ih) * d.width;
          const T* src = row + static_cast<std::size_t>(oh) * d.out_w;
          for (int ow = 0; ow < d.out_w; ++ow) {
            const int iw = ow * g.stride_w - g.pad_w + j;
            if (iw >= 0 && iw < d.width) line[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<Var<T>> defined_only(std::initializer_list<Var<T>> vars) {
  std::vector<Var<T>> out;
  for (const auto& v : vars)
    if (v.defined()) out.push_back(v);
  return out;
}

template <typename T>
Tensor<T>* grad_of(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvGeometry g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c, "conv2d: input channels do not match weight");
  const int out_c = ws.n;
  ConvDims d{xs.c, xs.h, xs.w, ws.h, ws.w, 0, 0};
  d.out_h = (xs.h + 2 * g.pad_h - ws.h) / g.stride_h + 1;
  d.out_w = (xs.w + 2 * g.pad_w - ws.w) / g.stride_w + 1;
  require(d.out_h > 0 && d.out_w > 0, "conv2d: kernel larger than padded input");
  if (bias.defined()) require(bias.shape().numel() == static_cast<std::size_t>(out_c), "conv2d: bias size");

  const int k = xs.c * ws.h * ws.w;
  const int p = d.out_h * d.out_w;
  Tensor<T> out(Shape{xs.n, out_c, d.out_h, d.out_w});
  const bool keep_cols = weight.requires_grad();
  auto saved = std::make_shared<std::vector<T>>(keep_cols ? static_cast<std::size_t>(xs.n) * k * p : 0);
  std::vector<T> scratch(keep_cols ? 0 : static_cast<std::size_t>(k) * p);

  const MatR<T> wm = own<T>(CMapR<T>(weight.value().data.data(), out_c, k));
  for (int n = 0; n < xs.n; ++n) {
    T* cols = keep_cols ? saved->data() + static_cast<std::size_t>(n) * k * p : scratch.data();
    im2col(x.value().sample(n).data(), d, g, cols);
    MapR<T> y(out.sample(n).data(), out_c, p);
    y = MatR<T>(wm * own<T>(CMapR<T>(cols, k, p)));
    if (bias.defined()) {
      for (int c = 0; c < out_c; ++c) y.row(c).array() += bias.value().data[c];
    }
  }

  const bool has_bias = bias.defined();
  return Var<T>::make(std::move(out), defined_only({x, weight, bias}),
                      [d, g, k, p, out_c, saved, has_bias](Node<T>& self) {
                        const Tensor<T>& xv = self.parents[0]->value;
                        const Tensor<T>& wv = self.parents[1]->value;
                        Tensor<T>* dx = grad_of(self, 0);
                        Tensor<T>* dw = grad_of(self, 1);
                        Tensor<T>* db = has_bias ? grad_of(self, 2) : nullptr;
                        const MatR<T> wt = dx ? own<T>(CMapR<T>(wv.data.data(), out_c, k).transpose()) : MatR<T>();
                        std::vector<T> dcols(dx ? static_cast<std::size_t>(k) * p : 0);
                        for (int n = 0; n < xv.shape.n; ++n) {
                          const T* dy_ptr = self.grad.sample(n).data();
                          const MatR<T> dy = own<T>(CMapR<T>(dy_ptr, out_c, p));
                          if (dw) {
                            CMapR<T> cols(saved->data() + static_cast<std::size_t>(n) * k * p, k, p);
                            MapR<T>(dw->data.data(), out_c, k) += MatR<T>(dy * own<T>(cols.transpose()));
                          }
                          if (db) {
                            for (int c = 0; c < out_c; ++c) db->data[c] += row_sum(dy_ptr + static_cast<std::size_t>(c) * p, p);
                          }
                          if (dx) {
                            MapR<T>(dcols.data(), k, p) = MatR<T>(wt * dy);
                            col2im(dcols.data(), d, g, dx->sample(n).data());
                          }
                        }
                      });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvGeometry g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.n == xs.c, "conv_transpose2d: input channels do not match weight");
  const int out_c = ws.c;
  const int out_h = (xs.h - 1) * g.stride_h - 2 * g.pad_h + ws.h;
  const int out_w = (xs.w - 1) * g.stride_w - 2 * g.pad_w + ws.w;
  require(out_h > 0 && out_w > 0, "conv_transpose2d: empty output");
  // Geometry of the equivalent forward conv that maps the output back to x.
  ConvDims d{out_c, out_h, out_w, ws.h, ws.w, xs.h, xs.w};
  require((out_h + 2 * g.pad_h - ws.h) / g.stride_h + 1 == xs.h, "conv_transpose2d: geometry");

  const int k = out_c * ws.h * ws.w;
  const int p = xs.h * xs.w;
  Tensor<T> out(Shape{xs.n, out_c, out_h, out_w});
  std::vector<T> cols(static_cast<std::size_t>(k) * p);
  const MatR<T> wt = own<T>(CMapR<T>(weight.value().data.data(), xs.c, k).transpose());
  for (int n = 0; n < xs.n; ++n) {
    const MatR<T> xm = own<T>(CMapR<T>(x.value().sample(n).data(), xs.c, p));
    MapR<T>(cols.data(), k, p) = MatR<T>(wt * xm);
    col2im(cols.data(), d, g, out.sample(n).data());
    if (bias.defined()) {
      auto s = out.sample(n);
      const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
      for (int c = 0; c < out_c; ++c) {
        const T b = bias.value().data[c];
        for (std::size_t i = 0; i < plane; ++i) s[c * plane + i] += b;
      }
    }
  }

  const bool has_bias = bias.defined();
  const int in_c = xs.c;
  return Var<T>::make(std::move(out), defined_only({x, weight, bias}),
                      [d, g, k, p, in_c, out_c, has_bias](Node<T>& self) {
                        const Tensor<T>& xv = self.parents[0]->value;
                        const Tensor<T>& wv = self.parents[1]->value;
                        Tensor<T>* dx = grad_of(self, 0);
                        Tensor<T>* dw = grad_of(self, 1);
                        Tensor<T>* db = has_bias ? grad_of(self, 2) : nullptr;
                        const MatR<T> wm = dx ? own<T>(CMapR<T>(wv.data.data(), in_c, k)) : MatR<T>();
                        std::vector<T> dcols(static_cast<std::size_t>(k) * p);
                        const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
                        for (int n = 0; n < xv.shape.n; ++n) {
                          auto dy = self.grad.sample(n);
                          if (db) {
                            for (int c = 0; c < out_c; ++c) {
                              T acc = 0;
                              for (std::size_t i = 0; i < plane; ++i) acc += dy[c * plane + i];
                              db->data[c] += acc;
                            }
                          }
                          if (!dx && !dw) continue;
                          im2col(dy.data(), d, g, dcols.data());
                          const MatR<T> dc = own<T>(CMapR<T>(dcols.data(), k, p));
                          if (dx) MapR<T>(dx->sample(n).data(), in_c, p) += MatR<T>(wm * dc);
                          if (dw) {
                            const MatR<T> xm = own<T>(CMapR<T>(xv.sample(n).data(), in_c, p));
                            MapR<T>(dw->data.data(), in_c, k) += MatR<T>(xm * dc.transpose());
                          }
                        }
                      });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int rh, int rw) {
  const Shape s = x.shape();
  require(s.c % (rh * rw) == 0, "pixel_shuffle: channels not divisible by factor");
  const int c_out = s.c / (rh * rw);
  const Shape os{s.n, c_out, s.h * rh, s.w * rw};
  // src index for every output element
  auto index = std::make_shared<std::vector<std::size_t>>(os.numel());
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int h = 0; h < os.h; ++h)
        for (int w = 0; w < os.w; ++w) {
          const int ci = c * rh * rw + (h % rh) * rw + (w % rw);
          (*index)[o++] = ((static_cast<std::size_t>(n) * s.c + ci) * s.h + h / rh) * s.w + w / rw;
        }
  Tensor<T> out(os);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x.value().data[(*index)[i]];
  return Var<T>::make(std::move(out), {x}, [index](Node<T>& self) {
    Tensor<T>& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) dx.data[(*index)[i]] += self.grad.data[i];
  });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape s = x.shape();
  require(gamma.shape().numel() == static_cast<std::size_t>(s.c) &&
              beta.shape().numel() == static_cast<std::size_t>(s.c),
          "instance_norm: affine size");
  const std::size_t plane = s.plane();
  auto xhat = std::make_shared<std::vector<T>>(s.numel());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * s.c);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const T* src = x.value().data.data() + base;
      T mean = 0;
      for (std::size_t i = 0; i < plane; ++i) mean += src[i];
      mean /= static_cast<T>(plane);
      T var = 0;
      for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<T>(plane);
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n) * s.c + c] = is;
      const T ga = gamma.value().data[c];
      const T be = beta.value().data[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (src[i] - mean) * is;
        (*xhat)[base + i] = xh;
        out.data[base + i] = ga * xh + be;
      }
    }
  }
  return Var<T>::make(std::move(out), {x, gamma, beta}, [s, plane, xhat, inv_std](Node<T>& self) {
    Tensor<T>* dx = grad_of(self, 0);
    Tensor<T>* dg = grad_of(self, 1);
    Tensor<T>* db = grad_of(self, 2);
    const Tensor<T>& gv = self.parents[1]->value;
    const T m = static_cast<T>(plane);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const T* dy = self.grad.data.data() + base;
        const T* xh = xhat->data() + base;
        T sum_dy = 0, sum_dy_xh = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xh += dy[i] * xh[i];
        }
        if (dg) dg->data[c] += sum_dy_xh;
        if (db) db->data[c] += sum_dy;
        if (dx) {
          const T ga = gv.data[c];
          const T is = (*inv_std)[static_cast<std::size_t>(n) * s.c + c];
          T* d = dx->data.data() + base;
          for (std::size_t i = 0; i < plane; ++i) {
            d[i] += ga * is / m * (m * dy[i] - sum_dy - xh[i] * sum_dy_xh);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = xv[i] > 0 ? xv[i] : slope * xv[i];
  return Var<T>::make(std::move(out), {x}, [slope](Node<T>& self) {
    const auto& xv = self.parents[0]->value.data;
    auto& dx = self.parents[0]->ensure_grad().data;
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += self.grad.data[i] * (xv[i] > 0 ? T(1) : slope);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = T(1) / (T(1) + std::exp(-x.value().data[i]));
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = self.value.data[i];
      dx[i] += self.grad.data[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::tanh(x.value().data[i]);
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    auto& dx = self.parents[0]->ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = self.value.data[i];
      dx[i] += self.grad.data[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var<T> glu(const Var<T>& x) {
  const Shape s = x.shape();
  require(s.c % 2 == 0, "glu: odd channel count");
  const int half = s.c / 2;
  const std::size_t plane = s.plane();
  const std::size_t block = static_cast<std::size_t>(half) * plane;
  Shape os = s;
  os.c = half;
  Tensor<T> out(os);
  auto gate = std::make_shared<std::vector<T>>(os.numel());
  for (int n = 0; n < s.n; ++n) {
    const T* a = x.value().sample(n).data();
    const T* b = a + block;
    T* y = out.sample(n).data();
    T* gs = gate->data() + static_cast<std::size_t>(n) * block;
    for (std::size_t i = 0; i < block; ++i) {
      gs[i] = T(1) / (T(1) + std::exp(-b[i]));
      y[i] = a[i] * gs[i];
    }
  }
  return Var<T>::make(std::move(out), {x}, [s, block, gate](Node<T>& self) {
    Tensor<T>& dx = self.parents[0]->ensure_grad();
    for (int n = 0; n < s.n; ++n) {
      const T* a = self.parents[0]->value.sample(n).data();
      const T* dy = self.grad.sample(n).data();
      const T* gs = gate->data() + static_cast<std::size_t>(n) * block;
      T* da = dx.sample(n).data();
      T* db = da + block;
      for (std::size_t i = 0; i < block; ++i) {
        da[i] += dy[i] * gs[i];
        db[i] += dy[i] * a[i] * gs[i] * (T(1) - gs[i]);
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shapes differ");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      if (Tensor<T>* d = grad_of(self, k)) {
        for (std::size_t i = 0; i < d->numel(); ++i) d->data[i] += self.grad.data[i];
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = s * a.value().data[i];
  return Var<T>::make(std::move(out), {a}, [s](Node<T>& self) {
    auto& d = self.parents[0]->ensure_grad().data;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * self.grad.data[i];
  });
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& scalars) {
  require(!scalars.empty(), "mean_of: no terms");
  T total = 0;
  for (const auto& v : scalars) {
    require(v.value().numel() == 1, "mean_of: non-scalar term");
    total += v.value().data[0];
  }
  const T inv = T(1) / static_cast<T>(scalars.size());
  Tensor<T> out(Shape{}, total * inv);
  return Var<T>::make(std::move(out), scalars, [inv](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (Tensor<T>* d = grad_of(self, k)) d->data[0] += inv * self.grad.data[0];
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w, "concat_channels: spatial mismatch");
  Tensor<T> out(Shape{as.n, as.c + bs.c, as.h, as.w});
  for (int n = 0; n < as.n; ++n) {
    auto dst = out.sample(n);
    auto sa = a.value().sample(n);
    auto sb = b.value().sample(n);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + sa.size());
  }
  return Var<T>::make(std::move(out), {a, b}, [as](Node<T>& self) {
    Tensor<T>* da = grad_of(self, 0);
    Tensor<T>* db = grad_of(self, 1);
    for (int n = 0; n < as.n; ++n) {
      auto g = self.grad.sample(n);
      const std::size_t na = as.sample_size();
      if (da) {
        auto d = da->sample(n);
        for (std::size_t i = 0; i < na; ++i) d[i] += g[i];
      }
      if (db) {
        auto d = db->sample(n);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[na + i];
      }
    }
  });
}

template <typename T>
Var<T> concat_batch(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_batch: nothing to concatenate");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape ps = p.shape();
    require(ps.c == s.c && ps.h == s.h && ps.w == s.w, "concat_batch: sample shape mismatch");
    total += ps.n;
  }
  s.n = total;
  Tensor<T> out(s);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + off);
    off += p.value().numel();
  }
  return Var<T>::make(std::move(out), parts, [](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t len = self.parents[k]->value.numel();
      if (Tensor<T>* d = grad_of(self, k)) {
        for (std::size_t i = 0; i < len; ++i) d->data[i] += self.grad.data[off + i];
      }
      off += len;
    }
  });
}

template <typename T>
Var<T> select_sample(const Var<T>& x, int n) {
  const Shape s = x.shape();
  require(n >= 0 && n < s.n, "select_sample: index out of range");
  Shape os = s;
  os.n = 1;
  auto src = x.value().sample(n);
  Tensor<T> out(os, std::vector<T>(src.begin(), src.end()));
  return Var<T>::make(std::move(out), {x}, [n](Node<T>& self) {
    auto d = self.parents[0]->ensure_grad().sample(n);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad.data[i];
  });
}

template <typename T>
Var<T> tile_time(const Var<T>& x, int width) {
  const Shape s = x.shape();
  require(s.w == 1, "tile_time: input must have a single time step");
  Tensor<T> out(Shape{s.n, s.c, s.h, width});
  for (std::size_t r = 0; r < s.numel(); ++r) {
    std::fill_n(out.data.begin() + r * width, width, x.value().data[r]);
  }
  return Var<T>::make(std::move(out), {x}, [width](Node<T>& self) {
    auto& d = self.parents[0]->ensure_grad().data;
    for (std::size_t r = 0; r < d.size(); ++r) {
      T acc = 0;
      for (int t = 0; t < width; ++t) acc += self.grad.data[r * width + t];
      d[r] += acc;
    }
  });
}

template <typename T>
Var<T> mean_time(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, s.h, 1});
  const T inv = T(1) / static_cast<T>(s.w);
  for (std::size_t r = 0; r < out.numel(); ++r) {
    T acc = 0;
    for (int t = 0; t < s.w; ++t) acc += x.value().data[r * s.w + t];
    out.data[r] = acc * inv;
  }
  return Var<T>::make(std::move(out), {x}, [s, inv](Node<T>& self) {
    auto& d = self.parents[0]->ensure_grad().data;
    for (std::size_t r = 0; r < self.grad.numel(); ++r) {
      const T g = self.grad.data[r] * inv;
      for (int t = 0; t < s.w; ++t) d[r * s.w + t] += g;
    }
  });
}

template <typename T>
Var<T> gather_time(const Var<T>& x, std::span<const int> index) {
  const Shape s = x.shape();
  const int width = static_cast<int>(index.size());
  for (int t : index) require(t >= 0 && t < s.w, "gather_time: index out of range");
  auto idx = std::make_shared<std::vector<int>>(index.begin(), index.end());
  Tensor<T> out(Shape{s.n, s.c, s.h, width});
  const std::size_t rows = static_cast<std::size_t>(s.n) * s.c * s.h;
  for (std::size_t r = 0; r < rows; ++r)
    for (int t = 0; t < width; ++t) out.data[r * width + t] = x.value().data[r * s.w + (*idx)[t]];
  return Var<T>::make(std::move(out), {x}, [s, rows, width, idx](Node<T>& self) {
    auto& d = self.parents[0]->ensure_grad().data;
    for (std::size_t r = 0; r < rows; ++r)
      for (int t = 0; t < width; ++t) d[r * s.w + (*idx)[t]] += self.grad.data[r * width + t];
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const int n = x.shape().n;
  const int d = static_cast<int>(x.shape().sample_size());
  const int k = weight.shape().n;
  require(static_cast<int>(weight.shape().sample_size()) == d, "linear: weight width does not match input");
  Tensor<T> out(Shape{n, k, 1, 1});
  MapR<T> ym(out.data.data(), n, k);
  ym = MatR<T>(own<T>(CMapR<T>(x.value().data.data(), n, d)) *
               own<T>(CMapR<T>(weight.value().data.data(), k, d)).transpose());
  if (bias.defined()) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < k; ++c) ym(r, c) += bias.value().data[c];
  }
  const bool has_bias = bias.defined();
  return Var<T>::make(std::move(out), defined_only({x, weight, bias}), [n, d, k, has_bias](Node<T>& self) {
    const MatR<T> dy = own<T>(CMapR<T>(self.grad.data.data(), n, k));
    if (Tensor<T>* dx = grad_of(self, 0)) {
      MapR<T>(dx->data.data(), n, d) += MatR<T>(dy * own<T>(CMapR<T>(self.parents[1]->value.data.data(), k, d)));
    }
    if (Tensor<T>* dw = grad_of(self, 1)) {
      MapR<T>(dw->data.data(), k, d) +=
          MatR<T>(dy.transpose() * own<T>(CMapR<T>(self.parents[0]->value.data.data(), n, d)));
    }
    if (has_bias) {
      if (Tensor<T>* db = grad_of(self, 2)) {
        for (int c = 0; c < k; ++c) {
          T acc = 0;
          for (int r = 0; r < n; ++r) acc += dy(r, c);
          db->data[c] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const int n = logits.shape.n;
  const int k = static_cast<int>(logits.shape.sample_size());
  Tensor<T> out(logits.shape);
  for (int r = 0; r < n; ++r) {
    const T* z = logits.data.data() + static_cast<std::size_t>(r) * k;
    T* p = out.data.data() + static_cast<std::size_t>(r) * k;
    const T mx = *std::max_element(z, z + k);
    T sum = 0;
    for (int c = 0; c < k; ++c) sum += (p[c] = std::exp(z[c] - mx));
    for (int c = 0; c < k; ++c) p[c] /= sum;
  }
  return out;
}

template <typename T>
Var<T> nll_from_logits(const Var<T>& logits, std::span<const int> labels, T prob_floor) {
  const int n = logits.shape().n;
  const int k = static_cast<int>(logits.shape().sample_size());
  require(static_cast<int>(labels.size()) == n, "nll_from_logits: one label per sample");
  const T log_floor = std::log(prob_floor);
  auto probs = std::make_shared<Tensor<T>>(softmax(logits.value()));
  auto lbl = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto clamped = std::make_shared<std::vector<char>>(n, 0);
  T total = 0;
  for (int r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= k) throw Error(ErrorCode::kInvalidArgument, "nll_from_logits: label out of range");
    const T* z = logits.value().data.data() + static_cast<std::size_t>(r) * k;
    const T mx = *std::max_element(z, z + k);
    T sum = 0;
    for (int c = 0; c < k; ++c) sum += std::exp(z[c] - mx);
    T logp = z[y] - mx - std::log(sum);
    if (logp < log_floor) {
      logp = log_floor;
      (*clamped)[r] = 1;
    }
    total -= logp;
  }
  Tensor<T> out(Shape{}, total / static_cast<T>(n));
  return Var<T>::make(std::move(out), {logits}, [n, k, probs, lbl, clamped](Node<T>& self) {
    auto& d = self.parents[0]->ensure_grad().data;
    const T g = self.grad.data[0] / static_cast<T>(n);
    for (int r = 0; r < n; ++r) {
      if ((*clamped)[r]) continue;
      for (int c = 0; c < k; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * k + c;
        d[i] += g * (probs->data[i] - (c == (*lbl)[r] ? T(1) : T(0)));
      }
    }
  });
}

template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "l1_mean: shapes differ");
  const std::size_t m = a.value().numel();
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) total += std::abs(a.value().data[i] - b.value().data[i]);
  Tensor<T> out(Shape{}, total / static_cast<T>(m));
  return Var<T>::make(std::move(out), {a, b}, [m](Node<T>& self) {
    const auto& av = self.parents[0]->value.data;
    const auto& bv = self.parents[1]->value.data;
    const T g = self.grad.data[0] / static_cast<T>(m);
    Tensor<T>* da = grad_of(self, 0);
    Tensor<T>* db = grad_of(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const T diff = av[i] - bv[i];
      const T sgn = diff > 0 ? T(1) : (diff < 0 ? T(-1) : T(0));
      if (da) da->data[i] += g * sgn;
      if (db) db->data[i] -= g * sgn;
    }
  });
}

#define VCGAN_INSTANTIATE_OPS(T)                                                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);         \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry); \
  template Var<T> pixel_shuffle(const Var<T>&, int, int);                                    \
  template Var<T> instance_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);             \
  template Var<T> leaky_relu(const Var<T>&, T);                                              \
  template Var<T> sigmoid(const Var<T>&);                                                    \
  template Var<T> tanh(const Var<T>&);                                                       \
  template Var<T> glu(const Var<T>&);                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale(const Var<T>&, T);                                                   \
  template Var<T> mean_of(const std::vector<Var<T>>&);                                       \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                             \
  template Var<T> concat_batch(const std::vector<Var<T>>&);                                  \
  template Var<T> select_sample(const Var<T>&, int);                                         \
  template Var<T> tile_time(const Var<T>&, int);                                             \
  template Var<T> mean_time(const Var<T>&);                                                  \
  template Var<T> gather_time(const Var<T>&, std::span<const int>);                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> nll_from_logits(const Var<T>&, std::span<const int>, T);                   \
  template Var<T> l1_mean(const Var<T>&, const Var<T>&);                                     \
  template Tensor<T> softmax(const Tensor<T>&);

VCGAN_INSTANTIATE_OPS(float)
VCGAN_INSTANTIATE_OPS(double)

#undef VCGAN_INSTANTIATE_OPS

}  // namespace vcgan::nn
