#include "textdet/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

#include "textdet/errors.hpp"
#include "textdet/parallel.hpp"

namespace textdet {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CMapRM = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

struct EigenSingleThreadInit {
  EigenSingleThreadInit() { Eigen::setNbThreads(1); }
} g_eigen_init;

// C[M,N] (+)= A[M,K] * B[K,N], all row-major contiguous. Column blocks are
// farmed out to workers; each C element is produced by exactly one GEMM call.
void gemm_nn(const float* A, const float* B, float* C, int M, int K, int N, bool accumulate) {
  int nb = std::min<int64_t>(thread_count(), (N + 63) / 64);
  int block = (N + nb - 1) / nb;
  parallel_for(nb, [&](int64_t t) {
    int c0 = static_cast<int>(t) * block;
    int bw = std::min(block, N - c0);
    if (bw <= 0) return;
    CMapRM a(A, M, K, Eigen::OuterStride<>(K));
    CMapRM b(B + c0, K, bw, Eigen::OuterStride<>(N));
    MapRM c(C + c0, M, bw, Eigen::OuterStride<>(N));
    if (accumulate) {
      c.noalias() += a * b;
    } else {
      c.noalias() = a * b;
    }
  });
}

// C[M,N] (+)= A[M,K] * B[N,K]^T.
void gemm_nt(const float* A, const float* B, float* C, int M, int K, int N, bool accumulate) {
  int nb = std::min<int64_t>(thread_count(), (N + 63) / 64);
  int block = (N + nb - 1) / nb;
  parallel_for(nb, [&](int64_t t) {
    int c0 = static_cast<int>(t) * block;
    int bw = std::min(block, N - c0);
    if (bw <= 0) return;
    CMapRM a(A, M, K, Eigen::OuterStride<>(K));
    CMapRM b(B + static_cast<int64_t>(c0) * K, bw, K, Eigen::OuterStride<>(K));
    MapRM c(C + c0, M, bw, Eigen::OuterStride<>(N));
    if (accumulate) {
      c.noalias() += a * b.transpose();
    } else {
      c.noalias() = a * b.transpose();
    }
  });
}

// C[M,N] (+)= A[K,M]^T * B[K,N].
void gemm_tn(const float* A, const float* B, float* C, int M, int K, int N, bool accumulate) {
  int nb = std::min<int64_t>(thread_count(), (N + 63) / 64);
  int block = (N + nb - 1) / nb;
  parallel_for(nb, [&](int64_t t) {
    int c0 = static_cast<int>(t) * block;
    int bw = std::min(block, N - c0);
    if (bw <= 0) return;
    CMapRM a(A, K, M, Eigen::OuterStride<>(M));
    CMapRM b(B + c0, K, bw, Eigen::OuterStride<>(N));
    MapRM c(C + c0, M, bw, Eigen::OuterStride<>(N));
    if (accumulate) {
      c.noalias() += a.transpose() * b;
    } else {
      c.noalias() = a.transpose() * b;
    }
  });
}

struct ConvDims {
  int B, C, H, W;       // input
  int N, kh, kw;        // kernel
  int Hout, Wout;
  bool batched;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int stride, int pad, int dilation) {
  if (kernel.rank() != 4) throw ShapeMismatch("conv kernel must be [N,C,kh,kw]");
  ConvDims d{};
  d.batched = input.rank() == 4;
  if (input.rank() == 3) {
    d.B = 1;
    d.C = input.dim(0);
    d.H = input.dim(1);
    d.W = input.dim(2);
  } else if (d.batched) {
    d.B = input.dim(0);
    d.C = input.dim(1);
    d.H = input.dim(2);
    d.W = input.dim(3);
  } else {
    throw ShapeMismatch("conv input must be [C,H,W] or [B,C,H,W]");
  }
  d.N = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  if (kernel.dim(1) != d.C) {
    throw ShapeMismatch("conv channel mismatch: input " + input.shape_str() + " kernel " +
                        kernel.shape_str());
  }
  if (stride < 1 || dilation < 1 || pad < 0) throw ShapeMismatch("bad conv config");
  int ext_h = (d.kh - 1) * dilation + 1;
  int ext_w = (d.kw - 1) * dilation + 1;
  int num_h = d.H + 2 * pad - ext_h;
  int num_w = d.W + 2 * pad - ext_w;
  if (num_h < 0 || num_w < 0) throw ShapeMismatch("kernel larger than padded input");
  if (num_h % stride != 0 || num_w % stride != 0) {
    throw ShapeMismatch("conv output size is not integral");
  }
  d.Hout = num_h / stride + 1;
  d.Wout = num_w / stride + 1;
  return d;
}

// cols[(c*kh+ky)*kw+kx, oy*Wout+ox] = input[c, oy*s - p + ky*d, ox*s - p + kx*d] (0 outside).
void im2col(const float* in, const ConvDims& d, int stride, int pad, int dilation, float* cols) {
  int rows = d.C * d.kh * d.kw;
  int64_t hw = static_cast<int64_t>(d.Hout) * d.Wout;
  parallel_for(rows, [&](int64_t rr) {
    int kx = static_cast<int>(rr) % d.kw;
    int ky = (static_cast<int>(rr) / d.kw) % d.kh;
    int c = static_cast<int>(rr) / (d.kw * d.kh);
    float* dst = cols + rr * hw;
    const float* src = in + static_cast<int64_t>(c) * d.H * d.W;
    for (int oy = 0; oy < d.Hout; ++oy) {
      int iy = oy * stride - pad + ky * dilation;
      if (iy < 0 || iy >= d.H) {
        std::memset(dst, 0, sizeof(float) * static_cast<size_t>(d.Wout));
        dst += d.Wout;
        continue;
      }
      const float* row = src + static_cast<int64_t>(iy) * d.W;
      int ix = -pad + kx * dilation;
      for (int ox = 0; ox < d.Wout; ++ox, ix += stride) {
        *dst++ = (ix >= 0 && ix < d.W) ? row[ix] : 0.0f;
      }
    }
  });
}

void col2im_add(const float* cols, const ConvDims& d, int stride, int pad, int dilation,
                float* in_grad) {
  int64_t hw = static_cast<int64_t>(d.Hout) * d.Wout;
  parallel_for(d.C, [&](int64_t c) {
    float* dst = in_grad + c * d.H * d.W;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const float* src = cols + ((c * d.kh + ky) * d.kw + kx) * hw;
        for (int oy = 0; oy < d.Hout; ++oy) {
          int iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= d.H) {
            src += d.Wout;
            continue;
          }
          float* row = dst + static_cast<int64_t>(iy) * d.W;
          int ix = -pad + kx * dilation;
          for (int ox = 0; ox < d.Wout; ++ox, ix += stride) {
            if (ix >= 0 && ix < d.W) row[ix] += src[ox];
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                      int pad, int dilation) {
  ConvDims d = conv_dims(input, kernel, stride, pad, dilation);
  if (!bias.empty() && bias.numel() != d.N) throw ShapeMismatch("conv bias size");
  std::vector<int> out_shape =
      d.batched ? std::vector<int>{d.B, d.N, d.Hout, d.Wout} : std::vector<int>{d.N, d.Hout, d.Wout};
  Tensor out(std::move(out_shape));
  int K = d.C * d.kh * d.kw;
  int64_t hw = static_cast<int64_t>(d.Hout) * d.Wout;
  std::vector<float> cols(static_cast<size_t>(K) * hw);
  int64_t in_stride = static_cast<int64_t>(d.C) * d.H * d.W;
  int64_t out_stride = static_cast<int64_t>(d.N) * hw;
  for (int b = 0; b < d.B; ++b) {
    im2col(input.data() + b * in_stride, d, stride, pad, dilation, cols.data());
    float* ob = out.data() + b * out_stride;
    gemm_nn(kernel.data(), cols.data(), ob, d.N, K, static_cast<int>(hw), false);
    if (!bias.empty()) {
      parallel_for(d.N, [&](int64_t n) {
        float bv = bias[n];
        float* row = ob + n * hw;
        for (int64_t i = 0; i < hw; ++i) row[i] += bv;
      });
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                            int stride, int pad, int dilation) {
  ConvDims d = conv_dims(input, kernel, stride, pad, dilation);
  std::vector<int> expect =
      d.batched ? std::vector<int>{d.B, d.N, d.Hout, d.Wout} : std::vector<int>{d.N, d.Hout, d.Wout};
  if (grad_out.shape() != expect) {
    throw ShapeMismatch("conv grad_out shape " + grad_out.shape_str());
  }
  Conv2dGrads g;
  g.input = Tensor(input.shape());
  g.kernel = Tensor(kernel.shape());
  g.bias = Tensor({d.N});
  int K = d.C * d.kh * d.kw;
  int64_t hw = static_cast<int64_t>(d.Hout) * d.Wout;
  std::vector<float> cols(static_cast<size_t>(K) * hw);
  std::vector<float> cols_grad(static_cast<size_t>(K) * hw);
  int64_t in_stride = static_cast<int64_t>(d.C) * d.H * d.W;
  int64_t out_stride = static_cast<int64_t>(d.N) * hw;
  for (int b = 0; b < d.B; ++b) {
    const float* gb = grad_out.data() + b * out_stride;
    im2col(input.data() + b * in_stride, d, stride, pad, dilation, cols.data());
    // dW += gout * cols^T
    gemm_nt(gb, cols.data(), g.kernel.data(), d.N, static_cast<int>(hw), K, true);
    // dcols = W^T * gout, scattered back through im2col
    gemm_tn(kernel.data(), gb, cols_grad.data(), K, d.N, static_cast<int>(hw), false);
    col2im_add(cols_grad.data(), d, stride, pad, dilation, g.input.data() + b * in_stride);
    for (int n = 0; n < d.N; ++n) {
      double s = 0.0;
      const float* row = gb + n * hw;
      for (int64_t i = 0; i < hw; ++i) s += row[i];
      g.bias[n] += static_cast<float>(s);
    }
  }
  return g;
}

namespace {

struct DeconvDims {
  int B, C, H, W;  // input
  int N, kh, kw;   // kernel [C,N,kh,kw]
  int Hout, Wout;
  bool batched;
};

DeconvDims deconv_dims(const Tensor& input, const Tensor& kernel, int stride) {
  if (kernel.rank() != 4) throw ShapeMismatch("deconv kernel must be [C,N,kh,kw]");
  DeconvDims d{};
  d.batched = input.rank() == 4;
  if (input.rank() == 3) {
    d.B = 1;
    d.C = input.dim(0);
    d.H = input.dim(1);
    d.W = input.dim(2);
  } else if (d.batched) {
    d.B = input.dim(0);
    d.C = input.dim(1);
    d.H = input.dim(2);
    d.W = input.dim(3);
  } else {
    throw ShapeMismatch("deconv input must be [C,H,W] or [B,C,H,W]");
  }
  if (kernel.dim(0) != d.C) {
    throw ShapeMismatch("deconv channel mismatch: input " + input.shape_str() + " kernel " +
                        kernel.shape_str());
  }
  d.N = kernel.dim(1);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  if (stride < 1) throw ShapeMismatch("bad deconv stride");
  d.Hout = (d.H - 1) * stride + d.kh;
  d.Wout = (d.W - 1) * stride + d.kw;
  return d;
}

}  // namespace

Tensor deconv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride) {
  DeconvDims d = deconv_dims(input, kernel, stride);
  if (!bias.empty() && bias.numel() != d.N) throw ShapeMismatch("deconv bias size");
  std::vector<int> out_shape =
      d.batched ? std::vector<int>{d.B, d.N, d.Hout, d.Wout} : std::vector<int>{d.N, d.Hout, d.Wout};
  Tensor out(std::move(out_shape));
  int64_t hw = static_cast<int64_t>(d.H) * d.W;
  int64_t ohw = static_cast<int64_t>(d.Hout) * d.Wout;
  int64_t in_stride = static_cast<int64_t>(d.C) * hw;
  int64_t out_stride = static_cast<int64_t>(d.N) * ohw;
  bool tiled = (d.kh == stride && d.kw == stride);  // UpSample(n): disjoint output tiles
  std::vector<float> tmp;
  if (tiled) tmp.resize(static_cast<size_t>(d.N) * hw);
  for (int b = 0; b < d.B; ++b) {
    const float* in = input.data() + b * in_stride;
    float* ob = out.data() + b * out_stride;
    if (!bias.empty()) {
      parallel_for(d.N, [&](int64_t n) {
        float bv = bias[n];
        float* row = ob + n * ohw;
        for (int64_t i = 0; i < ohw; ++i) row[i] = bv;
      });
    }
    if (tiled) {
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          // tmp[n, y*W+x] = sum_c K[c,n,ky,kx] * in[c, y, x]
          std::vector<float> kslice(static_cast<size_t>(d.N) * d.C);
          for (int c = 0; c < d.C; ++c) {
            for (int n = 0; n < d.N; ++n) {
              kslice[static_cast<size_t>(n) * d.C + c] =
                  kernel[((static_cast<int64_t>(c) * d.N + n) * d.kh + ky) * d.kw + kx];
            }
          }
          gemm_nn(kslice.data(), in, tmp.data(), d.N, d.C, static_cast<int>(hw), false);
          parallel_for(d.N, [&](int64_t n) {
            const float* src = tmp.data() + n * hw;
            float* dst = ob + n * ohw;
            for (int y = 0; y < d.H; ++y) {
              for (int x = 0; x < d.W; ++x) {
                dst[static_cast<int64_t>(y * stride + ky) * d.Wout + (x * stride + kx)] +=
                    src[static_cast<int64_t>(y) * d.W + x];
              }
            }
          });
        }
      }
    } else {
      parallel_for(d.N, [&](int64_t n) {
        float* dst = ob + n * ohw;
        for (int c = 0; c < d.C; ++c) {
          const float* src = in + static_cast<int64_t>(c) * hw;
          const float* kc = kernel.data() + (static_cast<int64_t>(c) * d.N + n) * d.kh * d.kw;
          for (int y = 0; y < d.H; ++y) {
            for (int x = 0; x < d.W; ++x) {
              float v = src[static_cast<int64_t>(y) * d.W + x];
              if (v == 0.0f) continue;
              for (int ky = 0; ky < d.kh; ++ky) {
                float* orow = dst + static_cast<int64_t>(y * stride + ky) * d.Wout + x * stride;
                const float* krow = kc + static_cast<int64_t>(ky) * d.kw;
                for (int kx = 0; kx < d.kw; ++kx) orow[kx] += v * krow[kx];
              }
            }
          }
        }
      });
    }
  }
  return out;
}

Deconv2dGrads deconv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                int stride) {
  DeconvDims d = deconv_dims(input, kernel, stride);
  std::vector<int> expect =
      d.batched ? std::vector<int>{d.B, d.N, d.Hout, d.Wout} : std::vector<int>{d.N, d.Hout, d.Wout};
  if (grad_out.shape() != expect) {
    throw ShapeMismatch("deconv grad_out shape " + grad_out.shape_str());
  }
  Deconv2dGrads g;
  g.input = Tensor(input.shape());
  g.kernel = Tensor(kernel.shape());
  g.bias = Tensor({d.N});
  int64_t hw = static_cast<int64_t>(d.H) * d.W;
  int64_t ohw = static_cast<int64_t>(d.Hout) * d.Wout;
  int64_t in_stride = static_cast<int64_t>(d.C) * hw;
  int64_t out_stride = static_cast<int64_t>(d.N) * ohw;
  for (int b = 0; b < d.B; ++b) {
    const float* in = input.data() + b * in_stride;
    const float* gb = grad_out.data() + b * out_stride;
    float* gi = g.input.data() + b * in_stride;
    // d_in[c,y,x] = sum_{n,ky,kx} gout[n, y*s+ky, x*s+kx] * K[c,n,ky,kx]
    parallel_for(d.C, [&](int64_t c) {
      float* dst = gi + c * hw;
      const float* kc = kernel.data() + c * d.N * d.kh * d.kw;
      for (int n = 0; n < d.N; ++n) {
        const float* gn = gb + static_cast<int64_t>(n) * ohw;
        const float* kn = kc + static_cast<int64_t>(n) * d.kh * d.kw;
        for (int y = 0; y < d.H; ++y) {
          for (int x = 0; x < d.W; ++x) {
            float s = 0.0f;
            for (int ky = 0; ky < d.kh; ++ky) {
              const float* grow = gn + static_cast<int64_t>(y * stride + ky) * d.Wout + x * stride;
              const float* krow = kn + static_cast<int64_t>(ky) * d.kw;
              for (int kx = 0; kx < d.kw; ++kx) s += grow[kx] * krow[kx];
            }
            dst[static_cast<int64_t>(y) * d.W + x] += s;
          }
        }
      }
    });
    // dK[c,n,ky,kx] = sum_{y,x} in[c,y,x] * gout[n, y*s+ky, x*s+kx]
    parallel_for(d.C, [&](int64_t c) {
      const float* src = in + c * hw;
      float* kc = g.kernel.data() + c * d.N * d.kh * d.kw;
      for (int n = 0; n < d.N; ++n) {
        const float* gn = gb + static_cast<int64_t>(n) * ohw;
        float* kn = kc + static_cast<int64_t>(n) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            double s = 0.0;
            for (int y = 0; y < d.H; ++y) {
              const float* grow = gn + static_cast<int64_t>(y * stride + ky) * d.Wout + kx;
              const float* srow = src + static_cast<int64_t>(y) * d.W;
              for (int x = 0; x < d.W; ++x) s += srow[x] * grow[static_cast<int64_t>(x) * stride];
            }
            kn[static_cast<int64_t>(ky) * d.kw + kx] += static_cast<float>(s);
          }
        }
      }
    });
    for (int n = 0; n < d.N; ++n) {
      double s = 0.0;
      const float* row = gb + static_cast<int64_t>(n) * ohw;
      for (int64_t i = 0; i < ohw; ++i) s += row[i];
      g.bias[n] += static_cast<float>(s);
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  int64_t n = x.numel();
  int64_t chunks = (n + 65535) / 65536;
  parallel_for(chunks, [&](int64_t c) {
    int64_t lo = c * 65536, hi = std::min(n, lo + 65536);
    for (int64_t i = lo; i < hi; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
  });
  return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& y) {
  if (!grad_out.same_shape(y)) throw ShapeMismatch("relu backward shape");
  Tensor g(y.shape());
  const float* go = grad_out.data();
  const float* yy = y.data();
  float* out = g.data();
  int64_t n = y.numel();
  int64_t chunks = (n + 65535) / 65536;
  parallel_for(chunks, [&](int64_t c) {
    int64_t lo = c * 65536, hi = std::min(n, lo + 65536);
    for (int64_t i = lo; i < hi; ++i) out[i] = yy[i] > 0.0f ? go[i] : 0.0f;
  });
  return g;
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  int64_t n = x.numel();
  int64_t chunks = (n + 65535) / 65536;
  parallel_for(chunks, [&](int64_t c) {
    int64_t lo = c * 65536, hi = std::min(n, lo + 65536);
    for (int64_t i = lo; i < hi; ++i) out[i] = 1.0f / (1.0f + std::exp(-in[i]));
  });
  return y;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& y) {
  if (!grad_out.same_shape(y)) throw ShapeMismatch("sigmoid backward shape");
  Tensor g(y.shape());
  const float* go = grad_out.data();
  const float* yy = y.data();
  float* out = g.data();
  int64_t n = y.numel();
  int64_t chunks = (n + 65535) / 65536;
  parallel_for(chunks, [&](int64_t c) {
    int64_t lo = c * 65536, hi = std::min(n, lo + 65536);
    for (int64_t i = lo; i < hi; ++i) out[i] = go[i] * yy[i] * (1.0f - yy[i]);
  });
  return g;
}

namespace {

struct BnDims {
  int B, C, HW;
};

BnDims bn_dims(const Tensor& x) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1) * x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  throw ShapeMismatch("batchnorm input must be [C,H,W] or [B,C,H,W]");
}

}  // namespace

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, bool training, float eps,
                         float momentum, BnCache* cache) {
  BnDims d = bn_dims(x);
  if (gamma.numel() != d.C || beta.numel() != d.C || running_mean.numel() != d.C ||
      running_var.numel() != d.C) {
    throw ShapeMismatch("batchnorm parameter size");
  }
  if (d.HW < 1) throw ShapeMismatch("batchnorm needs spatial size >= 1");
  Tensor y(x.shape());
  int64_t count = static_cast<int64_t>(d.B) * d.HW;
  if (training) {
    if (cache) {
      cache->xhat = Tensor(x.shape());
      cache->invstd.assign(static_cast<size_t>(d.C), 0.0f);
    }
    parallel_for(d.C, [&](int64_t c) {
      double sum = 0.0, sq = 0.0;
      for (int b = 0; b < d.B; ++b) {
        const float* p = x.data() + (static_cast<int64_t>(b) * d.C + c) * d.HW;
        for (int i = 0; i < d.HW; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      double mean = sum / static_cast<double>(count);
      double var = sq / static_cast<double>(count) - mean * mean;
      if (var < 0.0) var = 0.0;
      float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      float m = static_cast<float>(mean);
      float g = gamma[c], bta = beta[c];
      for (int b = 0; b < d.B; ++b) {
        int64_t off = (static_cast<int64_t>(b) * d.C + c) * d.HW;
        const float* p = x.data() + off;
        float* q = y.data() + off;
        float* xh = cache ? cache->xhat.data() + off : nullptr;
        for (int i = 0; i < d.HW; ++i) {
          float h = (p[i] - m) * inv;
          if (xh) xh[i] = h;
          q[i] = g * h + bta;
        }
      }
      if (cache) cache->invstd[static_cast<size_t>(c)] = inv;
      running_mean[c] = momentum * running_mean[c] + (1.0f - momentum) * m;
      running_var[c] = momentum * running_var[c] + (1.0f - momentum) * static_cast<float>(var);
    });
  } else {
    parallel_for(d.C, [&](int64_t c) {
      float m = running_mean[c];
      float inv = 1.0f / std::sqrt(running_var[c] + eps);
      float g = gamma[c], bta = beta[c];
      for (int b = 0; b < d.B; ++b) {
        int64_t off = (static_cast<int64_t>(b) * d.C + c) * d.HW;
        const float* p = x.data() + off;
        float* q = y.data() + off;
        for (int i = 0; i < d.HW; ++i) q[i] = g * (p[i] - m) * inv + bta;
      }
    });
  }
  return y;
}

BnGrads batchnorm_backward(const Tensor& grad_out, const Tensor& gamma, const BnCache& cache) {
  BnDims d = bn_dims(grad_out);
  if (!grad_out.same_shape(cache.xhat)) throw ShapeMismatch("batchnorm backward shape");
  BnGrads g;
  g.input = Tensor(grad_out.shape());
  g.gamma = Tensor({d.C});
  g.beta = Tensor({d.C});
  int64_t count = static_cast<int64_t>(d.B) * d.HW;
  double n = static_cast<double>(count);
  parallel_for(d.C, [&](int64_t c) {
    double s1 = 0.0, s2 = 0.0;
    for (int b = 0; b < d.B; ++b) {
      int64_t off = (static_cast<int64_t>(b) * d.C + c) * d.HW;
      const float* go = grad_out.data() + off;
      const float* xh = cache.xhat.data() + off;
      for (int i = 0; i < d.HW; ++i) {
        s1 += go[i];
        s2 += static_cast<double>(go[i]) * xh[i];
      }
    }
    g.beta[c] = static_cast<float>(s1);
    g.gamma[c] = static_cast<float>(s2);
    float k = gamma[c] * cache.invstd[static_cast<size_t>(c)];
    float m1 = static_cast<float>(s1 / n);
    float m2 = static_cast<float>(s2 / n);
    for (int b = 0; b < d.B; ++b) {
      int64_t off = (static_cast<int64_t>(b) * d.C + c) * d.HW;
      const float* go = grad_out.data() + off;
      const float* xh = cache.xhat.data() + off;
      float* gi = g.input.data() + off;
      for (int i = 0; i < d.HW; ++i) gi[i] = k * (go[i] - m1 - xh[i] * m2);
    }
  });
  return g;
}

Tensor maxpool2d_forward(const Tensor& x, PoolCache* cache) {
  int B = 1, C, H, W;
  bool batched = x.rank() == 4;
  if (x.rank() == 3) {
    C = x.dim(0);
    H = x.dim(1);
    W = x.dim(2);
  } else if (batched) {
    B = x.dim(0);
    C = x.dim(1);
    H = x.dim(2);
    W = x.dim(3);
  } else {
    throw ShapeMismatch("maxpool input must be [C,H,W] or [B,C,H,W]");
  }
  if (H % 2 != 0 || W % 2 != 0) throw ShapeMismatch("maxpool needs even spatial dims");
  int Ho = H / 2, Wo = W / 2;
  Tensor y(batched ? std::vector<int>{B, C, Ho, Wo} : std::vector<int>{C, Ho, Wo});
  if (cache) {
    cache->argmax.assign(static_cast<size_t>(y.numel()), 0);
    cache->in_shape = x.shape();
  }
  int64_t planes = static_cast<int64_t>(B) * C;
  parallel_for(planes, [&](int64_t pc) {
    const float* in = x.data() + pc * H * W;
    float* out = y.data() + pc * Ho * Wo;
    int32_t* am = cache ? cache->argmax.data() + pc * Ho * Wo : nullptr;
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        int iy = oy * 2, ix = ox * 2;
        int best = iy * W + ix;
        float bv = in[best];
        const int cand[3] = {iy * W + ix + 1, (iy + 1) * W + ix, (iy + 1) * W + ix + 1};
        for (int k = 0; k < 3; ++k) {
          if (in[cand[k]] > bv) {
            bv = in[cand[k]];
            best = cand[k];
          }
        }
        out[oy * Wo + ox] = bv;
        if (am) am[oy * Wo + ox] = best;
      }
    }
  });
  return y;
}

Tensor maxpool2d_backward(const Tensor& grad_out, const PoolCache& cache) {
  Tensor g(cache.in_shape);
  int rank = static_cast<int>(cache.in_shape.size());
  int H = cache.in_shape[static_cast<size_t>(rank - 2)];
  int W = cache.in_shape[static_cast<size_t>(rank - 1)];
  int64_t planes = g.numel() / (static_cast<int64_t>(H) * W);
  int64_t ohw = static_cast<int64_t>(H / 2) * (W / 2);
  if (grad_out.numel() != planes * ohw) throw ShapeMismatch("maxpool backward shape");
  parallel_for(planes, [&](int64_t pc) {
    const float* go = grad_out.data() + pc * ohw;
    const int32_t* am = cache.argmax.data() + pc * ohw;
    float* gi = g.data() + pc * H * W;
    for (int64_t i = 0; i < ohw; ++i) gi[am[i]] += go[i];
  });
  return g;
}

void sgd_step(const std::vector<ParamBlock*>& params, float lr, float momentum,
              float weight_decay) {
  parallel_for(static_cast<int64_t>(params.size()), [&](int64_t pi) {
    ParamBlock* p = params[static_cast<size_t>(pi)];
    float* v = p->momentum.data();
    float* g = p->grad.data();
    float* w = p->value.data();
    int64_t n = p->value.numel();
    for (int64_t i = 0; i < n; ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
      g[i] = 0.0f;
    }
  });
}

}  // namespace textdet
