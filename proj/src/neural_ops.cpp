#include <algorithm>

#include "pansharp/neural.hpp"

namespace pansharp::neural {

namespace {

// first index o with o*stride - pad + koff >= 0
int out_lo(int pad, int koff, int stride) {
    const int num = pad - koff;
    return num <= 0 ? 0 : (num + stride - 1) / stride;
}

// last index o with o*stride - pad + koff <= limit - 1
int out_hi(int limit, int pad, int koff, int stride, int out_len) {
    const int num = limit - 1 + pad - koff;
    if (num < 0) return -1;
    return std::min(out_len - 1, num / stride);
}

void check_conv_args(const Tensor& x, const Tensor& w, std::span<const double> bias, bool tconv) {
    const int xc = x.c;
    const int expect_in = tconv ? w.n : w.c;
    const int out_c = tconv ? w.c : w.n;
    if (xc != expect_in)
        fail(ErrorCode::ShapeMismatch, "input channels " + std::to_string(xc) +
                                           " do not match weight " + w.shape_str());
    if (w.h != w.w) fail(ErrorCode::ShapeMismatch, "kernel must be square, got " + w.shape_str());
    if (!bias.empty() && static_cast<int>(bias.size()) != out_c)
        fail(ErrorCode::ShapeMismatch, "bias size " + std::to_string(bias.size()) +
                                           " does not match out channels " + std::to_string(out_c));
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, std::span<const double> bias, int stride,
                      int pad) {
    check_conv_args(x, w, bias, false);
    const int k = w.h;
    const int ho = conv_out_len(x.h, k, stride, pad);
    const int wo = conv_out_len(x.w, k, stride, pad);
    if (ho < 1 || wo < 1)
        fail(ErrorCode::ShapeMismatch, "conv output would be empty for input " + x.shape_str());

    Tensor y(x.n, w.n, ho, wo);
    for (int in = 0; in < x.n; ++in) {
        for (int oc = 0; oc < w.n; ++oc) {
            double* yp = y.plane_ptr(in, oc);
            const double b = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
            std::fill(yp, yp + y.plane(), b);
            for (int ic = 0; ic < x.c; ++ic) {
                const double* xp = x.plane_ptr(in, ic);
                const double* wp = w.plane_ptr(oc, ic);
                for (int ky = 0; ky < k; ++ky) {
                    const int oy0 = out_lo(pad, ky, stride);
                    const int oy1 = out_hi(x.h, pad, ky, stride, ho);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wp[ky * k + kx];
                        const int ox0 = out_lo(pad, kx, stride);
                        const int ox1 = out_hi(x.w, pad, kx, stride, wo);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * x.w +
                                                 (ox0 * stride - pad + kx);
                            double* yrow = yp + static_cast<std::size_t>(oy) * wo + ox0;
                            const int cnt = ox1 - ox0 + 1;
                            if (stride == 1) {
                                for (int i = 0; i < cnt; ++i) yrow[i] += wv * xrow[i];
                            } else {
                                for (int i = 0; i < cnt; ++i) yrow[i] += wv * xrow[i * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                             int in_w) {
    const int k = w.h;
    if (gy.c != w.n)
        fail(ErrorCode::ShapeMismatch,
             "grad channels " + std::to_string(gy.c) + " do not match weight " + w.shape_str());
    Tensor gx(gy.n, w.c, in_h, in_w);
    for (int in = 0; in < gy.n; ++in) {
        for (int oc = 0; oc < w.n; ++oc) {
            const double* gp = gy.plane_ptr(in, oc);
            for (int ic = 0; ic < w.c; ++ic) {
                double* xp = gx.plane_ptr(in, ic);
                const double* wp = w.plane_ptr(oc, ic);
                for (int ky = 0; ky < k; ++ky) {
                    const int oy0 = out_lo(pad, ky, stride);
                    const int oy1 = out_hi(in_h, pad, ky, stride, gy.h);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wp[ky * k + kx];
                        const int ox0 = out_lo(pad, kx, stride);
                        const int ox1 = out_hi(in_w, pad, kx, stride, gy.w);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            double* xrow = xp + static_cast<std::size_t>(iy) * in_w +
                                           (ox0 * stride - pad + kx);
                            const double* grow = gp + static_cast<std::size_t>(oy) * gy.w + ox0;
                            const int cnt = ox1 - ox0 + 1;
                            if (stride == 1) {
                                for (int i = 0; i < cnt; ++i) xrow[i] += wv * grow[i];
                            } else {
                                for (int i = 0; i < cnt; ++i) xrow[i * stride] += wv * grow[i];
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, int stride, int pad, int k) {
    Tensor gw(gy.c, x.c, k, k);
    for (int oc = 0; oc < gy.c; ++oc) {
        for (int ic = 0; ic < x.c; ++ic) {
            double* wp = gw.plane_ptr(oc, ic);
            for (int ky = 0; ky < k; ++ky) {
                const int oy0 = out_lo(pad, ky, stride);
                const int oy1 = out_hi(x.h, pad, ky, stride, gy.h);
                for (int kx = 0; kx < k; ++kx) {
                    const int ox0 = out_lo(pad, kx, stride);
                    const int ox1 = out_hi(x.w, pad, kx, stride, gy.w);
                    double acc = 0.0;
                    for (int in = 0; in < x.n; ++in) {
                        const double* xp = x.plane_ptr(in, ic);
                        const double* gp = gy.plane_ptr(in, oc);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * x.w +
                                                 (ox0 * stride - pad + kx);
                            const double* grow = gp + static_cast<std::size_t>(oy) * gy.w + ox0;
                            const int cnt = ox1 - ox0 + 1;
                            if (stride == 1) {
                                for (int i = 0; i < cnt; ++i) acc += grow[i] * xrow[i];
                            } else {
                                for (int i = 0; i < cnt; ++i) acc += grow[i] * xrow[i * stride];
                            }
                        }
                    }
                    wp[ky * k + kx] = acc;
                }
            }
        }
    }
    return gw;
}

Tensor tconv2d_forward(const Tensor& x, const Tensor& w, std::span<const double> bias, int stride,
                       int pad, int out_pad) {
    check_conv_args(x, w, bias, true);
    const int k = w.h;
    const int ho = tconv_out_len(x.h, k, stride, pad, out_pad);
    const int wo = tconv_out_len(x.w, k, stride, pad, out_pad);
    if (ho < 1 || wo < 1)
        fail(ErrorCode::ShapeMismatch, "tconv output would be empty for input " + x.shape_str());

    Tensor y(x.n, w.c, ho, wo);
    for (int in = 0; in < x.n; ++in) {
        for (int oc = 0; oc < w.c; ++oc) {
            double* yp = y.plane_ptr(in, oc);
            const double b = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
            std::fill(yp, yp + y.plane(), b);
            for (int ic = 0; ic < x.c; ++ic) {
                const double* xp = x.plane_ptr(in, ic);
                const double* wp = w.plane_ptr(ic, oc);
                for (int ky = 0; ky < k; ++ky) {
                    const int iy0 = out_lo(pad, ky, stride);                // oy = iy*s + ky - p
                    const int iy1 = out_hi(ho, pad, ky, stride, x.h);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wp[ky * k + kx];
                        const int ix0 = out_lo(pad, kx, stride);
                        const int ix1 = out_hi(wo, pad, kx, stride, x.w);
                        for (int iy = iy0; iy <= iy1; ++iy) {
                            const int oy = iy * stride - pad + ky;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * x.w + ix0;
                            double* yrow = yp + static_cast<std::size_t>(oy) * wo +
                                           (ix0 * stride - pad + kx);
                            const int cnt = ix1 - ix0 + 1;
                            for (int i = 0; i < cnt; ++i) yrow[i * stride] += wv * xrow[i];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor tconv2d_backward_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                              int in_w) {
    const int k = w.h;
    if (gy.c != w.c)
        fail(ErrorCode::ShapeMismatch,
             "grad channels " + std::to_string(gy.c) + " do not match weight " + w.shape_str());
    Tensor gx(gy.n, w.n, in_h, in_w);
    for (int in = 0; in < gy.n; ++in) {
        for (int oc = 0; oc < w.c; ++oc) {
            const double* gp = gy.plane_ptr(in, oc);
            for (int ic = 0; ic < w.n; ++ic) {
                double* xp = gx.plane_ptr(in, ic);
                const double* wp = w.plane_ptr(ic, oc);
                for (int ky = 0; ky < k; ++ky) {
                    const int iy0 = out_lo(pad, ky, stride);
                    const int iy1 = out_hi(gy.h, pad, ky, stride, in_h);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wp[ky * k + kx];
                        const int ix0 = out_lo(pad, kx, stride);
                        const int ix1 = out_hi(gy.w, pad, kx, stride, in_w);
                        for (int iy = iy0; iy <= iy1; ++iy) {
                            const int oy = iy * stride - pad + ky;
                            double* xrow = xp + static_cast<std::size_t>(iy) * in_w + ix0;
                            const double* grow = gp + static_cast<std::size_t>(oy) * gy.w +
                                                 (ix0 * stride - pad + kx);
                            const int cnt = ix1 - ix0 + 1;
                            for (int i = 0; i < cnt; ++i) xrow[i] += wv * grow[i * stride];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor tconv2d_backward_weight(const Tensor& x, const Tensor& gy, int stride, int pad, int k) {
    Tensor gw(x.c, gy.c, k, k);
    for (int ic = 0; ic < x.c; ++ic) {
        for (int oc = 0; oc < gy.c; ++oc) {
            double* wp = gw.plane_ptr(ic, oc);
            for (int ky = 0; ky < k; ++ky) {
                const int iy0 = out_lo(pad, ky, stride);
                const int iy1 = out_hi(gy.h, pad, ky, stride, x.h);
                for (int kx = 0; kx < k; ++kx) {
                    const int ix0 = out_lo(pad, kx, stride);
                    const int ix1 = out_hi(gy.w, pad, kx, stride, x.w);
                    double acc = 0.0;
                    for (int in = 0; in < x.n; ++in) {
                        const double* xp = x.plane_ptr(in, ic);
                        const double* gp = gy.plane_ptr(in, oc);
                        for (int iy = iy0; iy <= iy1; ++iy) {
                            const int oy = iy * stride - pad + ky;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * x.w + ix0;
                            const double* grow = gp + static_cast<std::size_t>(oy) * gy.w +
                                                 (ix0 * stride - pad + kx);
                            const int cnt = ix1 - ix0 + 1;
                            for (int i = 0; i < cnt; ++i) acc += xrow[i] * grow[i * stride];
                        }
                    }
                    wp[ky * k + kx] = acc;
                }
            }
        }
    }
    return gw;
}

std::vector<double> bias_backward(const Tensor& gy) {
    std::vector<double> gb(static_cast<std::size_t>(gy.c), 0.0);
    for (int in = 0; in < gy.n; ++in)
        for (int oc = 0; oc < gy.c; ++oc) {
            const double* gp = gy.plane_ptr(in, oc);
            double acc = 0.0;
            for (std::size_t i = 0; i < gy.plane(); ++i) acc += gp[i];
            gb[static_cast<std::size_t>(oc)] += acc;
        }
    return gb;
}

}  // namespace pansharp::neural
