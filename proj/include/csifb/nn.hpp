// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"

// Exactly the layer set the two models need, hand-chained. Convolutions run
// as im2col plus a dense matrix product; backward passes are written out
// per layer and verified against central finite differences in the tests.

namespace csifb {

enum class Mode { Train, Eval };
enum class Padding { Circular, Zero };

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------- conv ----

template <typename S>
struct ConvLayer {
    int f_in = 0, f_out = 0;
    int stride_h = 1, stride_w = 1;
    Padding padding = Padding::Circular;
    Tensor<S> kernels;  // (f_out, f_in, 3, 3)
    Tensor<S> bias;     // (f_out)
    Tensor<S> grad_kernels, grad_bias;
    // per-sample patch gather pattern, rebuilt when the input plane changes
    std::vector<std::int32_t> gather;
    int gather_h = -1, gather_w = -1;
};

template <typename S>
ConvLayer<S> make_conv(int f_in, int f_out, int stride_h, int stride_w,
                       Padding padding) {
    ConvLayer<S> l;
    l.f_in = f_in;
    l.f_out = f_out;
    l.stride_h = stride_h;
    l.stride_w = stride_w;
    l.padding = padding;
    l.kernels = Tensor<S>({f_out, f_in, 3, 3});
    l.bias = Tensor<S>({f_out});
    l.grad_kernels = Tensor<S>({f_out, f_in, 3, 3});
    l.grad_bias = Tensor<S>({f_out});
    return l;
}

inline int conv_out_dim(int dim, int stride) { return (dim - 1) / stride + 1; }

namespace detail {

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

// Sample-relative source offset of every patch element, laid out column by
// column: patch row (c*3+di)*3+dj runs fastest, output position next. A -1
// marks zero padding. The pattern repeats per sample, so it is cached on the
// layer and rebuilt only when the input plane changes.
template <typename S>
const std::vector<std::int32_t>& gather_pattern(ConvLayer<S>& l, int h, int w) {
    if (l.gather_h == h && l.gather_w == w) return l.gather;
    const int oh = conv_out_dim(h, l.stride_h), ow = conv_out_dim(w, l.stride_w);
    const bool circular = l.padding == Padding::Circular;
    l.gather.assign(static_cast<size_t>(l.f_in) * 9 * oh * ow, -1);
    size_t t = 0;
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            for (int c = 0; c < l.f_in; ++c) {
                for (int di = 0; di < 3; ++di) {
                    int ii = i * l.stride_h + di - 1;
                    if (circular) ii = wrap(ii, h);
                    for (int dj = 0; dj < 3; ++dj, ++t) {
                        int jj = j * l.stride_w + dj - 1;
                        if (circular) jj = wrap(jj, w);
                        if (ii >= 0 && ii < h && jj >= 0 && jj < w)
                            l.gather[t] =
                                static_cast<std::int32_t>((c * h + ii) * w + jj);
                    }
                }
            }
        }
    }
    l.gather_h = h;
    l.gather_w = w;
    return l.gather;
}

// Patch matrix: one column per output position, f_in*9 rows.
template <typename S>
MatX<S> im2col(const Tensor<S>& x, ConvLayer<S>& l) {
    const int n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, l.stride_h), ow = conv_out_dim(w, l.stride_w);
    const auto& idx = gather_pattern(l, h, w);
    MatX<S> cols(c_in * 9, static_cast<Eigen::Index>(n_batch) * oh * ow);
    const size_t per_sample = idx.size();
    const size_t plane = static_cast<size_t>(c_in) * h * w;
    for (int n = 0; n < n_batch; ++n) {
        const S* src = x.v.data() + static_cast<size_t>(n) * plane;
        S* dst = cols.data() + static_cast<size_t>(n) * per_sample;
        for (size_t t = 0; t < per_sample; ++t)
            dst[t] = idx[t] >= 0 ? src[idx[t]] : S(0);
    }
    return cols;
}

// Adjoint of im2col: scatter-add patch gradients back into image layout.
template <typename S>
void col2im_add(const MatX<S>& grad_cols, ConvLayer<S>& l, Tensor<S>& grad_x) {
    const int n_batch = grad_x.dim(0), c_in = grad_x.dim(1);
    const int h = grad_x.dim(2), w = grad_x.dim(3);
    const auto& idx = gather_pattern(l, h, w);
    const size_t per_sample = idx.size();
    const size_t plane = static_cast<size_t>(c_in) * h * w;
    for (int n = 0; n < n_batch; ++n) {
        const S* src = grad_cols.data() + static_cast<size_t>(n) * per_sample;
        S* dst = grad_x.v.data() + static_cast<size_t>(n) * plane;
        for (size_t t = 0; t < per_sample; ++t)
            if (idx[t] >= 0) dst[idx[t]] += src[t];
    }
}

// Fixed-lane reductions: the accumulation order depends only on the element
// count, never on heap alignment, so results are reproducible run to run.
template <typename S>
double fixed_sum(const S* p, size_t n) {
    S lane[8] = {};
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int k = 0; k < 8; ++k) lane[k] += p[i + k];
    double total = 0.0;
    for (int k = 0; k < 8; ++k) total += static_cast<double>(lane[k]);
    for (; i < n; ++i) total += static_cast<double>(p[i]);
    return total;
}

template <typename S>
double fixed_dot(const S* a, const S* b, size_t n) {
    S lane[8] = {};
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int k = 0; k < 8; ++k) lane[k] += a[i + k] * b[i + k];
    double total = 0.0;
    for (int k = 0; k < 8; ++k) total += static_cast<double>(lane[k]);
    for (; i < n; ++i) total += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return total;
}

template <typename S>
double fixed_sq_dev(const S* p, size_t n, S m) {
    S lane[8] = {};
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int k = 0; k < 8; ++k) {
            S d = p[i + k] - m;
            lane[k] += d * d;
        }
    double total = 0.0;
    for (int k = 0; k < 8; ++k) total += static_cast<double>(lane[k]);
    for (; i < n; ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(m);
        total += d * d;
    }
    return total;
}

// contiguous (h*w)-long slice of one sample/channel pair
template <typename S>
inline const S* plane_ptr(const Tensor<S>& x, int n, int c, int hw) {
    return x.v.data() + (static_cast<size_t>(n) * x.dim(1) + c) * hw;
}

template <typename S>
inline Eigen::Map<const ArrX<S>> plane_of(const Tensor<S>& x, int n, int c, int hw) {
    return Eigen::Map<const ArrX<S>>(
        x.v.data() + (static_cast<size_t>(n) * x.dim(1) + c) * hw, hw);
}

template <typename S>
inline Eigen::Map<ArrX<S>> plane_of(Tensor<S>& x, int n, int c, int hw) {
    return Eigen::Map<ArrX<S>>(
        x.v.data() + (static_cast<size_t>(n) * x.dim(1) + c) * hw, hw);
}

}  // namespace detail

// Optionally hands the patch matrix back to the caller so the matching
// backward call can skip rebuilding it.
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, ConvLayer<S>& l,
                         MatX<S>* cols_out = nullptr) {
    if (x.rank() != 4 || x.dim(1) != l.f_in)
        throw ShapeError("conv input channels do not match the layer");
    const int n_batch = x.dim(0);
    const int oh = conv_out_dim(x.dim(2), l.stride_h);
    const int ow = conv_out_dim(x.dim(3), l.stride_w);
    const Eigen::Index plane = static_cast<Eigen::Index>(oh) * ow;

    MatX<S> cols = detail::im2col(x, l);
    Eigen::Map<const MatX<S>> k(l.kernels.v.data(), l.f_in * 9, l.f_out);
    // kernels are stored row-major (f_out, f_in*9); the map reads that as
    // its column-major transpose, so multiply with k on the left transposed
    MatX<S> y = k.transpose() * cols;  // (f_out, n*oh*ow)

    Tensor<S> out({n_batch, l.f_out, oh, ow});
    Eigen::Map<const ArrX<S>> bias(l.bias.v.data(), l.f_out);
    for (int n = 0; n < n_batch; ++n) {
        // each sample is row-major (f_out, oh*ow), i.e. the transpose of its
        // column slice when mapped column-major
        Eigen::Map<MatX<S>> block(
            out.v.data() + static_cast<size_t>(n) * l.f_out * plane, plane, l.f_out);
        block = y.middleCols(n * plane, plane).transpose();
        block.array().rowwise() += bias.transpose();
    }
    if (cols_out != nullptr) *cols_out = std::move(cols);
    return out;
}

// Fills l.grad_kernels / l.grad_bias and returns the input gradient. A patch
// matrix saved from the matching forward call can be passed back in; it must
// belong to the same input x.
template <typename S>
Tensor<S> conv2d_backward(const Tensor<S>& grad_out, const Tensor<S>& x, ConvLayer<S>& l,
                          const MatX<S>* cols_saved = nullptr) {
    if (x.rank() != 4 || x.dim(1) != l.f_in)
        throw ShapeError("conv input channels do not match the layer");
    const int n_batch = x.dim(0);
    const int oh = conv_out_dim(x.dim(2), l.stride_h);
    const int ow = conv_out_dim(x.dim(3), l.stride_w);
    if (grad_out.dim(0) != n_batch || grad_out.dim(1) != l.f_out ||
        grad_out.dim(2) != oh || grad_out.dim(3) != ow)
        throw ShapeError("conv gradient shape does not match the forward output");
    const Eigen::Index plane = static_cast<Eigen::Index>(oh) * ow;

    MatX<S> g(l.f_out, static_cast<Eigen::Index>(n_batch) * plane);
    for (int n = 0; n < n_batch; ++n) {
        Eigen::Map<const MatX<S>> block(
            grad_out.v.data() + static_cast<size_t>(n) * l.f_out * plane, plane,
            l.f_out);
        g.middleCols(n * plane, plane) = block.transpose();
    }

    for (int o = 0; o < l.f_out; ++o) l.grad_bias.v[o] = g.row(o).sum();

    MatX<S> cols_local;
    const MatX<S>* cols = cols_saved;
    if (cols == nullptr || cols->rows() != l.f_in * 9 ||
        cols->cols() != static_cast<Eigen::Index>(n_batch) * plane) {
        cols_local = detail::im2col(x, l);
        cols = &cols_local;
    }
    // (f_in*9, f_out) lands element-for-element on the row-major kernel grads
    Eigen::Map<MatX<S>> gk(l.grad_kernels.v.data(), l.f_in * 9, l.f_out);
    gk.noalias() = *cols * g.transpose();

    Eigen::Map<const MatX<S>> k(l.kernels.v.data(), l.f_in * 9, l.f_out);
    MatX<S> grad_cols = k * g;  // (f_in*9, n*oh*ow)
    Tensor<S> grad_x(x.shape);
    detail::col2im_add(grad_cols, l, grad_x);
    return grad_x;
}

// ----------------------------------------------------------- batchnorm ----

template <typename S>
struct BatchNormLayer {
    int channels = 0;
    S momentum = S(0.1);
    S eps = S(1e-5);
    Tensor<S> gamma, beta;
    Tensor<S> running_mean, running_var;
    Tensor<S> grad_gamma, grad_beta;
    // forward cache for the matching backward call
    Tensor<S> cache_xhat;
    std::vector<S> cache_inv_std;
    Mode cache_mode = Mode::Eval;
};

template <typename S>
BatchNormLayer<S> make_batchnorm(int channels) {
    BatchNormLayer<S> l;
    l.channels = channels;
    l.gamma = Tensor<S>({channels});
    l.gamma.fill(S(1));
    l.beta = Tensor<S>({channels});
    l.running_mean = Tensor<S>({channels});
    l.running_var = Tensor<S>({channels});
    l.running_var.fill(S(1));
    l.grad_gamma = Tensor<S>({channels});
    l.grad_beta = Tensor<S>({channels});
    return l;
}

// Train mode normalizes by biased batch statistics and folds unbiased ones
// into the running buffers (the convention checkpoint consumers expect).
template <typename S>
Tensor<S> batchnorm_forward(const Tensor<S>& x, BatchNormLayer<S>& l, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != l.channels)
        throw ShapeError("batchnorm channel mismatch");
    const int n_batch = x.dim(0), hw = x.dim(2) * x.dim(3);
    const std::int64_t per_channel = static_cast<std::int64_t>(n_batch) * hw;
    Tensor<S> y(x.shape);
    l.cache_xhat = Tensor<S>(x.shape);
    l.cache_inv_std.assign(l.channels, S(0));
    l.cache_mode = mode;

    for (int c = 0; c < l.channels; ++c) {
        double mean, var;
        if (mode == Mode::Train) {
            if (per_channel < 2)
                throw ShapeError("batchnorm needs at least 2 values per channel");
            double sum = 0.0;
            for (int n = 0; n < n_batch; ++n)
                sum += detail::fixed_sum(detail::plane_ptr(x, n, c, hw), hw);
            mean = sum / static_cast<double>(per_channel);
            double sq = 0.0;
            for (int n = 0; n < n_batch; ++n)
                sq += detail::fixed_sq_dev(detail::plane_ptr(x, n, c, hw), hw,
                                           static_cast<S>(mean));
            var = sq / static_cast<double>(per_channel);
            double unbiased = sq / static_cast<double>(per_channel - 1);
            l.running_mean.v[c] = static_cast<S>((1.0 - l.momentum) * l.running_mean.v[c] +
                                                 l.momentum * mean);
            l.running_var.v[c] = static_cast<S>((1.0 - l.momentum) * l.running_var.v[c] +
                                                l.momentum * unbiased);
        } else {
            mean = l.running_mean.v[c];
            var = l.running_var.v[c];
        }
        S inv_std = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(l.eps)));
        l.cache_inv_std[c] = inv_std;
        const S m = static_cast<S>(mean);
        for (int n = 0; n < n_batch; ++n) {
            auto xhat = detail::plane_of(l.cache_xhat, n, c, hw);
            xhat = (detail::plane_of(x, n, c, hw) - m) * inv_std;
            detail::plane_of(y, n, c, hw) = l.gamma.v[c] * xhat + l.beta.v[c];
        }
    }
    return y;
}

template <typename S>
Tensor<S> batchnorm_backward(const Tensor<S>& grad_out, BatchNormLayer<S>& l) {
    const Tensor<S>& xhat = l.cache_xhat;
    if (!grad_out.same_shape(xhat)) throw ShapeError("batchnorm gradient shape mismatch");
    const int n_batch = xhat.dim(0), hw = xhat.dim(2) * xhat.dim(3);
    const double per_channel = static_cast<double>(n_batch) * hw;
    Tensor<S> grad_x(xhat.shape);

    for (int c = 0; c < l.channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < n_batch; ++n) {
            const S* g = detail::plane_ptr(grad_out, n, c, hw);
            sum_g += detail::fixed_sum(g, hw);
            sum_gx += detail::fixed_dot(g, detail::plane_ptr(xhat, n, c, hw), hw);
        }
        l.grad_beta.v[c] = static_cast<S>(sum_g);
        l.grad_gamma.v[c] = static_cast<S>(sum_gx);
        const S scale = l.gamma.v[c] * l.cache_inv_std[c];
        if (l.cache_mode == Mode::Train) {
            const S mg = static_cast<S>(sum_g / per_channel);
            const S mgx = static_cast<S>(sum_gx / per_channel);
            for (int n = 0; n < n_batch; ++n)
                detail::plane_of(grad_x, n, c, hw) =
                    scale * (detail::plane_of(grad_out, n, c, hw) - mg -
                             detail::plane_of(xhat, n, c, hw) * mgx);
        } else {
            // running statistics are constants, so the map is affine
            for (int n = 0; n < n_batch; ++n)
                detail::plane_of(grad_x, n, c, hw) =
                    scale * detail::plane_of(grad_out, n, c, hw);
        }
    }
    return grad_x;
}

// ---------------------------------------------------------- leaky relu ----

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
    Tensor<S> y(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i)
        y.v[i] = x.v[i] > S(0) ? x.v[i] : slope * x.v[i];
    return y;
}

// x == 0 takes the negative-side slope.
template <typename S>
Tensor<S> leaky_relu_backward(const Tensor<S>& grad_out, const Tensor<S>& x, S slope) {
    if (!grad_out.same_shape(x)) throw ShapeError("leaky relu gradient shape mismatch");
    Tensor<S> grad_x(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i)
        grad_x.v[i] = x.v[i] > S(0) ? grad_out.v[i] : slope * grad_out.v[i];
    return grad_x;
}

// ----------------------------------------------------------------- pool ----

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.rank() != 4) throw ShapeError("pooling expects a 4-D tensor");
    const int n_batch = x.dim(0), c_in = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<S> y({n_batch, c_in});
    const S inv = S(1) / static_cast<S>(hw);
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < c_in; ++c)
            y.at2(n, c) =
                static_cast<S>(detail::fixed_sum(detail::plane_ptr(x, n, c, hw), hw)) *
                inv;
    return y;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& grad_out, int h, int w) {
    const int n_batch = grad_out.dim(0), c_in = grad_out.dim(1), hw = h * w;
    Tensor<S> grad_x({n_batch, c_in, h, w});
    const S inv = S(1) / static_cast<S>(hw);
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < c_in; ++c)
            detail::plane_of(grad_x, n, c, hw).setConstant(grad_out.at2(n, c) * inv);
    return grad_x;
}

// ---------------------------------------------------------------- dense ----

template <typename S>
struct DenseLayer {
    int f_in = 0, f_out = 0;
    S dropout_p = S(0);
    Tensor<S> weight;  // (f_out, f_in)
    Tensor<S> bias;    // (f_out)
    Tensor<S> grad_weight, grad_bias;
    // cache: scaled dropout mask and the dropped input
    Tensor<S> cache_mask, cache_input;
    Mode cache_mode = Mode::Eval;
};

template <typename S>
DenseLayer<S> make_dense(int f_in, int f_out, S dropout_p) {
    if (dropout_p < S(0) || dropout_p >= S(1))
        throw ConfigError("dropout probability must be in [0, 1)");
    DenseLayer<S> l;
    l.f_in = f_in;
    l.f_out = f_out;
    l.dropout_p = dropout_p;
    l.weight = Tensor<S>({f_out, f_in});
    l.bias = Tensor<S>({f_out});
    l.grad_weight = Tensor<S>({f_out, f_in});
    l.grad_bias = Tensor<S>({f_out});
    return l;
}

// Inverted dropout on the input feature vector, then x W^T + b. In train
// mode a fresh mask is drawn from rng; passing rng = nullptr reuses the
// cached mask, which is how the finite-difference checks freeze it.
template <typename S>
Tensor<S> dense_forward(const Tensor<S>& x, DenseLayer<S>& l, Mode mode,
                        Rng* rng = nullptr) {
    if (x.rank() != 2 || x.dim(1) != l.f_in)
        throw ShapeError("dense input features do not match the layer");
    const int n_batch = x.dim(0);
    l.cache_mode = mode;

    Tensor<S> dropped = x;
    if (mode == Mode::Train && l.dropout_p > S(0)) {
        if (rng != nullptr) {
            l.cache_mask = Tensor<S>(x.shape);
            const S keep = S(1) - l.dropout_p;
            for (auto& m : l.cache_mask.v)
                m = rng->uniform() < static_cast<double>(l.dropout_p) ? S(0)
                                                                      : S(1) / keep;
        }
        if (!l.cache_mask.same_shape(x))
            throw ShapeError("no dropout mask cached for this batch shape");
        for (size_t i = 0; i < dropped.v.size(); ++i) dropped.v[i] *= l.cache_mask.v[i];
    }
    l.cache_input = dropped;

    Eigen::Map<const MatX<S>> xin(dropped.v.data(), l.f_in, n_batch);
    Eigen::Map<const MatX<S>> wmat(l.weight.v.data(), l.f_in, l.f_out);
    Tensor<S> out({n_batch, l.f_out});
    Eigen::Map<MatX<S>> omat(out.v.data(), l.f_out, n_batch);
    omat.noalias() = wmat.transpose() * xin;
    Eigen::Map<const ArrX<S>> bias(l.bias.v.data(), l.f_out);
    omat.array().colwise() += bias;
    return out;
}

template <typename S>
Tensor<S> dense_backward(const Tensor<S>& grad_out, DenseLayer<S>& l) {
    const int n_batch = grad_out.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(1) != l.f_out)
        throw ShapeError("dense gradient shape mismatch");

    Eigen::Map<const MatX<S>> g(grad_out.v.data(), l.f_out, n_batch);
    Eigen::Map<const MatX<S>> xin(l.cache_input.v.data(), l.f_in, n_batch);
    // (f_in, f_out) lands element-for-element on the row-major weight grads
    Eigen::Map<MatX<S>> gw(l.grad_weight.v.data(), l.f_in, l.f_out);
    gw.noalias() = xin * g.transpose();
    for (int o = 0; o < l.f_out; ++o) l.grad_bias.v[o] = g.row(o).sum();

    Eigen::Map<const MatX<S>> wmat(l.weight.v.data(), l.f_in, l.f_out);
    Tensor<S> grad_x({n_batch, l.f_in});
    Eigen::Map<MatX<S>> gx(grad_x.v.data(), l.f_in, n_batch);
    gx.noalias() = wmat * g;
    if (l.cache_mode == Mode::Train && l.dropout_p > S(0))
        for (size_t i = 0; i < grad_x.v.size(); ++i) grad_x.v[i] *= l.cache_mask.v[i];
    return grad_x;
}

// -------------------------------------------------------------- sigmoid ----

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> y(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i) {
        S v = x.v[i];
        if (v >= S(0)) {
            y.v[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            S e = std::exp(v);
            y.v[i] = e / (S(1) + e);
        }
    }
    return y;
}

template <typename S>
Tensor<S> sigmoid_backward(const Tensor<S>& grad_out, const Tensor<S>& y) {
    if (!grad_out.same_shape(y)) throw ShapeError("sigmoid gradient shape mismatch");
    Tensor<S> grad_x(y.shape);
    for (size_t i = 0; i < y.v.size(); ++i)
        grad_x.v[i] = grad_out.v[i] * y.v[i] * (S(1) - y.v[i]);
    return grad_x;
}

// ----------------------------------------------------------- parameters ----

template <typename S>
struct ParamView {
    std::string name;
    Tensor<S>* value = nullptr;
    Tensor<S>* grad = nullptr;
};

// ----------------------------------------------------------------- adam ----

template <typename S>
struct AdamState {
    S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
    long step = 0;
    std::map<std::string, Tensor<S>> m, v;
};

template <typename S>
void adam_step(const std::vector<ParamView<S>>& params, AdamState<S>& st, S lr) {
    st.step += 1;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(static_cast<double>(st.beta1), t);
    const double c2 = 1.0 - std::pow(static_cast<double>(st.beta2), t);
    for (const ParamView<S>& p : params) {
        Tensor<S>& m = st.m.try_emplace(p.name, Tensor<S>(p.value->shape)).first->second;
        Tensor<S>& v = st.v.try_emplace(p.name, Tensor<S>(p.value->shape)).first->second;
        if (!m.same_shape(*p.value) || !p.grad->same_shape(*p.value))
            throw ShapeError("optimizer state shape mismatch for " + p.name);
        const Eigen::Index size = static_cast<Eigen::Index>(p.value->v.size());
        Eigen::Map<ArrX<S>> ma(m.v.data(), size), va(v.v.data(), size);
        Eigen::Map<ArrX<S>> theta(p.value->v.data(), size);
        Eigen::Map<const ArrX<S>> g(p.grad->v.data(), size);
        ma = st.beta1 * ma + (S(1) - st.beta1) * g;
        va = st.beta2 * va + (S(1) - st.beta2) * g.square();
        theta -= lr * (ma / static_cast<S>(c1)) /
                 ((va / static_cast<S>(c2)).sqrt() + st.eps);
    }
}

// ----------------------------------------------------------- conv block ----

// conv -> batchnorm -> leaky relu, the repeated unit of both models.
template <typename S>
struct ConvBlock {
    ConvLayer<S> conv;
    BatchNormLayer<S> bn;
    S slope = S(0.1);
    Tensor<S> cache_x, cache_bn_out;
    MatX<S> cache_cols;

    Tensor<S> forward(const Tensor<S>& x, Mode mode) {
        cache_x = x;
        Tensor<S> c = conv2d_forward(x, conv, &cache_cols);
        cache_bn_out = batchnorm_forward(c, bn, mode);
        return leaky_relu(cache_bn_out, slope);
    }

    Tensor<S> backward(const Tensor<S>& grad_out) {
        Tensor<S> g = leaky_relu_backward(grad_out, cache_bn_out, slope);
        g = batchnorm_backward(g, bn);
        return conv2d_backward(g, cache_x, conv, &cache_cols);
    }
};

template <typename S>
ConvBlock<S> make_conv_block(int f_in, int f_out, int stride_h, int stride_w,
                             Padding padding) {
    ConvBlock<S> b;
    b.conv = make_conv<S>(f_in, f_out, stride_h, stride_w, padding);
    b.bn = make_batchnorm<S>(f_out);
    return b;
}

// Shared five-block trunk ending in a global average pool.
template <typename S>
struct ConvTrunk {
    std::array<ConvBlock<S>, 5> blocks;
    int last_h = 0, last_w = 0;

    Tensor<S> forward(const Tensor<S>& x, Mode mode) {
        Tensor<S> t = x;
        for (auto& b : blocks) t = b.forward(t, mode);
        last_h = t.dim(2);
        last_w = t.dim(3);
        return global_avg_pool(t);
    }

    Tensor<S> backward(const Tensor<S>& grad_pooled) {
        Tensor<S> g = global_avg_pool_backward(grad_pooled, last_h, last_w);
        for (int i = 4; i >= 0; --i) g = blocks[static_cast<size_t>(i)].backward(g);
        return g;
    }
};

template <typename S>
ConvTrunk<S> make_trunk(Padding padding) {
    ConvTrunk<S> t;
    t.blocks[0] = make_conv_block<S>(2, 256, 1, 1, padding);
    t.blocks[1] = make_conv_block<S>(256, 512, 3, 1, padding);
    t.blocks[2] = make_conv_block<S>(512, 512, 3, 3, padding);
    t.blocks[3] = make_conv_block<S>(512, 512, 3, 3, padding);
    t.blocks[4] = make_conv_block<S>(512, 512, 3, 3, padding);
    return t;
}

template <typename S>
void collect_params(ConvBlock<S>& b, const std::string& prefix,
                    std::vector<ParamView<S>>& out) {
    out.push_back({prefix + ".conv.kernels", &b.conv.kernels, &b.conv.grad_kernels});
    out.push_back({prefix + ".conv.bias", &b.conv.bias, &b.conv.grad_bias});
    out.push_back({prefix + ".bn.gamma", &b.bn.gamma, &b.bn.grad_gamma});
    out.push_back({prefix + ".bn.beta", &b.bn.beta, &b.bn.grad_beta});
}

template <typename S>
void collect_params(ConvTrunk<S>& t, std::vector<ParamView<S>>& out) {
    for (size_t i = 0; i < t.blocks.size(); ++i)
        collect_params(t.blocks[i], "cb" + std::to_string(i + 1), out);
}

// ------------------------------------------------------- initialization ----

// Kaiming-uniform fan-in bounds; batchnorm stays at gamma=1, beta=0.
template <typename S>
void kaiming_init(Tensor<S>& weights, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : weights.v) w = static_cast<S>(rng.uniform(-bound, bound));
}

template <typename S>
void init_conv(ConvLayer<S>& l, Rng& rng) {
    kaiming_init(l.kernels, l.f_in * 9, rng);
    l.bias.fill(S(0));
}

template <typename S>
void init_dense(DenseLayer<S>& l, Rng& rng) {
    kaiming_init(l.weight, l.f_in, rng);
    l.bias.fill(S(0));
}

template <typename S>
void init_trunk(ConvTrunk<S>& t, Rng& rng) {
    for (auto& b : t.blocks) init_conv(b.conv, rng);
}

// ------------------------------------------------------- gradient check ----

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

// Central differences over a random parameter subset. loss_and_backward
// must populate every grad buffer; loss_only must not touch them.
inline GradCheckResult gradient_check(const std::vector<ParamView<double>>& params,
                                      const std::function<double()>& loss_and_backward,
                                      const std::function<double()>& loss_only,
                                      int min_params, uint64_t seed,
                                      double step = 1e-5) {
    loss_and_backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad->v);

    std::int64_t total = 0;
    for (const auto& p : params) total += p.value->numel();
    Rng rng(seed);
    GradCheckResult result;
    while (result.checked < min_params) {
        std::int64_t flat = static_cast<std::int64_t>(
            rng.uniform_int(static_cast<uint64_t>(total)));
        size_t pi = 0;
        while (flat >= params[pi].value->numel()) {
            flat -= params[pi].value->numel();
            ++pi;
        }
        double& theta = params[pi].value->v[static_cast<size_t>(flat)];
        const double saved = theta;
        theta = saved + step;
        double up = loss_only();
        theta = saved - step;
        double down = loss_only();
        theta = saved;
        double numeric = (up - down) / (2.0 * step);
        double ana = analytic[pi][static_cast<size_t>(flat)];
        double rel = std::abs(ana - numeric) /
                     std::max(std::abs(ana) + std::abs(numeric), 1e-7);
        result.max_rel_err = std::max(result.max_rel_err, rel);
        ++result.checked;
    }
    return result;
}

}  // namespace csifb
