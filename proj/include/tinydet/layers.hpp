#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "tinydet/tensor.hpp"

namespace tinydet {

inline constexpr float kBatchNormEpsilon = 1e-5f;
inline constexpr float kLeakySlope = 0.1f;

// Inference-time batch normalization statistics, one entry per filter.
struct BatchNormParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> rolling_mean;
    std::vector<float> rolling_var;
};

// Convolution parameters. Weights are laid out darknet style:
// (filter, in_channel, kernel_row, kernel_col), bias one per filter.
struct ConvParams {
    int filters = 0;
    int kernel = 1;
    int stride = 1;
    std::vector<float> weights;
    std::vector<float> bias;
    std::optional<BatchNormParams> batchnorm;

    std::size_t weight_count(int in_channels) const {
        return static_cast<std::size_t>(filters) * in_channels * kernel * kernel;
    }
};

struct PoolParams {
    int size = 2;
    int stride = 2;
};

namespace detail {

// Runs fn(begin, end) over disjoint row ranges. Each row is computed
// independently, so the result is bit-identical to the sequential run.
template <typename Fn>
void parallel_rows(int rows, int threads, Fn&& fn) {
    if (threads <= 1 || rows <= 1) {
        fn(0, rows);
        return;
    }
    const int workers = std::min(threads, rows);
    const int chunk = (rows + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        const int begin = t * chunk;
        const int end = std::min(rows, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace detail

// 2D convolution with "same" zero padding of kernel/2. Output is
// (ceil(H/stride), ceil(W/stride), filters); taps outside the image read 0.
// Accumulation order per output element is fixed (kernel row, kernel col,
// input channel), so threading does not change results.
inline Tensor3 conv2d(const Tensor3& input, const ConvParams& p, int threads = 1) {
    const int in_c = input.channels();
    const int k = p.kernel;
    if (p.weights.size() != p.weight_count(in_c)) {
        throw ShapeMismatch("conv weights hold " + std::to_string(p.weights.size()) +
                            " values but input with " + std::to_string(in_c) +
                            " channels needs " + std::to_string(p.weight_count(in_c)));
    }
    if (p.bias.size() != static_cast<std::size_t>(p.filters)) {
        throw ShapeMismatch("conv bias length " + std::to_string(p.bias.size()) +
                            " does not match " + std::to_string(p.filters) + " filters");
    }
    const int pad = k / 2;
    const int out_h = detail::ceil_div(input.height(), p.stride);
    const int out_w = detail::ceil_div(input.width(), p.stride);
    Tensor3 out({out_h, out_w, p.filters});

    // Repack weights to (kernel_row, kernel_col, in_channel, filter) so the
    // innermost filter loop walks contiguous memory in both weights and the
    // output cell.
    std::vector<float> packed(p.weights.size());
    for (int f = 0; f < p.filters; ++f) {
        for (int ci = 0; ci < in_c; ++ci) {
            for (int kr = 0; kr < k; ++kr) {
                for (int kc = 0; kc < k; ++kc) {
                    packed[((static_cast<std::size_t>(kr) * k + kc) * in_c + ci) * p.filters + f] =
                        p.weights[((static_cast<std::size_t>(f) * in_c + ci) * k + kr) * k + kc];
                }
            }
        }
    }

    detail::parallel_rows(out_h, threads, [&](int row_begin, int row_end) {
        for (int r = row_begin; r < row_end; ++r) {
            for (int c = 0; c < out_w; ++c) {
                float* dst = out.cell(r, c);
                std::memcpy(dst, p.bias.data(), sizeof(float) * p.filters);
                for (int kr = 0; kr < k; ++kr) {
                    const int ri = r * p.stride + kr - pad;
                    if (ri < 0 || ri >= input.height()) continue;
                    for (int kc = 0; kc < k; ++kc) {
                        const int ci_col = c * p.stride + kc - pad;
                        if (ci_col < 0 || ci_col >= input.width()) continue;
                        const float* src = input.cell(ri, ci_col);
                        const float* wrow =
                            packed.data() +
                            (static_cast<std::size_t>(kr) * k + kc) * in_c * p.filters;
                        for (int ci = 0; ci < in_c; ++ci) {
                            const float v = src[ci];
                            const float* wp = wrow + static_cast<std::size_t>(ci) * p.filters;
                            for (int f = 0; f < p.filters; ++f) {
                                dst[f] += v * wp[f];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// Per-channel y = gamma * (x - mean) / sqrt(var + eps) + beta.
inline Tensor3 batchnorm_apply(const Tensor3& x, const ConvParams& p,
                               float eps = kBatchNormEpsilon) {
    if (!p.batchnorm) {
        throw MissingBatchNorm("conv params carry no batch norm record");
    }
    const BatchNormParams& bn = *p.batchnorm;
    if (static_cast<int>(bn.gamma.size()) != x.channels()) {
        throw ShapeMismatch("batch norm holds " + std::to_string(bn.gamma.size()) +
                            " channels, tensor has " + std::to_string(x.channels()));
    }
    const int ch = x.channels();
    std::vector<float> scale(ch), shift(ch);
    for (int f = 0; f < ch; ++f) {
        const double s = bn.gamma[f] / std::sqrt(static_cast<double>(bn.rolling_var[f]) + eps);
        scale[f] = static_cast<float>(s);
        shift[f] = static_cast<float>(bn.beta[f] - s * bn.rolling_mean[f]);
    }
    Tensor3 out(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    const std::size_t cells = x.size() / ch;
    for (std::size_t i = 0; i < cells; ++i) {
        for (int f = 0; f < ch; ++f) {
            dst[f] = src[f] * scale[f] + shift[f];
        }
        src += ch;
        dst += ch;
    }
    return out;
}

// Folds batch norm into the convolution weights and bias so that
// conv2d(folded) matches batchnorm_apply(conv2d(original)).
inline ConvParams fold_batchnorm(const ConvParams& p, float eps = kBatchNormEpsilon) {
    if (!p.batchnorm) {
        throw MissingBatchNorm("conv params carry no batch norm record");
    }
    const BatchNormParams& bn = *p.batchnorm;
    ConvParams folded;
    folded.filters = p.filters;
    folded.kernel = p.kernel;
    folded.stride = p.stride;
    folded.weights = p.weights;
    folded.bias.resize(p.filters);
    const std::size_t per_filter = p.weights.size() / p.filters;
    for (int f = 0; f < p.filters; ++f) {
        const double s = bn.gamma[f] / std::sqrt(static_cast<double>(bn.rolling_var[f]) + eps);
        for (std::size_t i = 0; i < per_filter; ++i) {
            folded.weights[f * per_filter + i] =
                static_cast<float>(p.weights[f * per_filter + i] * s);
        }
        folded.bias[f] = static_cast<float>(bn.beta[f] + s * (p.bias[f] - bn.rolling_mean[f]));
    }
    return folded;
}

inline Tensor3 leaky_relu(const Tensor3& x, float slope = kLeakySlope) {
    Tensor3 out(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        dst[i] = src[i] > 0.0f ? src[i] : slope * src[i];
    }
    return out;
}

// 2x2 max pooling. Stride 2 halves the spatial dimensions; stride 1 keeps
// them, padding one -inf row/column at the bottom/right so every cell has a
// full window.
inline Tensor3 maxpool(const Tensor3& x, const PoolParams& p) {
    if (p.size != 2 || (p.stride != 1 && p.stride != 2)) {
        throw UnsupportedPool("only 2x2 pooling with stride 1 or 2 is supported, got " +
                              std::to_string(p.size) + "x" + std::to_string(p.size) + "/" +
                              std::to_string(p.stride));
    }
    const int out_h = detail::ceil_div(x.height(), p.stride);
    const int out_w = detail::ceil_div(x.width(), p.stride);
    const int ch = x.channels();
    Tensor3 out({out_h, out_w, ch});
    const float neg_inf = -std::numeric_limits<float>::infinity();
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            float* dst = out.cell(r, c);
            for (int f = 0; f < ch; ++f) dst[f] = neg_inf;
            for (int dr = 0; dr < p.size; ++dr) {
                const int ri = r * p.stride + dr;
                if (ri >= x.height()) continue;
                for (int dc = 0; dc < p.size; ++dc) {
                    const int ci = c * p.stride + dc;
                    if (ci >= x.width()) continue;
                    const float* src = x.cell(ri, ci);
                    for (int f = 0; f < ch; ++f) {
                        dst[f] = std::max(dst[f], src[f]);
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor3 upsample_nearest(const Tensor3& x, int factor) {
    if (factor < 1) {
        throw InvalidShape("upsample factor must be >= 1, got " + std::to_string(factor));
    }
    Tensor3 out({x.height() * factor, x.width() * factor, x.channels()});
    const std::size_t row_bytes = sizeof(float) * x.channels();
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            std::memcpy(out.cell(r, c), x.cell(r / factor, c / factor), row_bytes);
        }
    }
    return out;
}

// Channel concatenation, a's channels first.
inline Tensor3 concat_channels(const Tensor3& a, const Tensor3& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeMismatch("cannot concatenate " + a.shape().str() + " with " +
                            b.shape().str());
    }
    Tensor3 out({a.height(), a.width(), a.channels() + b.channels()});
    for (int r = 0; r < a.height(); ++r) {
        for (int c = 0; c < a.width(); ++c) {
            float* dst = out.cell(r, c);
            std::memcpy(dst, a.cell(r, c), sizeof(float) * a.channels());
            std::memcpy(dst + a.channels(), b.cell(r, c), sizeof(float) * b.channels());
        }
    }
    return out;
}

}  // namespace tinydet
