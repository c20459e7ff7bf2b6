#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tinydet/errors.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.89;
    double beta2 = 0.99;
    double epsilon = 1e-9;
    double weight_decay = 1e-4;
    // The published update divides the raw first moment by sqrt(v_hat +
    // epsilon) with no bias correction on m; the default applies standard
    // bias correction to both moments and adds epsilon outside the root.
    bool literal_update = false;
};

struct AdamWState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// One decoupled-weight-decay Adam step, in place. Moments are lazily sized
// on first use.
inline void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                       AdamWState& state, const AdamWConfig& cfg) {
    if (params.size() != grads.size()) {
        throw ShapeMismatch("adamw: " + std::to_string(params.size()) + " params vs " +
                            std::to_string(grads.size()) + " grads");
    }
    if (state.m.empty() && state.v.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeMismatch("adamw: moment vectors do not match parameter count");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        double update;
        if (cfg.literal_update) {
            const double v_hat = state.v[i] / bc2;
            update = state.m[i] / std::sqrt(v_hat + cfg.epsilon);
        } else {
            const double m_hat = state.m[i] / bc1;
            const double v_hat = state.v[i] / bc2;
            update = m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
        params[i] -= cfg.learning_rate * update + cfg.learning_rate * cfg.weight_decay * params[i];
    }
}

// Bilinear resample with half-pixel-centered sampling; border samples clamp.
// Interpolation runs in double per channel.
inline Tensor3 resize_bilinear(const Tensor3& src, int out_height, int out_width) {
    if (out_height <= 0 || out_width <= 0) {
        throw InvalidShape("resize target must be positive, got " +
                           std::to_string(out_height) + " x " + std::to_string(out_width));
    }
    const int in_h = src.height(), in_w = src.width(), ch = src.channels();
    Tensor3 dst(Shape3{out_height, out_width, ch});
    const double sy = static_cast<double>(in_h) / out_height;
    const double sx = static_cast<double>(in_w) / out_width;
    for (int r = 0; r < out_height; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - y0;
        for (int c = 0; c < out_width; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - x0;
            const float* q00 = src.cell(y0, x0);
            const float* q01 = src.cell(y0, x1);
            const float* q10 = src.cell(y1, x0);
            const float* q11 = src.cell(y1, x1);
            float* out = dst.cell(r, c);
            for (int k = 0; k < ch; ++k) {
                const double top = (1.0 - wx) * q00[k] + wx * q01[k];
                const double bot = (1.0 - wx) * q10[k] + wx * q11[k];
                out[k] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return dst;
}

struct PreprocessConfig {
    int target_size = 608;   // must be a positive multiple of 32
    float scale = 255.0f;
    std::array<float, 3> channel_means{0.0f, 0.0f, 0.0f};
};

// Stretch-resizes (no letterboxing) to the square network input, then maps
// each value v to v / scale - mean[channel].
inline Tensor3 preprocess(const Tensor3& image, const PreprocessConfig& cfg = {}) {
    if (image.channels() != 3) {
        throw ShapeMismatch("preprocess expects 3 channels, got " +
                            std::to_string(image.channels()));
    }
    if (cfg.target_size <= 0 || cfg.target_size % 32 != 0) {
        throw InvalidInputSize("preprocess target " + std::to_string(cfg.target_size) +
                               " is not a positive multiple of 32");
    }
    Tensor3 resized = resize_bilinear(image, cfg.target_size, cfg.target_size);
    float* p = resized.data();
    const std::size_t n = resized.size();
    for (std::size_t i = 0; i < n; i += 3) {
        p[i] = p[i] / cfg.scale - cfg.channel_means[0];
        p[i + 1] = p[i + 1] / cfg.scale - cfg.channel_means[1];
        p[i + 2] = p[i + 2] / cfg.scale - cfg.channel_means[2];
    }
    return resized;
}

}  // namespace tinydet
