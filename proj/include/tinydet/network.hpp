#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinydet/anchors.hpp"
#include "tinydet/layers.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

enum class LayerKind { Conv, MaxPool, Upsample, Route, Yolo };

// Graph-level convolution descriptor; the actual weights live in Network.
struct ConvDesc {
    int filters = 0;
    int kernel = 1;
    int stride = 1;
    bool batchnorm = true;
    bool activation = true;
};

struct LayerSpec {
    LayerKind kind;
    std::optional<ConvDesc> conv;
    std::optional<PoolParams> pool;
    std::vector<int> route_sources;        // 1-2 absolute indices of earlier layers
    std::vector<int> yolo_anchor_indices;  // 3 indices into the AnchorSet

    static LayerSpec make_conv(int filters, int kernel, int stride, bool batchnorm = true,
                               bool activation = true) {
        LayerSpec l{LayerKind::Conv};
        l.conv = ConvDesc{filters, kernel, stride, batchnorm, activation};
        return l;
    }
    static LayerSpec make_maxpool(int size, int stride) {
        LayerSpec l{LayerKind::MaxPool};
        l.pool = PoolParams{size, stride};
        return l;
    }
    static LayerSpec make_upsample() { return LayerSpec{LayerKind::Upsample}; }
    static LayerSpec make_route(std::vector<int> sources) {
        LayerSpec l{LayerKind::Route};
        l.route_sources = std::move(sources);
        return l;
    }
    static LayerSpec make_yolo(std::vector<int> anchor_indices) {
        LayerSpec l{LayerKind::Yolo};
        l.yolo_anchor_indices = std::move(anchor_indices);
        return l;
    }
};

struct NetworkSpec {
    int input_size = 608;
    int input_channels = 3;
    int num_classes = 1;
    std::vector<LayerSpec> layers;
    AnchorSet anchors = default_anchors();

    int head_filters() const { return 3 * (5 + num_classes); }
};

namespace detail {

inline void check_input_size(int input_size) {
    if (input_size <= 0 || input_size % 32 != 0) {
        throw InvalidInputSize("input size must be a positive multiple of 32, got " +
                               std::to_string(input_size));
    }
}

// Layers 0-12 shared by both architectures: the darknet-19 style backbone.
inline void append_backbone(std::vector<LayerSpec>& layers) {
    layers.push_back(LayerSpec::make_conv(16, 3, 1));     // 0
    layers.push_back(LayerSpec::make_maxpool(2, 2));      // 1
    layers.push_back(LayerSpec::make_conv(32, 3, 1));     // 2
    layers.push_back(LayerSpec::make_maxpool(2, 2));      // 3
    layers.push_back(LayerSpec::make_conv(64, 3, 1));     // 4
    layers.push_back(LayerSpec::make_maxpool(2, 2));      // 5
    layers.push_back(LayerSpec::make_conv(128, 3, 1));    // 6
    layers.push_back(LayerSpec::make_maxpool(2, 2));      // 7
    layers.push_back(LayerSpec::make_conv(256, 3, 1));    // 8
    layers.push_back(LayerSpec::make_maxpool(2, 2));      // 9
    layers.push_back(LayerSpec::make_conv(512, 3, 1));    // 10
    layers.push_back(LayerSpec::make_maxpool(2, 1));      // 11
    layers.push_back(LayerSpec::make_conv(1024, 3, 1));   // 12
}

}  // namespace detail

// The original two-scale YOLOv3-tiny graph (24 layers, heads at strides
// 32 and 16). Head convolutions carry bias and no batch norm or activation;
// the decode step applies its own nonlinearities.
inline NetworkSpec build_original_tiny(int input_size, int num_classes,
                                       AnchorSet anchors = default_anchors()) {
    detail::check_input_size(input_size);
    NetworkSpec spec;
    spec.input_size = input_size;
    spec.num_classes = num_classes;
    spec.anchors = anchors;
    const int head = spec.head_filters();
    auto& L = spec.layers;
    detail::append_backbone(L);
    L.push_back(LayerSpec::make_conv(256, 1, 1));             // 13
    L.push_back(LayerSpec::make_conv(512, 3, 1));             // 14
    L.push_back(LayerSpec::make_conv(head, 1, 1, false, false));  // 15
    L.push_back(LayerSpec::make_yolo({6, 7, 8}));             // 16, stride 32
    L.push_back(LayerSpec::make_route({13}));                 // 17
    L.push_back(LayerSpec::make_conv(128, 1, 1));             // 18
    L.push_back(LayerSpec::make_upsample());                  // 19
    L.push_back(LayerSpec::make_route({19, 8}));              // 20
    L.push_back(LayerSpec::make_conv(256, 3, 1));             // 21
    L.push_back(LayerSpec::make_conv(head, 1, 1, false, false));  // 22
    L.push_back(LayerSpec::make_yolo({3, 4, 5}));             // 23, stride 16
    return spec;
}

// The three-scale variant: same backbone, plus a third branch that upsamples
// once more and fuses with layer 6, giving heads at strides 32, 16 and 8
// (31 layers).
inline NetworkSpec build_custom_tiny3(int input_size, int num_classes,
                                      AnchorSet anchors = default_anchors()) {
    detail::check_input_size(input_size);
    NetworkSpec spec;
    spec.input_size = input_size;
    spec.num_classes = num_classes;
    spec.anchors = anchors;
    const int head = spec.head_filters();
    auto& L = spec.layers;
    detail::append_backbone(L);
    L.push_back(LayerSpec::make_conv(256, 1, 1));             // 13
    L.push_back(LayerSpec::make_conv(512, 3, 1));             // 14
    L.push_back(LayerSpec::make_conv(head, 1, 1, false, false));  // 15
    L.push_back(LayerSpec::make_yolo({6, 7, 8}));             // 16, stride 32
    L.push_back(LayerSpec::make_route({13}));                 // 17
    L.push_back(LayerSpec::make_conv(128, 1, 1));             // 18
    L.push_back(LayerSpec::make_upsample());                  // 19
    L.push_back(LayerSpec::make_route({19, 8}));              // 20
    L.push_back(LayerSpec::make_conv(256, 3, 1));             // 21
    L.push_back(LayerSpec::make_conv(head, 1, 1, false, false));  // 22
    L.push_back(LayerSpec::make_yolo({3, 4, 5}));             // 23, stride 16
    L.push_back(LayerSpec::make_route({21}));                 // 24
    L.push_back(LayerSpec::make_conv(128, 1, 1));             // 25
    L.push_back(LayerSpec::make_upsample());                  // 26
    L.push_back(LayerSpec::make_route({26, 6}));              // 27
    L.push_back(LayerSpec::make_conv(256, 3, 1));             // 28
    L.push_back(LayerSpec::make_conv(head, 1, 1, false, false));  // 29
    L.push_back(LayerSpec::make_yolo({0, 1, 2}));             // 30, stride 8
    return spec;
}

// Computes every layer's output shape symbolically. Route and Yolo layers
// carry the shape of what they re-reference.
inline std::vector<Shape3> layer_output_shapes(const NetworkSpec& spec) {
    std::vector<Shape3> shapes;
    shapes.reserve(spec.layers.size());
    Shape3 prev{spec.input_size, spec.input_size, spec.input_channels};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        Shape3 out;
        switch (layer.kind) {
            case LayerKind::Conv:
                out = {detail::ceil_div(prev.height, layer.conv->stride),
                       detail::ceil_div(prev.width, layer.conv->stride), layer.conv->filters};
                break;
            case LayerKind::MaxPool:
                out = {detail::ceil_div(prev.height, layer.pool->stride),
                       detail::ceil_div(prev.width, layer.pool->stride), prev.channels};
                break;
            case LayerKind::Upsample:
                out = {prev.height * 2, prev.width * 2, prev.channels};
                break;
            case LayerKind::Route: {
                for (int src : layer.route_sources) {
                    if (src < 0 || src >= static_cast<int>(i)) {
                        throw ShapeMismatch("layer " + std::to_string(i) +
                                            ": route source " + std::to_string(src) +
                                            " is not an earlier layer");
                    }
                }
                out = shapes[layer.route_sources[0]];
                if (layer.route_sources.size() == 2) {
                    const Shape3& b = shapes[layer.route_sources[1]];
                    if (out.height != b.height || out.width != b.width) {
                        throw ShapeMismatch("layer " + std::to_string(i) +
                                            ": route shapes " + out.str() + " and " + b.str() +
                                            " differ spatially");
                    }
                    out.channels += b.channels;
                }
                break;
            }
            case LayerKind::Yolo:
                out = prev;
                break;
        }
        shapes.push_back(out);
        prev = out;
    }
    return shapes;
}

struct WeightFileHeader {
    std::int32_t major = 0;
    std::int32_t minor = 2;
    std::int32_t revision = 0;
    std::uint64_t seen = 0;

    bool seen_is_64bit() const { return major * 10 + minor >= 2; }
    std::size_t byte_size() const { return 12 + (seen_is_64bit() ? 8 : 4); }
};

// A NetworkSpec with its convolution parameters bound, ready for forward().
struct Network {
    NetworkSpec spec;
    WeightFileHeader header;
    float bn_epsilon = kBatchNormEpsilon;
    std::vector<ConvParams> conv_params;  // one entry per Conv layer, graph order

    // Absorbs batch norm into the convolution weights; forward() then skips
    // the separate normalization pass.
    void fold_batchnorms() {
        for (ConvParams& p : conv_params) {
            if (p.batchnorm) p = fold_batchnorm(p, bn_epsilon);
        }
    }
};

// Input channel count of each Conv layer, in graph order.
inline std::vector<int> conv_input_channels(const NetworkSpec& spec) {
    const std::vector<Shape3> shapes = layer_output_shapes(spec);
    std::vector<int> result;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::Conv) continue;
        result.push_back(i == 0 ? spec.input_channels : shapes[i - 1].channels);
    }
    return result;
}

// Total float count of the parameter block that follows the file header.
inline std::size_t expected_weight_floats(const NetworkSpec& spec) {
    const std::vector<int> in_channels = conv_input_channels(spec);
    std::size_t total = 0;
    std::size_t conv_i = 0;
    for (const LayerSpec& layer : spec.layers) {
        if (layer.kind != LayerKind::Conv) continue;
        const ConvDesc& d = *layer.conv;
        const std::size_t w =
            static_cast<std::size_t>(d.filters) * in_channels[conv_i] * d.kernel * d.kernel;
        total += w + static_cast<std::size_t>(d.filters) * (d.batchnorm ? 4 : 1);
        ++conv_i;
    }
    return total;
}

// Parses a darknet weight file: header (three int32, then a 64-bit seen
// counter when major*10+minor >= 2, else 32-bit), followed per Conv layer by
// beta/gamma/mean/var then weights for batch-normalized layers, or bias then
// weights otherwise. The file must be consumed exactly.
inline Network load_darknet_weights(const NetworkSpec& spec,
                                    std::span<const std::uint8_t> bytes) {
    Network net;
    net.spec = spec;
    if (bytes.size() < 12) {
        throw MalformedHeader("weight file holds " + std::to_string(bytes.size()) +
                              " bytes, header needs at least 12");
    }
    std::memcpy(&net.header.major, bytes.data(), 4);
    std::memcpy(&net.header.minor, bytes.data() + 4, 4);
    std::memcpy(&net.header.revision, bytes.data() + 8, 4);
    std::size_t off = 12;
    if (net.header.seen_is_64bit()) {
        if (bytes.size() < 20) {
            throw MalformedHeader("truncated 64-bit seen counter");
        }
        std::memcpy(&net.header.seen, bytes.data() + 12, 8);
        off = 20;
    } else {
        if (bytes.size() < 16) {
            throw MalformedHeader("truncated 32-bit seen counter");
        }
        std::uint32_t seen32 = 0;
        std::memcpy(&seen32, bytes.data() + 12, 4);
        net.header.seen = seen32;
        off = 16;
    }

    const std::size_t expected = expected_weight_floats(spec);
    const std::size_t remaining = bytes.size() - off;
    if (remaining != expected * 4) {
        throw WeightCountMismatch(expected, remaining);
    }

    auto take = [&](std::size_t count) {
        std::vector<float> out(count);
        std::memcpy(out.data(), bytes.data() + off, count * 4);
        off += count * 4;
        return out;
    };

    const std::vector<int> in_channels = conv_input_channels(spec);
    std::size_t conv_i = 0;
    for (const LayerSpec& layer : spec.layers) {
        if (layer.kind != LayerKind::Conv) continue;
        const ConvDesc& d = *layer.conv;
        ConvParams p;
        p.filters = d.filters;
        p.kernel = d.kernel;
        p.stride = d.stride;
        const std::size_t n = static_cast<std::size_t>(d.filters);
        if (d.batchnorm) {
            BatchNormParams bn;
            bn.beta = take(n);
            bn.gamma = take(n);
            bn.rolling_mean = take(n);
            bn.rolling_var = take(n);
            p.batchnorm = std::move(bn);
            p.bias.assign(n, 0.0f);
        } else {
            p.bias = take(n);
        }
        p.weights = take(n * in_channels[conv_i] * d.kernel * d.kernel);
        net.conv_params.push_back(std::move(p));
        ++conv_i;
    }
    return net;
}

// Serializes back to darknet layout, preserving the loaded header so a
// load/save round trip is byte-identical.
inline std::vector<std::uint8_t> save_darknet_weights(const Network& net) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(net.header.byte_size() + expected_weight_floats(net.spec) * 4);
    auto put = [&](const void* src, std::size_t count) {
        const auto* p = static_cast<const std::uint8_t*>(src);
        bytes.insert(bytes.end(), p, p + count);
    };
    put(&net.header.major, 4);
    put(&net.header.minor, 4);
    put(&net.header.revision, 4);
    if (net.header.seen_is_64bit()) {
        put(&net.header.seen, 8);
    } else {
        const std::uint32_t seen32 = static_cast<std::uint32_t>(net.header.seen);
        put(&seen32, 4);
    }
    std::size_t conv_i = 0;
    for (const LayerSpec& layer : net.spec.layers) {
        if (layer.kind != LayerKind::Conv) continue;
        const ConvParams& p = net.conv_params[conv_i++];
        if (p.batchnorm) {
            put(p.batchnorm->beta.data(), p.batchnorm->beta.size() * 4);
            put(p.batchnorm->gamma.data(), p.batchnorm->gamma.size() * 4);
            put(p.batchnorm->rolling_mean.data(), p.batchnorm->rolling_mean.size() * 4);
            put(p.batchnorm->rolling_var.data(), p.batchnorm->rolling_var.size() * 4);
        } else {
            put(p.bias.data(), p.bias.size() * 4);
        }
        put(p.weights.data(), p.weights.size() * 4);
    }
    return bytes;
}

inline Network load_weights_file(const NetworkSpec& spec, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open weight file: " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_darknet_weights(spec, bytes);
}

// Fills a built spec with reproducible pseudorandom parameters: uniform
// He-style weights, identity batch norm, zero biases.
inline Network random_weights(const NetworkSpec& spec, std::uint64_t seed) {
    Network net;
    net.spec = spec;
    Lcg64 rng(seed);
    const std::vector<int> in_channels = conv_input_channels(spec);
    std::size_t conv_i = 0;
    for (const LayerSpec& layer : spec.layers) {
        if (layer.kind != LayerKind::Conv) continue;
        const ConvDesc& d = *layer.conv;
        const int fan_in = in_channels[conv_i] * d.kernel * d.kernel;
        const double bound = std::sqrt(3.0 / fan_in);
        ConvParams p;
        p.filters = d.filters;
        p.kernel = d.kernel;
        p.stride = d.stride;
        p.weights.resize(static_cast<std::size_t>(d.filters) * fan_in);
        for (float& w : p.weights) {
            w = static_cast<float>(rng.next_range(-bound, bound));
        }
        p.bias.assign(d.filters, 0.0f);
        if (d.batchnorm) {
            BatchNormParams bn;
            bn.gamma.assign(d.filters, 1.0f);
            bn.beta.assign(d.filters, 0.0f);
            bn.rolling_mean.assign(d.filters, 0.0f);
            bn.rolling_var.assign(d.filters, 1.0f);
            p.batchnorm = std::move(bn);
        }
        net.conv_params.push_back(std::move(p));
        ++conv_i;
    }
    return net;
}

struct ForwardOptions {
    int threads = 1;
    // When set, per-layer wall time in milliseconds is accumulated here
    // (resized to the layer count on entry).
    std::vector<double>* layer_ms = nullptr;
};

// Executes the graph and returns the raw tensor feeding each Yolo layer, in
// graph order. Intermediate outputs are dropped as soon as no later layer
// needs them.
inline std::vector<Tensor3> forward(const Network& net, const Tensor3& input,
                                    const ForwardOptions& opts = {}) {
    const NetworkSpec& spec = net.spec;
    if (input.shape() !=
        Shape3{spec.input_size, spec.input_size, spec.input_channels}) {
        throw ShapeMismatch("network expects input " +
                            Shape3{spec.input_size, spec.input_size, spec.input_channels}.str() +
                            ", got " + input.shape().str());
    }
    const int n = static_cast<int>(spec.layers.size());
    std::vector<int> needed_until(n, -1);
    for (int i = 0; i < n; ++i) {
        const LayerSpec& layer = spec.layers[i];
        if (layer.kind == LayerKind::Route) {
            for (int src : layer.route_sources) {
                needed_until[src] = std::max(needed_until[src], i);
            }
        } else if (i > 0) {
            needed_until[i - 1] = std::max(needed_until[i - 1], i);
        }
    }

    if (opts.layer_ms && opts.layer_ms->size() != static_cast<std::size_t>(n)) {
        opts.layer_ms->assign(n, 0.0);
    }

    std::vector<std::shared_ptr<const Tensor3>> slot(n);
    std::vector<Tensor3> heads;
    std::size_t conv_i = 0;
    for (int i = 0; i < n; ++i) {
        const LayerSpec& layer = spec.layers[i];
        const auto t0 = std::chrono::steady_clock::now();
        std::shared_ptr<const Tensor3> out;
        const std::shared_ptr<const Tensor3>& prev = i > 0 ? slot[i - 1] : nullptr;
        const Tensor3& prev_t = i > 0 ? *prev : input;
        switch (layer.kind) {
            case LayerKind::Conv: {
                const ConvParams& p = net.conv_params[conv_i++];
                Tensor3 y = conv2d(prev_t, p, opts.threads);
                if (p.batchnorm) y = batchnorm_apply(y, p, net.bn_epsilon);
                if (layer.conv->activation) y = leaky_relu(y);
                out = std::make_shared<Tensor3>(std::move(y));
                break;
            }
            case LayerKind::MaxPool:
                out = std::make_shared<Tensor3>(maxpool(prev_t, *layer.pool));
                break;
            case LayerKind::Upsample:
                out = std::make_shared<Tensor3>(upsample_nearest(prev_t, 2));
                break;
            case LayerKind::Route:
                if (layer.route_sources.size() == 1) {
                    out = slot[layer.route_sources[0]];  // re-reference, no copy
                } else {
                    out = std::make_shared<Tensor3>(concat_channels(
                        *slot[layer.route_sources[0]], *slot[layer.route_sources[1]]));
                }
                break;
            case LayerKind::Yolo:
                heads.push_back(prev_t);
                out = prev;
                break;
        }
        if (opts.layer_ms) {
            const auto t1 = std::chrono::steady_clock::now();
            (*opts.layer_ms)[i] +=
                std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        slot[i] = std::move(out);
        for (int j = 0; j <= i; ++j) {
            if (slot[j] && needed_until[j] <= i) slot[j].reset();
        }
    }
    return heads;
}

}  // namespace tinydet
