#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tinydet/anchors.hpp"
#include "tinydet/boxes.hpp"
#include "tinydet/network.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// One anchor slot of one grid cell, before any nonlinearity.
struct RawPrediction {
    double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0, to = 0.0;
    std::vector<double> class_logits;
    int cell_x = 0;
    int cell_y = 0;
    int anchor = 0;  // 0-2 within the scale's group
    int stride = 0;
};

// Decoded box, center form, normalized to [0,1] relative to network input.
struct DecodedBox {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
    double objectness = 0.0;
    std::vector<double> class_probs;
};

struct Detection {
    DecodedBox box;
    int class_id = 0;
    double score = 0.0;  // objectness * class probability
};

// Final per-image result: pixel corners in the original image frame.
struct ImageDetection {
    int class_id = 0;
    double score = 0.0;
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

// Offset-and-scale transform: cell offset plus sigmoid of the center
// logits, divided by the grid side; anchor size scaled by exp of the size
// logits, divided by the input size.
inline DecodedBox decode_one(const RawPrediction& raw, const WHBox& prior, int grid_side,
                             int input_size) {
    DecodedBox out;
    out.x = (sigmoid(raw.tx) + raw.cell_x) / grid_side;
    out.y = (sigmoid(raw.ty) + raw.cell_y) / grid_side;
    out.w = prior.w * std::exp(raw.tw) / input_size;
    out.h = prior.h * std::exp(raw.th) / input_size;
    out.objectness = sigmoid(raw.to);
    out.class_probs.resize(raw.class_logits.size());
    for (std::size_t i = 0; i < raw.class_logits.size(); ++i) {
        out.class_probs[i] = sigmoid(raw.class_logits[i]);
    }
    return out;
}

// Decodes a full head tensor. Cell scan order is row-major, anchors
// innermost, so the output is deterministic: grid_side^2 * 3 boxes.
inline std::vector<DecodedBox> decode_scale(const Tensor3& head,
                                            const std::array<WHBox, 3>& priors, int stride,
                                            int input_size) {
    if (stride <= 0 || input_size % stride != 0) {
        throw LayoutMismatch("stride " + std::to_string(stride) +
                             " does not divide input size " + std::to_string(input_size));
    }
    const int grid = input_size / stride;
    if (head.height() != grid || head.width() != grid) {
        throw LayoutMismatch("head is " + head.shape().str() + ", expected " +
                             std::to_string(grid) + " x " + std::to_string(grid) +
                             " for stride " + std::to_string(stride));
    }
    if (head.channels() % 3 != 0 || head.channels() / 3 < 6) {
        throw LayoutMismatch("head channel count " + std::to_string(head.channels()) +
                             " is not 3 x (5 + classes)");
    }
    const int block = head.channels() / 3;
    const int num_classes = block - 5;
    std::vector<DecodedBox> boxes;
    boxes.reserve(static_cast<std::size_t>(grid) * grid * 3);
    for (int cy = 0; cy < grid; ++cy) {
        for (int cx = 0; cx < grid; ++cx) {
            const float* cell = head.cell(cy, cx);
            for (int a = 0; a < 3; ++a) {
                const float* p = cell + a * block;
                DecodedBox box;
                box.x = (sigmoid(p[0]) + cx) / grid;
                box.y = (sigmoid(p[1]) + cy) / grid;
                box.w = priors[a].w * std::exp(static_cast<double>(p[2])) / input_size;
                box.h = priors[a].h * std::exp(static_cast<double>(p[3])) / input_size;
                box.objectness = sigmoid(p[4]);
                box.class_probs.resize(num_classes);
                for (int c = 0; c < num_classes; ++c) {
                    box.class_probs[c] = sigmoid(p[5 + c]);
                }
                boxes.push_back(std::move(box));
            }
        }
    }
    return boxes;
}

// Decodes every head, inferring each scale's stride from its grid side and
// picking the matching anchor group. Heads arrive coarsest first, so the
// concatenation order is stable.
inline std::vector<DecodedBox> decode_all(const std::vector<Tensor3>& heads,
                                          const AnchorSet& anchors, int input_size) {
    std::vector<DecodedBox> all;
    for (const Tensor3& head : heads) {
        if (head.height() != head.width() || head.height() <= 0 ||
            input_size % head.height() != 0) {
            throw LayoutMismatch("head grid " + head.shape().str() +
                                 " does not tile input size " + std::to_string(input_size));
        }
        const int stride = input_size / head.height();
        const std::array<WHBox, 3> priors = anchors.group_for_stride(stride);
        std::vector<DecodedBox> part = decode_scale(head, priors, stride, input_size);
        all.insert(all.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return all;
}

// Expands each box into per-class detections and keeps those whose combined
// score is strictly above the threshold.
inline std::vector<Detection> filter_confidence(const std::vector<DecodedBox>& boxes,
                                                double threshold) {
    std::vector<Detection> out;
    for (const DecodedBox& box : boxes) {
        for (std::size_t c = 0; c < box.class_probs.size(); ++c) {
            const double score = box.objectness * box.class_probs[c];
            if (score > threshold) {
                out.push_back(Detection{box, static_cast<int>(c), score});
            }
        }
    }
    return out;
}

inline BoxXYXY to_corners(const DecodedBox& box) {
    return BoxXYXY{box.x - box.w / 2.0, box.y - box.h / 2.0, box.x + box.w / 2.0,
                   box.y + box.h / 2.0};
}

// Greedy per-class suppression. Candidates are visited by descending score,
// earlier input index first on exact ties; a candidate is dropped when it
// overlaps an already-kept detection of the same class at or above the
// threshold.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    std::vector<Detection> kept;
    std::vector<BoxXYXY> kept_corners;
    for (std::size_t idx : order) {
        const Detection& cand = dets[idx];
        const BoxXYXY cand_box = to_corners(cand.box);
        bool suppressed = false;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            if (kept[k].class_id != cand.class_id) continue;
            if (iou_boxes(kept_corners[k], cand_box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(cand);
            kept_corners.push_back(cand_box);
        }
    }
    return kept;
}

// Forward, decode, filter, suppress, then map normalized centers to pixel
// corners of the original frame, clamped to its bounds.
inline std::vector<ImageDetection> detect_pipeline(const Network& net, const Tensor3& input,
                                                   double conf_threshold, double nms_iou,
                                                   int image_width, int image_height,
                                                   const ForwardOptions& opts = {}) {
    const std::vector<Tensor3> heads = forward(net, input, opts);
    const std::vector<DecodedBox> boxes = decode_all(heads, net.spec.anchors,
                                                     net.spec.input_size);
    const std::vector<Detection> kept = nms(filter_confidence(boxes, conf_threshold), nms_iou);
    std::vector<ImageDetection> out;
    out.reserve(kept.size());
    for (const Detection& det : kept) {
        const BoxXYXY b = to_corners(det.box);
        ImageDetection d;
        d.class_id = det.class_id;
        d.score = det.score;
        d.x_min = std::clamp(b.x_min * image_width, 0.0, static_cast<double>(image_width));
        d.y_min = std::clamp(b.y_min * image_height, 0.0, static_cast<double>(image_height));
        d.x_max = std::clamp(b.x_max * image_width, 0.0, static_cast<double>(image_width));
        d.y_max = std::clamp(b.y_max * image_height, 0.0, static_cast<double>(image_height));
        out.push_back(d);
    }
    return out;
}

}  // namespace tinydet
