#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tinydet/errors.hpp"

namespace tinydet {

// Deterministic 64-bit LCG used wherever reproducible pseudorandomness is
// needed (k-means seeding, synthetic weights). State advances by
// state * 6364136223846793005 + 1442695040888963407; each draw returns the
// high 32 bits, which keeps the sequence identical across platforms.
class Lcg64 {
public:
    explicit Lcg64(std::uint64_t seed) : state_(seed) {}

    std::uint32_t next_u32() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<std::uint32_t>(state_ >> 32);
    }

    // Uniform draw in [0, 1).
    double next_unit() { return next_u32() / 4294967296.0; }

    // Uniform draw in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
    std::uint64_t state_;
};

// A width/height pair in network-input pixel units.
struct WHBox {
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }

    bool operator==(const WHBox& other) const = default;
};

// Nine anchor priors sorted ascending by area. The first three belong to the
// stride-8 head, the middle three to stride 16, the last three to stride 32.
struct AnchorSet {
    std::array<WHBox, 9> anchors;

    std::array<WHBox, 3> group_for_stride(int stride) const {
        int base;
        switch (stride) {
            case 8: base = 0; break;
            case 16: base = 3; break;
            case 32: base = 6; break;
            default:
                throw LayoutMismatch("no anchor group for stride " + std::to_string(stride));
        }
        return {anchors[base], anchors[base + 1], anchors[base + 2]};
    }
};

// IOU of two boxes aligned at a common top-left corner.
inline double iou_wh(const WHBox& a, const WHBox& b) {
    if (a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0) {
        throw InvalidBox("anchor boxes need positive dimensions");
    }
    const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
    return inter / (a.area() + b.area() - inter);
}

struct KmeansResult {
    std::vector<WHBox> centroids;  // ascending by area
    double mean_iou = 0.0;
    int iterations = 0;
    // Mean IOU after seeding and after each accepted Lloyd iteration;
    // non-decreasing by construction.
    std::vector<double> mean_iou_history;
};

namespace detail {

inline int nearest_centroid(const WHBox& box, const std::vector<WHBox>& centroids) {
    int best = 0;
    double best_d = 1.0 - iou_wh(box, centroids[0]);
    for (int j = 1; j < static_cast<int>(centroids.size()); ++j) {
        const double d = 1.0 - iou_wh(box, centroids[j]);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

}  // namespace detail

// Lloyd k-means over box dimensions with distance 1 - iou_wh and arithmetic
// mean updates. Seeding is k-means++ style driven by the Lcg64 sequence.
// An iteration that would lower the dataset mean IOU is rolled back, so the
// recorded history is non-decreasing and the loop always terminates.
inline KmeansResult kmeans_anchors(const std::vector<WHBox>& boxes, int k, std::uint64_t seed,
                                   int max_iters = 100) {
    const int n = static_cast<int>(boxes.size());
    if (k < 1 || n < k) {
        throw InsufficientData("k-means needs at least k=" + std::to_string(k) +
                               " boxes, got " + std::to_string(n));
    }
    for (const WHBox& b : boxes) {
        if (b.w <= 0.0 || b.h <= 0.0) {
            throw InvalidBox("ground-truth boxes need positive dimensions");
        }
    }

    Lcg64 rng(seed);
    std::vector<WHBox> centroids;
    centroids.reserve(k);
    centroids.push_back(boxes[rng.next_u32() % n]);
    std::vector<double> weight(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = 1.0;
            for (const WHBox& c : centroids) {
                d = std::min(d, 1.0 - iou_wh(boxes[i], c));
            }
            weight[i] = d * d;
            total += weight[i];
        }
        if (total <= 0.0) {
            // Every box coincides with a centroid already; duplicate one.
            centroids.push_back(boxes[rng.next_u32() % n]);
            continue;
        }
        const double t = rng.next_unit() * total;
        double cum = 0.0;
        int pick = -1;
        for (int i = 0; i < n; ++i) {
            cum += weight[i];
            if (cum > t) {
                pick = i;
                break;
            }
        }
        if (pick < 0) {  // floating-point slack; take the last positive weight
            for (int i = n - 1; i >= 0; --i) {
                if (weight[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(boxes[pick]);
    }

    auto assign_step = [&](const std::vector<WHBox>& cents) {
        std::vector<int> assign(n);
        for (int i = 0; i < n; ++i) {
            assign[i] = detail::nearest_centroid(boxes[i], cents);
        }
        return assign;
    };
    auto mean_iou_of = [&](const std::vector<int>& assign, const std::vector<WHBox>& cents) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            sum += iou_wh(boxes[i], cents[assign[i]]);
        }
        return sum / n;
    };

    std::vector<int> assign = assign_step(centroids);
    double obj = mean_iou_of(assign, centroids);
    KmeansResult result;
    result.mean_iou_history.push_back(obj);

    for (int iter = 0; iter < max_iters; ++iter) {
        // Reseed empty clusters with the box farthest from its centroid.
        std::vector<int> counts(k, 0);
        for (int a : assign) ++counts[a];
        std::vector<WHBox> next = centroids;
        std::vector<bool> grabbed(n, false);
        bool reseeded = false;
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            int far_box = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (grabbed[i] || counts[assign[i]] <= 1) continue;
                const double d = 1.0 - iou_wh(boxes[i], centroids[assign[i]]);
                if (d > far_d) {
                    far_d = d;
                    far_box = i;
                }
            }
            if (far_box < 0) continue;
            grabbed[far_box] = true;
            --counts[assign[far_box]];
            assign[far_box] = j;
            ++counts[j];
            next[j] = boxes[far_box];
            reseeded = true;
        }

        // Mean update.
        std::vector<double> sw(k, 0.0), sh(k, 0.0);
        std::vector<int> cnt(k, 0);
        for (int i = 0; i < n; ++i) {
            sw[assign[i]] += boxes[i].w;
            sh[assign[i]] += boxes[i].h;
            ++cnt[assign[i]];
        }
        for (int j = 0; j < k; ++j) {
            if (cnt[j] > 0) {
                next[j] = {sw[j] / cnt[j], sh[j] / cnt[j]};
            }
        }

        std::vector<int> next_assign = assign_step(next);
        const double next_obj = mean_iou_of(next_assign, next);
        if (next_obj < obj) {
            break;  // the step would degrade the clustering; keep the last state
        }
        const bool fixed_point = !reseeded && next_assign == assign && next == centroids;
        centroids = std::move(next);
        assign = std::move(next_assign);
        obj = next_obj;
        result.mean_iou_history.push_back(obj);
        ++result.iterations;
        if (fixed_point) break;
    }

    std::stable_sort(centroids.begin(), centroids.end(),
                     [](const WHBox& a, const WHBox& b) { return a.area() < b.area(); });
    result.centroids = std::move(centroids);
    result.mean_iou = obj;
    return result;
}

// Sorts nine centroids ascending by area: smallest three feed the stride-8
// head, middle three stride 16, largest three stride 32.
inline AnchorSet assign_anchors_to_scales(std::vector<WHBox> centroids) {
    if (centroids.size() != 9) {
        throw InvalidAnchorCount("expected 9 anchor centroids, got " +
                                 std::to_string(centroids.size()));
    }
    for (const WHBox& c : centroids) {
        if (c.w <= 0.0 || c.h <= 0.0) {
            throw InvalidBox("anchors need positive dimensions");
        }
    }
    std::stable_sort(centroids.begin(), centroids.end(),
                     [](const WHBox& a, const WHBox& b) { return a.area() < b.area(); });
    AnchorSet set;
    std::copy(centroids.begin(), centroids.end(), set.anchors.begin());
    return set;
}

// The classic YOLOv3 priors, used when no dataset-specific anchors are given.
inline AnchorSet default_anchors() {
    return assign_anchors_to_scales({{10, 13},
                                     {16, 30},
                                     {33, 23},
                                     {30, 61},
                                     {62, 45},
                                     {59, 119},
                                     {116, 90},
                                     {156, 198},
                                     {373, 326}});
}

// Parses "w1,h1,...,w9,h9" (whitespace tolerated) into an AnchorSet.
inline AnchorSet parse_anchors(const std::string& text) {
    std::string cleaned = text;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream in(cleaned);
    std::vector<double> values;
    double v;
    while (in >> v) values.push_back(v);
    if (values.size() != 18) {
        throw InvalidAnchorCount("anchor text must hold 18 numbers, got " +
                                 std::to_string(values.size()));
    }
    std::vector<WHBox> boxes(9);
    for (int i = 0; i < 9; ++i) {
        boxes[i] = {values[2 * i], values[2 * i + 1]};
    }
    return assign_anchors_to_scales(std::move(boxes));
}

inline std::string format_anchors(const AnchorSet& set) {
    char buf[32];
    std::string out;
    for (int i = 0; i < 9; ++i) {
        if (i > 0) out += ", ";
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f", set.anchors[i].w, set.anchors[i].h);
        out += buf;
    }
    return out;
}

}  // namespace tinydet
