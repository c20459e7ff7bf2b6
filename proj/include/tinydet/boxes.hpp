#pragma once

#include <algorithm>
#include <string>

#include "tinydet/errors.hpp"

namespace tinydet {

// Axis-aligned box, corner form. Units are whatever the caller uses
// (normalized or pixels); IOU is scale-free.
struct BoxXYXY {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double area() const { return (x_max - x_min) * (y_max - y_min); }
    bool operator==(const BoxXYXY&) const = default;
};

inline double iou_boxes(const BoxXYXY& a, const BoxXYXY& b) {
    if (a.x_max <= a.x_min || a.y_max <= a.y_min || b.x_max <= b.x_min ||
        b.y_max <= b.y_min) {
        throw InvalidBox("degenerate box in IOU");
    }
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

}  // namespace tinydet
