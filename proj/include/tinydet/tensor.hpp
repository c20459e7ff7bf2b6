#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tinydet/errors.hpp"

namespace tinydet {

// Dimensions of a rank-3 activation/weight volume, channel-last.
struct Shape3 {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t element_count() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }

    bool valid() const { return height >= 1 && width >= 1 && channels >= 1; }

    bool operator==(const Shape3& other) const = default;

    std::string str() const {
        return std::to_string(height) + " x " + std::to_string(width) + " x " +
               std::to_string(channels);
    }
};

// Dense rank-3 float tensor, row-major (row, col, channel).
// Offset of (r, c, ch) is ((r * width) + c) * channels + ch, so the per-cell
// channel vector is contiguous.
class Tensor3 {
public:
    Tensor3() = default;

    Tensor3(Shape3 shape, float fill = 0.0f) : shape_(shape) {
        if (!shape.valid()) {
            throw InvalidShape("tensor dimensions must all be >= 1, got " + shape.str());
        }
        data_.assign(shape.element_count(), fill);
    }

    Tensor3(Shape3 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
        if (!shape.valid()) {
            throw InvalidShape("tensor dimensions must all be >= 1, got " + shape.str());
        }
        if (data_.size() != shape.element_count()) {
            throw InvalidShape("data length " + std::to_string(data_.size()) +
                               " does not match shape " + shape.str());
        }
    }

    const Shape3& shape() const { return shape_; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    int channels() const { return shape_.channels; }
    std::size_t size() const { return data_.size(); }

    const float* data() const { return data_.data(); }
    float* data() { return data_.data(); }

    std::size_t offset(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * shape_.width + c) * shape_.channels + ch;
    }

    // Unchecked access for kernels.
    float operator()(int r, int c, int ch) const { return data_[offset(r, c, ch)]; }
    float& operator()(int r, int c, int ch) { return data_[offset(r, c, ch)]; }

    // Bounds-checked access.
    float at(int r, int c, int ch) const {
        check_index(r, c, ch);
        return data_[offset(r, c, ch)];
    }

    void set(int r, int c, int ch, float value) {
        check_index(r, c, ch);
        data_[offset(r, c, ch)] = value;
    }

    // Pointer to the contiguous channel vector of one cell.
    const float* cell(int r, int c) const { return data_.data() + offset(r, c, 0); }
    float* cell(int r, int c) { return data_.data() + offset(r, c, 0); }

private:
    void check_index(int r, int c, int ch) const {
        if (r < 0 || r >= shape_.height || c < 0 || c >= shape_.width || ch < 0 ||
            ch >= shape_.channels) {
            throw IndexOutOfBounds("index (" + std::to_string(r) + ", " + std::to_string(c) +
                                   ", " + std::to_string(ch) + ") outside tensor " +
                                   shape_.str());
        }
    }

    Shape3 shape_{};
    std::vector<float> data_;
};

inline Tensor3 tensor_create(Shape3 shape, float fill) { return Tensor3(shape, fill); }

inline float tensor_index(const Tensor3& t, int r, int c, int ch) { return t.at(r, c, ch); }

}  // namespace tinydet
