#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tinydet/decode.hpp"
#include "tinydet/eval.hpp"
#include "tinydet/tensor.hpp"

namespace tinydet {

struct ImageRecord {
    std::string id;
    Tensor3 pixels;  // HWC, values 0-255

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

namespace detail {

class PpmScanner {
public:
    explicit PpmScanner(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Next header token, skipping whitespace and '#' comments.
    std::string token() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        if (pos_ >= bytes_.size()) {
            throw TruncatedFile("image header ends early");
        }
        std::string tok;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            tok.push_back(static_cast<char>(bytes_[pos_++]));
        }
        return tok;
    }

    int number() {
        const std::string tok = token();
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
            throw UnsupportedFormat("bad header field '" + tok + "'");
        }
        return std::stoi(tok);
    }

    // Consumes the single whitespace byte separating header from raster.
    std::span<const std::uint8_t> raster() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw UnsupportedFormat("missing separator before pixel data");
        }
        ++pos_;
        return bytes_.subspan(pos_);
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Binary PPM (P6), 8-bit, comments allowed anywhere in the header.
inline ImageRecord read_ppm(std::span<const std::uint8_t> bytes, std::string id = "") {
    detail::PpmScanner scan(bytes);
    const std::string magic = scan.token();
    if (magic != "P6") {
        throw UnsupportedFormat("expected P6, got '" + magic + "'");
    }
    const int width = scan.number();
    const int height = scan.number();
    const int maxval = scan.number();
    if (width <= 0 || height <= 0) {
        throw UnsupportedFormat("non-positive image dimensions");
    }
    if (maxval != 255) {
        throw UnsupportedDepth("max value " + std::to_string(maxval) + ", only 255 supported");
    }
    const std::span<const std::uint8_t> raster = scan.raster();
    const std::size_t need = static_cast<std::size_t>(width) * height * 3;
    if (raster.size() < need) {
        throw TruncatedFile("raster holds " + std::to_string(raster.size()) + " bytes, need " +
                            std::to_string(need));
    }
    ImageRecord img;
    img.id = std::move(id);
    img.pixels = Tensor3(Shape3{height, width, 3});
    float* dst = img.pixels.data();
    for (std::size_t i = 0; i < need; ++i) dst[i] = static_cast<float>(raster[i]);
    return img;
}

// Serializes as P6 with max value 255. Values round half up and clamp.
inline std::vector<std::uint8_t> write_ppm(const ImageRecord& img) {
    if (img.pixels.channels() != 3) {
        throw ShapeMismatch("ppm output needs 3 channels, got " +
                            std::to_string(img.pixels.channels()));
    }
    std::string header = "P6\n" + std::to_string(img.width()) + " " +
                         std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.pixels.size());
    const float* src = img.pixels.data();
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float rounded = std::floor(src[i] + 0.5f);
        out.push_back(static_cast<std::uint8_t>(std::clamp(rounded, 0.0f, 255.0f)));
    }
    return out;
}

inline ImageRecord read_ppm_file(const std::string& path, std::string id = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open image: " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_ppm(bytes, std::move(id));
}

inline void write_ppm_file(const std::string& path, const ImageRecord& img) {
    const std::vector<std::uint8_t> bytes = write_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write image: " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// Annotation lines: "class_id cx cy w h", all box fields normalized to the
// image, center form. Centers must lie in [0,1], sizes in (0,1]. The pixel
// dimensions convert them to corner boxes for evaluation.
inline std::vector<GroundTruthBox> read_labels(const std::string& text,
                                               const std::string& image_id, int image_width,
                                               int image_height) {
    std::vector<GroundTruthBox> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string first;
        if (!(fields >> first)) continue;  // blank line
        int class_id = 0;
        double cx = 0, cy = 0, w = 0, h = 0;
        std::istringstream head(first);
        char extra = 0;
        if (!(head >> class_id) || head.get() != EOF || class_id < 0 ||
            !(fields >> cx >> cy >> w >> h) || (fields >> extra) ||
            !(std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h))) {
            throw ParseError("bad label line '" + line + "'", line_no);
        }
        if (cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0 || w <= 0.0 || w > 1.0 || h <= 0.0 ||
            h > 1.0) {
            throw OutOfRange("label box out of range on line " + std::to_string(line_no));
        }
        GroundTruthBox gt;
        gt.image_id = image_id;
        gt.class_id = class_id;
        gt.box = BoxXYXY{(cx - w / 2.0) * image_width, (cy - h / 2.0) * image_height,
                         (cx + w / 2.0) * image_width, (cy + h / 2.0) * image_height};
        out.push_back(std::move(gt));
    }
    return out;
}

inline std::vector<GroundTruthBox> read_labels_file(const std::string& path,
                                                    const std::string& image_id,
                                                    int image_width, int image_height) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open label file: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return read_labels(buf.str(), image_id, image_width, image_height);
}

// One line per detection: image id, class, score to six places, pixel
// corners to two.
inline std::string write_detections(const std::vector<ImageDetection>& dets,
                                    const std::string& image_id) {
    std::string out;
    char line[256];
    for (const ImageDetection& d : dets) {
        std::snprintf(line, sizeof(line), "%s %d %.6f %.2f %.2f %.2f %.2f\n", image_id.c_str(),
                      d.class_id, d.score, d.x_min, d.y_min, d.x_max, d.y_max);
        out += line;
    }
    return out;
}

inline std::vector<DetRecord> read_detections(const std::string& text) {
    std::vector<DetRecord> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream fields(line);
        DetRecord rec;
        if (!(fields >> rec.image_id)) continue;
        char extra = 0;
        if (!(fields >> rec.class_id >> rec.score >> rec.box.x_min >> rec.box.y_min >>
              rec.box.x_max >> rec.box.y_max) ||
            (fields >> extra) || rec.class_id < 0 ||
            !(std::isfinite(rec.score) && std::isfinite(rec.box.x_min) &&
              std::isfinite(rec.box.y_min) && std::isfinite(rec.box.x_max) &&
              std::isfinite(rec.box.y_max))) {
            throw ParseError("bad detection line '" + line + "'", line_no);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<DetRecord> read_detections_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open detection file: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return read_detections(buf.str());
}

// Draws a two-pixel red rectangle along the box border, clamped to the
// image.
inline void draw_box(Tensor3& image, double x_min, double y_min, double x_max, double y_max) {
    const int w = image.width(), h = image.height();
    auto paint = [&](int r, int c) {
        if (r < 0 || r >= h || c < 0 || c >= w) return;
        float* px = image.cell(r, c);
        px[0] = 255.0f;
        px[1] = 0.0f;
        px[2] = 0.0f;
    };
    const int x0 = static_cast<int>(std::lround(x_min));
    const int y0 = static_cast<int>(std::lround(y_min));
    const int x1 = static_cast<int>(std::lround(x_max)) - 1;
    const int y1 = static_cast<int>(std::lround(y_max)) - 1;
    for (int t = 0; t < 2; ++t) {
        for (int c = x0; c <= x1; ++c) {
            paint(y0 + t, c);
            paint(y1 - t, c);
        }
        for (int r = y0; r <= y1; ++r) {
            paint(r, x0 + t);
            paint(r, x1 - t);
        }
    }
}

}  // namespace tinydet
