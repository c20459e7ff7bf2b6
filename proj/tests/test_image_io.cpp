#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "support/reference.hpp"
#include "tinydet/image_io.hpp"

using namespace tinydet;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

}  // namespace

TEST_CASE("ppm write then read is lossless for integral pixels") {
    ImageRecord img;
    img.id = "orig";
    img.pixels = Tensor3(Shape3{3, 5, 3});
    Lcg64 rng(99);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels.data()[i] = static_cast<float>(rng.next_u32() % 256);
    }
    const std::vector<std::uint8_t> blob = write_ppm(img);
    const ImageRecord back = read_ppm(blob, "copy");
    CHECK(back.id == "copy");
    REQUIRE(back.pixels.shape() == img.pixels.shape());
    CHECK(std::memcmp(back.pixels.data(), img.pixels.data(),
                      img.pixels.size() * sizeof(float)) == 0);
    CHECK(write_ppm(back) == blob);
}

TEST_CASE("ppm header accepts comments and flexible whitespace") {
    std::string text = "P6 # magic\n# a full comment line\n 2\t1 #dims\n255\n";
    text += std::string("\x01\x02\x03\x04\x05\x06", 6);
    const ImageRecord img = read_ppm(bytes_of(text));
    REQUIRE(img.pixels.shape() == Shape3{1, 2, 3});
    CHECK(img.pixels(0, 0, 0) == 1.0f);
    CHECK(img.pixels(0, 1, 2) == 6.0f);
}

TEST_CASE("ppm reader rejects what it cannot represent") {
    CHECK_THROWS_AS(read_ppm(bytes_of("P5\n2 2\n255\n")), UnsupportedFormat);
    CHECK_THROWS_AS(read_ppm(bytes_of("P6\n2 2\n65535\n")), UnsupportedDepth);
    CHECK_THROWS_AS(read_ppm(bytes_of("P6\n2a 2\n255\n")), UnsupportedFormat);
    CHECK_THROWS_AS(read_ppm(bytes_of("P6\n0 2\n255\n\0\0\0")), UnsupportedFormat);
    CHECK_THROWS_AS(read_ppm(bytes_of("P6\n2 2")), TruncatedFile);
    CHECK_THROWS_AS(read_ppm(bytes_of("")), TruncatedFile);
    // 2x2 needs 12 raster bytes; only 9 present.
    std::string short_raster = "P6\n2 2\n255\n";
    short_raster += std::string(9, 'x');
    CHECK_THROWS_AS(read_ppm(bytes_of(short_raster)), TruncatedFile);
}

TEST_CASE("ppm output rounds half up and clamps") {
    ImageRecord img;
    img.pixels = Tensor3(Shape3{1, 2, 3});
    const float vals[6] = {254.5f, 254.4f, -3.0f, 300.0f, 0.5f, 0.49f};
    for (int i = 0; i < 6; ++i) img.pixels.data()[i] = vals[i];
    const std::vector<std::uint8_t> blob = write_ppm(img);
    const std::string header = "P6\n2 1\n255\n";
    REQUIRE(blob.size() == header.size() + 6);
    CHECK(std::memcmp(blob.data(), header.data(), header.size()) == 0);
    const std::uint8_t* px = blob.data() + header.size();
    CHECK(px[0] == 255);
    CHECK(px[1] == 254);
    CHECK(px[2] == 0);
    CHECK(px[3] == 255);
    CHECK(px[4] == 1);
    CHECK(px[5] == 0);

    ImageRecord gray;
    gray.pixels = Tensor3(Shape3{1, 1, 1});
    CHECK_THROWS_AS(write_ppm(gray), ShapeMismatch);
}

TEST_CASE("ppm files survive a disk round trip") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "tinydet_io_roundtrip.ppm";
    ImageRecord img;
    img.pixels = Tensor3(Shape3{2, 2, 3});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels.data()[i] = static_cast<float>(i * 17 % 256);
    }
    write_ppm_file(path.string(), img);
    const ImageRecord back = read_ppm_file(path.string(), "disk");
    CHECK(back.id == "disk");
    CHECK(refimpl::max_abs_diff(back.pixels, img.pixels) == 0.0);
    fs::remove(path);
    CHECK_THROWS_AS(read_ppm_file(path.string()), Error);
}

TEST_CASE("normalized center labels convert to pixel corners") {
    const auto full = read_labels("0 0.5 0.5 1.0 1.0", "a", 100, 100);
    REQUIRE(full.size() == 1);
    CHECK(full[0].image_id == "a");
    CHECK(full[0].class_id == 0);
    CHECK(full[0].box.x_min == 0.0);
    CHECK(full[0].box.y_min == 0.0);
    CHECK(full[0].box.x_max == 100.0);
    CHECK(full[0].box.y_max == 100.0);

    const auto quad = read_labels("2 0.25 0.25 0.5 0.5", "b", 608, 608);
    REQUIRE(quad.size() == 1);
    CHECK(quad[0].class_id == 2);
    CHECK(quad[0].box.x_min == 0.0);
    CHECK(quad[0].box.x_max == 304.0);
    CHECK(quad[0].box.y_max == 304.0);

    // Rectangular images scale the two axes independently.
    const auto rect = read_labels("1 0.5 0.5 0.25 0.5", "c", 640, 480);
    CHECK(rect[0].box.x_min == Catch::Approx(240.0));
    CHECK(rect[0].box.x_max == Catch::Approx(400.0));
    CHECK(rect[0].box.y_min == Catch::Approx(120.0));
    CHECK(rect[0].box.y_max == Catch::Approx(360.0));

    const auto multi = read_labels("0 0.5 0.5 0.2 0.2\n\n0 0.7 0.7 0.2 0.2\n", "d", 10, 10);
    CHECK(multi.size() == 2);
}

TEST_CASE("label corners normalize back to the original centers") {
    const std::string text = "0 0.31 0.62 0.11 0.44";
    const auto boxes = read_labels(text, "img", 1920, 1080);
    REQUIRE(boxes.size() == 1);
    const BoxXYXY& b = boxes[0].box;
    CHECK((b.x_min + b.x_max) / 2.0 / 1920.0 == Catch::Approx(0.31).margin(1e-9));
    CHECK((b.y_min + b.y_max) / 2.0 / 1080.0 == Catch::Approx(0.62).margin(1e-9));
    CHECK((b.x_max - b.x_min) / 1920.0 == Catch::Approx(0.11).margin(1e-9));
    CHECK((b.y_max - b.y_min) / 1080.0 == Catch::Approx(0.44).margin(1e-9));
}

TEST_CASE("label parsing reports the offending line") {
    CHECK_THROWS_AS(read_labels("0 1.5 0.5 0.1 0.1", "a", 10, 10), OutOfRange);
    CHECK_THROWS_AS(read_labels("0 0.5 0.5 0.0 0.1", "a", 10, 10), OutOfRange);
    CHECK_THROWS_AS(read_labels("0 0.5 0.5 0.1 1.2", "a", 10, 10), OutOfRange);

    CHECK_THROWS_AS(read_labels("x 0.5 0.5 0.1 0.1", "a", 10, 10), ParseError);
    CHECK_THROWS_AS(read_labels("0.5 0.5 0.5 0.1 0.1", "a", 10, 10), ParseError);
    CHECK_THROWS_AS(read_labels("-1 0.5 0.5 0.1 0.1", "a", 10, 10), ParseError);
    CHECK_THROWS_AS(read_labels("0 0.5 0.5 0.1", "a", 10, 10), ParseError);
    CHECK_THROWS_AS(read_labels("0 0.5 0.5 0.1 0.1 7", "a", 10, 10), ParseError);
    CHECK_THROWS_AS(read_labels("0 nan 0.5 0.1 0.1", "a", 10, 10), ParseError);

    try {
        read_labels("0 0.5 0.5 0.1 0.1\n\nbroken line here\n", "a", 10, 10);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("detection lines serialize with fixed precision") {
    ImageDetection d;
    d.class_id = 0;
    d.score = 0.81;
    d.x_min = 10.0;
    d.y_min = 20.0;
    d.x_max = 30.0;
    d.y_max = 40.0;
    CHECK(write_detections({d}, "img") == "img 0 0.810000 10.00 20.00 30.00 40.00\n");
    CHECK(write_detections({}, "img").empty());
}

TEST_CASE("detection files parse back into records") {
    const std::string text =
        "img 0 0.810000 10.00 20.00 30.00 40.00\n"
        "\n"
        "other 2 0.125000 1.50 2.50 3.50 4.50\n";
    const std::vector<DetRecord> recs = read_detections(text);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].image_id == "img");
    CHECK(recs[0].class_id == 0);
    CHECK(recs[0].score == 0.81);
    CHECK(recs[0].box.x_min == 10.0);
    CHECK(recs[0].box.y_max == 40.0);
    CHECK(recs[1].image_id == "other");
    CHECK(recs[1].class_id == 2);
    CHECK(recs[1].score == 0.125);
    CHECK(recs[1].box.x_max == 3.5);

    CHECK_THROWS_AS(read_detections("img 0 0.5 1 2 3"), ParseError);
    CHECK_THROWS_AS(read_detections("img 0 0.5 1 2 3 4 5"), ParseError);
    CHECK_THROWS_AS(read_detections("img -1 0.5 1 2 3 4"), ParseError);
    CHECK_THROWS_AS(read_detections("img 0 inf 1 2 3 4"), ParseError);
    CHECK_THROWS_AS(read_detections("img 0 0.5 x 2 3 4"), ParseError);
    try {
        read_detections("img 0 0.5 1 2 3 4\nbad\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("box drawing paints a clamped two-pixel border") {
    Tensor3 img(Shape3{10, 10, 3});
    draw_box(img, 2, 3, 7, 8);
    // Top band rows 3-4, bottom band rows 6-7, side bands cols 2-3 and 5-6.
    CHECK(img(3, 4, 0) == 255.0f);
    CHECK(img(3, 4, 1) == 0.0f);
    CHECK(img(4, 4, 0) == 255.0f);
    CHECK(img(7, 6, 0) == 255.0f);
    CHECK(img(5, 2, 0) == 255.0f);
    CHECK(img(5, 6, 0) == 255.0f);
    CHECK(img(5, 4, 0) == 0.0f);  // interior untouched
    CHECK(img(0, 0, 0) == 0.0f);

    Tensor3 part(Shape3{10, 10, 3});
    draw_box(part, -5, -5, 5, 5);
    CHECK(part(4, 0, 0) == 255.0f);
    CHECK(part(3, 4, 0) == 255.0f);
    CHECK(part(0, 0, 0) == 0.0f);
}
