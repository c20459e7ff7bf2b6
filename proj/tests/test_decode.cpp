#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/reference.hpp"
#include "tinydet/decode.hpp"

using namespace tinydet;

TEST_CASE("sigmoid midpoint, symmetry and saturation") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(3.0) + sigmoid(-3.0) == Catch::Approx(1.0).margin(1e-15));
    CHECK(sigmoid(100.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(sigmoid(-100.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(sigmoid(-1000.0) >= 0.0);  // no underflow blowup
}

TEST_CASE("zero logits decode to the cell midpoint and the raw prior") {
    RawPrediction raw;
    raw.cell_x = 0;
    raw.cell_y = 0;
    raw.class_logits = {0.0};
    const WHBox prior{116.0, 90.0};
    const DecodedBox box = decode_one(raw, prior, 19, 608);
    CHECK(box.x == Catch::Approx(0.5 / 19.0).margin(1e-12));
    CHECK(box.y == Catch::Approx(0.5 / 19.0).margin(1e-12));
    CHECK(box.w == Catch::Approx(116.0 / 608.0).margin(1e-12));
    CHECK(box.h == Catch::Approx(90.0 / 608.0).margin(1e-12));
    CHECK(box.objectness == 0.5);
    REQUIRE(box.class_probs.size() == 1);
    CHECK(box.class_probs[0] == 0.5);
}

TEST_CASE("cell offsets and size logits shift the decoded box") {
    RawPrediction raw;
    raw.cell_x = 9;
    raw.cell_y = 4;
    raw.tw = std::log(2.0);
    raw.th = std::log(0.5);
    const DecodedBox box = decode_one(raw, WHBox{30.0, 61.0}, 19, 608);
    CHECK(box.x == Catch::Approx(9.5 / 19.0).margin(1e-12));
    CHECK(box.y == Catch::Approx(4.5 / 19.0).margin(1e-12));
    CHECK(box.w == Catch::Approx(60.0 / 608.0).margin(1e-12));
    CHECK(box.h == Catch::Approx(30.5 / 608.0).margin(1e-12));
}

TEST_CASE("decode_scale walks cells row-major with anchors innermost") {
    Lcg64 rng(314);
    const Tensor3 head = refimpl::random_tensor(rng, Shape3{5, 5, 18}, -4.0, 4.0);
    const std::array<WHBox, 3> priors = default_anchors().group_for_stride(32);
    const std::vector<DecodedBox> boxes = decode_scale(head, priors, 32, 160);
    REQUIRE(boxes.size() == 75);
    for (int cy = 0; cy < 5; ++cy) {
        for (int cx = 0; cx < 5; ++cx) {
            for (int a = 0; a < 3; ++a) {
                RawPrediction raw;
                const float* p = head.cell(cy, cx) + a * 6;
                raw.tx = p[0];
                raw.ty = p[1];
                raw.tw = p[2];
                raw.th = p[3];
                raw.to = p[4];
                raw.class_logits = {static_cast<double>(p[5])};
                raw.cell_x = cx;
                raw.cell_y = cy;
                const DecodedBox expect = decode_one(raw, priors[a], 5, 160);
                const DecodedBox& got = boxes[(cy * 5 + cx) * 3 + a];
                CHECK(got.x == expect.x);
                CHECK(got.y == expect.y);
                CHECK(got.w == expect.w);
                CHECK(got.h == expect.h);
                CHECK(got.objectness == expect.objectness);
                CHECK(got.class_probs == expect.class_probs);
            }
        }
    }
}

TEST_CASE("decode_scale rejects heads off the grid") {
    const std::array<WHBox, 3> priors = default_anchors().group_for_stride(32);
    CHECK_THROWS_AS(decode_scale(Tensor3(Shape3{5, 4, 18}), priors, 32, 160), LayoutMismatch);
    CHECK_THROWS_AS(decode_scale(Tensor3(Shape3{4, 4, 18}), priors, 32, 160), LayoutMismatch);
    CHECK_THROWS_AS(decode_scale(Tensor3(Shape3{5, 5, 17}), priors, 32, 160), LayoutMismatch);
    CHECK_THROWS_AS(decode_scale(Tensor3(Shape3{5, 5, 15}), priors, 32, 160), LayoutMismatch);
    CHECK_THROWS_AS(decode_scale(Tensor3(Shape3{5, 5, 18}), priors, 7, 160), LayoutMismatch);
}

TEST_CASE("three-scale candidate total at full resolution") {
    const std::vector<Tensor3> heads = {Tensor3(Shape3{19, 19, 18}),
                                        Tensor3(Shape3{38, 38, 18}),
                                        Tensor3(Shape3{76, 76, 18})};
    const std::vector<DecodedBox> boxes = decode_all(heads, default_anchors(), 608);
    CHECK(boxes.size() == 22743);
}

TEST_CASE("two-scale candidate total at the classic resolution") {
    const std::vector<Tensor3> heads = {Tensor3(Shape3{13, 13, 255}),
                                        Tensor3(Shape3{26, 26, 255})};
    const std::vector<DecodedBox> boxes = decode_all(heads, default_anchors(), 416);
    CHECK(boxes.size() == 2535);
}

TEST_CASE("decode_all infers strides and rejects unknown grids") {
    CHECK(decode_all({}, default_anchors(), 608).empty());
    // 608/16 = 38 belongs to the middle anchor group.
    const std::vector<DecodedBox> mid =
        decode_all({Tensor3(Shape3{38, 38, 18})}, default_anchors(), 608);
    CHECK(mid.size() == 38u * 38 * 3);
    CHECK(mid[0].w == Catch::Approx(30.0 / 608.0).margin(1e-12));  // smallest mid prior

    CHECK_THROWS_AS(decode_all({Tensor3(Shape3{17, 17, 18})}, default_anchors(), 608),
                    LayoutMismatch);
    CHECK_THROWS_AS(decode_all({Tensor3(Shape3{4, 4, 18})}, default_anchors(), 608),
                    LayoutMismatch);  // stride 152 has no anchor group
    CHECK_THROWS_AS(decode_all({Tensor3(Shape3{19, 38, 18})}, default_anchors(), 608),
                    LayoutMismatch);
}

TEST_CASE("decoded boxes always satisfy the range invariants") {
    Lcg64 rng(999);
    const int grid = 19;
    for (int trial = 0; trial < 100000 / 3; ++trial) {
        RawPrediction raw;
        raw.tx = rng.next_range(-12.0, 12.0);
        raw.ty = rng.next_range(-12.0, 12.0);
        raw.tw = rng.next_range(-6.0, 6.0);
        raw.th = rng.next_range(-6.0, 6.0);
        raw.to = rng.next_range(-12.0, 12.0);
        raw.class_logits = {rng.next_range(-12.0, 12.0), rng.next_range(-12.0, 12.0),
                            rng.next_range(-12.0, 12.0)};
        raw.cell_x = static_cast<int>(rng.next_u32() % grid);
        raw.cell_y = static_cast<int>(rng.next_u32() % grid);
        const DecodedBox box = decode_one(raw, WHBox{62.0, 45.0}, grid, 608);
        REQUIRE(box.x >= 0.0);
        REQUIRE(box.x <= 1.0);
        REQUIRE(box.y >= 0.0);
        REQUIRE(box.y <= 1.0);
        REQUIRE(box.w > 0.0);
        REQUIRE(box.h > 0.0);
        REQUIRE(box.objectness >= 0.0);
        REQUIRE(box.objectness <= 1.0);
        for (double p : box.class_probs) {
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
        }
    }
}

TEST_CASE("confidence filter keeps strictly-above scores per class") {
    DecodedBox box;
    box.x = box.y = 0.5;
    box.w = box.h = 0.2;
    box.objectness = 0.5;
    box.class_probs = {0.5, 0.9};
    // scores: 0.25 and 0.45
    CHECK(filter_confidence({box}, 0.25).size() == 1);
    CHECK(filter_confidence({box}, 0.25)[0].class_id == 1);
    const std::vector<Detection> both = filter_confidence({box}, 0.2);
    REQUIRE(both.size() == 2);
    CHECK(both[0].class_id == 0);
    CHECK(both[0].score == 0.25);
    CHECK(both[1].score == Catch::Approx(0.45));
    CHECK(filter_confidence({box}, 0.45).empty());
    CHECK(filter_confidence({}, 0.0).empty());
}

namespace {

Detection make_det(double x, double y, double w, double h, int cls, double score) {
    Detection d;
    d.box.x = x;
    d.box.y = y;
    d.box.w = w;
    d.box.h = h;
    d.box.objectness = score;
    d.class_id = cls;
    d.score = score;
    return d;
}

}  // namespace

TEST_CASE("suppression keeps the higher score and respects classes") {
    const Detection strong = make_det(0.5, 0.5, 0.2, 0.2, 0, 0.9);
    const Detection weak = make_det(0.51, 0.5, 0.2, 0.2, 0, 0.6);  // IOU ~0.90 with strong
    const Detection other_class = make_det(0.5, 0.5, 0.2, 0.2, 1, 0.5);
    const Detection far_away = make_det(0.1, 0.1, 0.05, 0.05, 0, 0.4);
    const std::vector<Detection> kept = nms({weak, far_away, strong, other_class}, 0.45);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].score == 0.9);
    CHECK(kept[1].score == 0.5);  // same geometry, different class: untouched
    CHECK(kept[2].score == 0.4);
}

TEST_CASE("suppression threshold is at-or-above") {
    // Dyadic coordinates make the overlap exactly one third: boxes
    // [0.125,0.375] and [0.25,0.5] of height 0.25.
    const Detection a = make_det(0.25, 0.5, 0.25, 0.25, 0, 0.9);
    const Detection b = make_det(0.375, 0.5, 0.25, 0.25, 0, 0.8);
    CHECK(nms({a, b}, 1.0 / 3.0).size() == 1);
    CHECK(nms({a, b}, 1.0 / 3.0 + 1e-9).size() == 2);
}

TEST_CASE("equal scores keep the earliest input index") {
    const Detection first = make_det(0.5, 0.5, 0.2, 0.2, 0, 0.7);
    Detection second = make_det(0.52, 0.5, 0.2, 0.2, 0, 0.7);
    const std::vector<Detection> kept = nms({first, second}, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].box.x == first.box.x);
}

TEST_CASE("suppression agrees with the sweep reference on random sets") {
    Lcg64 rng(606);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Detection> dets;
        for (int i = 0; i < 200; ++i) {
            dets.push_back(make_det(rng.next_range(0.1, 0.9), rng.next_range(0.1, 0.9),
                                    rng.next_range(0.02, 0.4), rng.next_range(0.02, 0.4),
                                    static_cast<int>(rng.next_u32() % 3),
                                    rng.next_range(0.0, 1.0)));
        }
        const std::vector<Detection> fast = nms(dets, 0.45);
        const std::vector<Detection> slow = refimpl::nms_reference(dets, 0.45);
        REQUIRE(refimpl::same_detections(fast, slow));
    }
}

TEST_CASE("pipeline output is clamped to the source frame") {
    const Network net = random_weights(build_custom_tiny3(32, 1), 17);
    Lcg64 rng(18);
    const Tensor3 input = refimpl::random_tensor(rng, Shape3{32, 32, 3}, -0.5, 0.5);
    const std::vector<ImageDetection> dets = detect_pipeline(net, input, 0.0, 0.45, 640, 480);
    REQUIRE_FALSE(dets.empty());
    for (const ImageDetection& d : dets) {
        CHECK(d.x_min >= 0.0);
        CHECK(d.y_min >= 0.0);
        CHECK(d.x_max <= 640.0);
        CHECK(d.y_max <= 480.0);
        CHECK(d.x_min <= d.x_max);
        CHECK(d.y_min <= d.y_max);
        CHECK(d.score > 0.0);
        CHECK(d.class_id == 0);
    }
}
