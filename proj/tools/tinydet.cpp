// Command-line surface for the detection library: architecture inspection,
// detection, evaluation, anchor clustering and benchmarking.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tinydet/tinydet.hpp"

namespace fs = std::filesystem;
using namespace tinydet;

namespace {

struct Options {
    std::string arch = "custom3";
    int size = 608;
    int classes = 1;
    std::string weights;
    bool random_weights = false;
    std::string image;
    std::string images;
    std::string labels;
    std::string dets;
    double conf = 0.25;
    double nms_iou = 0.45;
    std::vector<double> iou_targets{0.5, 0.75};
    bool iou_ge = false;
    std::string anchors;
    std::uint64_t seed = 1;
    int k = 9;
    int iterations = 20;
    int warmup = 10;
    double soak_seconds = 0.0;
    bool per_layer = false;
    int threads = 1;
    bool annotate = false;
    bool json_output = false;
    bool eq5_literal = false;  // reserved, no subcommand consumes it yet
    std::string out;
};

AnchorSet resolve_anchors(const std::string& arg) {
    if (arg.empty()) return default_anchors();
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_anchors(buf.str());
    }
    return parse_anchors(arg);
}

NetworkSpec build_spec(const Options& opt) {
    const AnchorSet anchors = resolve_anchors(opt.anchors);
    if (opt.arch == "original") {
        return build_original_tiny(opt.size, opt.classes, anchors);
    }
    return build_custom_tiny3(opt.size, opt.classes, anchors);
}

Network load_network(const Options& opt) {
    const NetworkSpec spec = build_spec(opt);
    if (!opt.weights.empty()) {
        return load_weights_file(spec, opt.weights);
    }
    if (opt.random_weights) {
        return random_weights(spec, opt.seed);
    }
    throw Error("need --weights or --random-weights");
}

std::string rstrip(std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

std::string shape_str(const Shape3& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
           std::to_string(s.channels);
}

std::string table_row(const std::string& idx, const std::string& type, const std::string& ss,
                      const std::string& filters, const std::string& output) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%5s  %-10s  %-11s  %7s  %s", idx.c_str(), type.c_str(),
                  ss.c_str(), filters.c_str(), output.c_str());
    return rstrip(buf) + "\n";
}

std::string layer_type_name(const LayerSpec& layer) {
    switch (layer.kind) {
        case LayerKind::Conv:
            return "conv";
        case LayerKind::MaxPool:
            return "maxpool";
        case LayerKind::Upsample:
            return "upsample";
        case LayerKind::Route: {
            std::string t = "route";
            for (int s : layer.route_sources) t += " " + std::to_string(s);
            return t;
        }
        case LayerKind::Yolo:
            return "yolo";
    }
    return "?";
}

// Layer table in the style of the published architecture listings: shaped
// rows carry size/stride, filter count and output shape; route and yolo
// rows carry only their kind.
std::string architecture_table(const NetworkSpec& spec) {
    const std::vector<Shape3> shapes = layer_output_shapes(spec);
    std::string out = table_row("layer", "type", "size/stride", "filters", "output");
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        std::string ss = "-", filters = "-", output = "-";
        switch (layer.kind) {
            case LayerKind::Conv:
                ss = std::to_string(layer.conv->kernel) + "x" +
                     std::to_string(layer.conv->kernel) + "/" +
                     std::to_string(layer.conv->stride);
                filters = std::to_string(layer.conv->filters);
                output = shape_str(shapes[i]);
                break;
            case LayerKind::MaxPool:
                ss = std::to_string(layer.pool->size) + "x" + std::to_string(layer.pool->size) +
                     "/" + std::to_string(layer.pool->stride);
                output = shape_str(shapes[i]);
                break;
            case LayerKind::Upsample:
                ss = "2x2/1";
                output = shape_str(shapes[i]);
                break;
            case LayerKind::Route:
            case LayerKind::Yolo:
                break;
        }
        out += table_row(std::to_string(i), layer_type_name(layer), ss, filters, output);
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot write: " + path);
    }
    f << text;
}

std::vector<fs::path> sorted_files(const std::string& dir, const std::string& ext) {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::string detections_json(const std::vector<ImageDetection>& dets,
                            const std::string& image_id) {
    std::string out;
    for (const ImageDetection& d : dets) {
        nlohmann::json j;
        j["image"] = image_id;
        j["class"] = d.class_id;
        j["score"] = d.score;
        j["box"] = {d.x_min, d.y_min, d.x_max, d.y_max};
        out += j.dump() + "\n";
    }
    return out;
}

int cmd_info(const Options& opt) {
    std::cout << architecture_table(build_spec(opt));
    return 0;
}

std::vector<ImageDetection> run_detect(const Network& net, const ImageRecord& img,
                                       const Options& opt) {
    PreprocessConfig pre;
    pre.target_size = net.spec.input_size;
    const Tensor3 input = preprocess(img.pixels, pre);
    ForwardOptions fwd;
    fwd.threads = opt.threads;
    return detect_pipeline(net, input, opt.conf, opt.nms_iou, img.width(), img.height(), fwd);
}

void maybe_annotate(const ImageRecord& img, const std::vector<ImageDetection>& dets,
                    const fs::path& dir) {
    ImageRecord annotated = img;
    for (const ImageDetection& d : dets) {
        draw_box(annotated.pixels, d.x_min, d.y_min, d.x_max, d.y_max);
    }
    write_ppm_file((dir / (img.id + "_boxes.ppm")).string(), annotated);
}

int cmd_detect(const Options& opt) {
    const Network net = load_network(opt);
    if (!opt.image.empty()) {
        const ImageRecord img = read_ppm_file(opt.image, fs::path(opt.image).stem().string());
        const std::vector<ImageDetection> dets = run_detect(net, img, opt);
        const std::string text =
            opt.json_output ? detections_json(dets, img.id) : write_detections(dets, img.id);
        if (opt.out.empty()) {
            std::cout << text;
            if (opt.annotate) maybe_annotate(img, dets, fs::current_path());
        } else {
            write_text_file(opt.out, text);
            if (opt.annotate) maybe_annotate(img, dets, fs::path(opt.out).parent_path());
        }
        return 0;
    }
    if (opt.images.empty()) {
        throw Error("detect needs --image or --images");
    }
    if (opt.out.empty()) {
        throw Error("--images needs --out directory");
    }
    fs::create_directories(opt.out);
    for (const fs::path& path : sorted_files(opt.images, ".ppm")) {
        const ImageRecord img = read_ppm_file(path.string(), path.stem().string());
        const std::vector<ImageDetection> dets = run_detect(net, img, opt);
        const std::string text =
            opt.json_output ? detections_json(dets, img.id) : write_detections(dets, img.id);
        write_text_file((fs::path(opt.out) / (img.id + ".txt")).string(), text);
        if (opt.annotate) maybe_annotate(img, dets, fs::path(opt.out));
    }
    return 0;
}

std::vector<DetRecord> to_records(const std::vector<ImageDetection>& dets,
                                  const std::string& image_id) {
    std::vector<DetRecord> out;
    out.reserve(dets.size());
    for (const ImageDetection& d : dets) {
        out.push_back(DetRecord{image_id, d.class_id, d.score,
                                BoxXYXY{d.x_min, d.y_min, d.x_max, d.y_max}});
    }
    return out;
}

int cmd_eval(const Options& opt) {
    if (opt.images.empty() || opt.labels.empty()) {
        throw Error("eval needs --images and --labels");
    }
    std::vector<GroundTruthBox> gts;
    std::vector<DetRecord> dets;
    std::optional<Network> net;
    if (opt.dets.empty()) net = load_network(opt);

    for (const fs::path& path : sorted_files(opt.images, ".ppm")) {
        const ImageRecord img = read_ppm_file(path.string(), path.stem().string());
        const fs::path label_path = fs::path(opt.labels) / (img.id + ".txt");
        std::vector<GroundTruthBox> image_gts =
            read_labels_file(label_path.string(), img.id, img.width(), img.height());
        gts.insert(gts.end(), image_gts.begin(), image_gts.end());
        if (net) {
            const std::vector<DetRecord> recs = to_records(run_detect(*net, img, opt), img.id);
            dets.insert(dets.end(), recs.begin(), recs.end());
        } else if (fs::is_directory(opt.dets)) {
            const fs::path det_path = fs::path(opt.dets) / (img.id + ".txt");
            if (fs::exists(det_path)) {
                const std::vector<DetRecord> recs = read_detections_file(det_path.string());
                dets.insert(dets.end(), recs.begin(), recs.end());
            }
        }
    }
    if (!opt.dets.empty() && !fs::is_directory(opt.dets)) {
        dets = read_detections_file(opt.dets);
    }

    const EvalReport report = evaluate(dets, gts, opt.iou_targets, opt.conf, opt.iou_ge);
    char buf[256];
    for (const TargetReport& tr : report.targets) {
        std::snprintf(buf, sizeof(buf), "iou %.2f  recall %.6f  precision %.6f  map %.2f%%\n",
                      tr.iou_target, tr.recall_at_c, tr.precision_at_c, tr.mean_ap * 100.0);
        std::cout << buf;
        if (tr.per_class_ap.size() > 1) {
            for (const auto& [cls, ap] : tr.per_class_ap) {
                std::snprintf(buf, sizeof(buf), "  class %d  ap %.2f%%\n", cls, ap * 100.0);
                std::cout << buf;
            }
        }
    }

    const std::string curve_path = opt.out.empty() ? "pr_curve.csv" : opt.out;
    const MatchOutcome pooled =
        match_detections(dets, gts, report.targets.front().iou_target, opt.iou_ge);
    write_text_file(curve_path, export_pr_curve(pr_curve(pooled)));
    return 0;
}

int cmd_anchors(const Options& opt) {
    if (opt.labels.empty()) {
        throw Error("anchors needs --labels");
    }
    std::vector<WHBox> boxes;
    for (const fs::path& path : sorted_files(opt.labels, ".txt")) {
        // Normalized label sizes scale straight to network-input pixels.
        const std::vector<GroundTruthBox> gts =
            read_labels_file(path.string(), path.stem().string(), opt.size, opt.size);
        for (const GroundTruthBox& gt : gts) {
            boxes.push_back(WHBox{gt.box.x_max - gt.box.x_min, gt.box.y_max - gt.box.y_min});
        }
    }
    const KmeansResult result = kmeans_anchors(boxes, opt.k, opt.seed);
    std::string line;
    if (opt.k == 9) {
        line = format_anchors(assign_anchors_to_scales(result.centroids));
    } else {
        std::vector<WHBox> sorted = result.centroids;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const WHBox& a, const WHBox& b) { return a.area() < b.area(); });
        char pair[64];
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            std::snprintf(pair, sizeof(pair), "%.2f,%.2f", sorted[i].w, sorted[i].h);
            if (i) line += ", ";
            line += pair;
        }
    }
    char tail[64];
    std::snprintf(tail, sizeof(tail), "mean_iou %.6f\n", result.mean_iou);
    std::cout << line << "\n" << tail;
    if (!opt.out.empty()) write_text_file(opt.out, line + "\n");
    return 0;
}

int cmd_bench(const Options& opt) {
    const Network net = load_network(opt);
    ImageRecord frame;
    if (!opt.image.empty()) {
        frame = read_ppm_file(opt.image, fs::path(opt.image).stem().string());
    } else {
        // Synthetic deterministic frame.
        frame.id = "synthetic";
        frame.pixels = Tensor3(Shape3{480, 640, 3});
        Lcg64 rng(opt.seed);
        float* p = frame.pixels.data();
        for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
            p[i] = static_cast<float>(rng.next_range(0.0, 255.0));
        }
    }
    ForwardOptions fwd;
    fwd.threads = opt.threads;
    BenchReport report = time_pipeline(net, frame.pixels, opt.conf, opt.nms_iou,
                                       opt.iterations, opt.warmup, opt.soak_seconds, fwd);
    std::string text = format_bench_report(report);
    if (opt.per_layer) {
        PreprocessConfig pre;
        pre.target_size = net.spec.input_size;
        const Tensor3 input = preprocess(frame.pixels, pre);
        char buf[128];
        for (const auto& [layer, ms] : per_layer_profile(net, input, opt.iterations, fwd)) {
            std::snprintf(buf, sizeof(buf), "layer %3d  %-10s  %10.3f ms\n", layer,
                          layer_type_name(net.spec.layers[layer]).c_str(), ms);
            text += buf;
        }
    }
    std::cout << text;
    if (!opt.out.empty()) write_text_file(opt.out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Three-scale single-stage detector: inference, evaluation and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;

    app.add_option("--arch", opt.arch, "Architecture: original or custom3")
        ->check(CLI::IsMember({"original", "custom3"}))
        ->capture_default_str();
    app.add_option("--size", opt.size, "Network input size (multiple of 32)")
        ->capture_default_str();
    app.add_option("--classes", opt.classes, "Class count")->capture_default_str();
    app.add_option("--weights", opt.weights, "Binary weight file");
    app.add_flag("--random-weights", opt.random_weights, "Seeded synthetic weights");
    app.add_option("--image", opt.image, "Single input image (P6 PPM)");
    app.add_option("--images", opt.images, "Directory of input images");
    app.add_option("--labels", opt.labels, "Directory of annotation files");
    app.add_option("--dets", opt.dets, "Detection file or directory (skip inference)");
    app.add_option("--conf", opt.conf, "Confidence threshold")->capture_default_str();
    app.add_option("--nms-iou", opt.nms_iou, "Suppression IOU threshold")
        ->capture_default_str();
    app.add_option("--iou-targets", opt.iou_targets, "Evaluation IOU targets")
        ->delimiter(',')
        ->capture_default_str();
    app.add_flag("--iou-ge", opt.iou_ge, "Match at-or-above the IOU target");
    app.add_option("--anchors", opt.anchors, "18 anchor numbers, inline or a file");
    app.add_option("--seed", opt.seed, "Deterministic seed")->capture_default_str();
    app.add_option("--k", opt.k, "Cluster count for anchors")->capture_default_str();
    app.add_option("--iterations", opt.iterations, "Measured benchmark iterations")
        ->capture_default_str();
    app.add_option("--warmup", opt.warmup, "Warmup iterations")->capture_default_str();
    app.add_option("--soak-seconds", opt.soak_seconds, "Time-based warmup instead of counted");
    app.add_flag("--per-layer", opt.per_layer, "Per-layer timing breakdown");
    app.add_option("--threads", opt.threads, "Convolution worker threads")
        ->capture_default_str();
    app.add_flag("--annotate", opt.annotate, "Write copies with detection rectangles");
    app.add_flag("--json", opt.json_output, "One JSON object per detection line");
    app.add_flag("--eq5-literal", opt.eq5_literal, "Reserved: literal optimizer update form");
    app.add_option("--out", opt.out, "Output file or directory");

    auto* info = app.add_subcommand("info", "Print the layer table");
    auto* detect = app.add_subcommand("detect", "Run detection on images");
    auto* eval = app.add_subcommand("eval", "Score detections against annotations");
    auto* anchors = app.add_subcommand("anchors", "Cluster annotation boxes into anchors");
    auto* bench = app.add_subcommand("bench", "Measure pipeline throughput");

    CLI11_PARSE(app, argc, argv);

    try {
        if (info->parsed()) return cmd_info(opt);
        if (detect->parsed()) return cmd_detect(opt);
        if (eval->parsed()) return cmd_eval(opt);
        if (anchors->parsed()) return cmd_anchors(opt);
        if (bench->parsed()) return cmd_bench(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
