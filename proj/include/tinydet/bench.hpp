#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tinydet/decode.hpp"
#include "tinydet/errors.hpp"
#include "tinydet/network.hpp"
#include "tinydet/train.hpp"

namespace tinydet {

struct BenchReport {
    int iterations = 0;
    int threads = 1;
    double wall_seconds = 0.0;  // sum of measured iteration latencies
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double fps = 0.0;
    std::vector<double> latencies_ms;  // per iteration, in run order
};

// Nearest-rank percentile over a sorted sample.
inline double percentile_nearest_rank(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) {
        throw InsufficientData("percentile of an empty sample");
    }
    const double rank = std::ceil(q * static_cast<double>(sorted.size()));
    const std::size_t idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
}

// Times a callable: warmup first (a fixed repetition count, or when
// soak_seconds is positive, repetitions until that much time has elapsed),
// then one latency sample per measured iteration. Throughput is derived
// from the same samples, so fps * mean latency is identically one.
inline BenchReport time_workload(const std::function<void()>& work, int iterations,
                                 int warmup, double soak_seconds = 0.0) {
    if (iterations < 1) {
        throw InsufficientData("need at least one measured iteration");
    }
    using clock = std::chrono::steady_clock;
    if (soak_seconds > 0.0) {
        const auto deadline = clock::now() + std::chrono::duration<double>(soak_seconds);
        do {
            work();
        } while (clock::now() < deadline);
    } else {
        for (int i = 0; i < warmup; ++i) work();
    }

    BenchReport report;
    report.iterations = iterations;
    report.latencies_ms.reserve(iterations);
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = clock::now();
        work();
        const auto t1 = clock::now();
        report.latencies_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    report.wall_seconds = 0.0;
    for (double ms : report.latencies_ms) report.wall_seconds += ms / 1000.0;
    report.mean_ms = report.wall_seconds * 1000.0 / iterations;
    std::vector<double> sorted = report.latencies_ms;
    std::sort(sorted.begin(), sorted.end());
    report.p50_ms = percentile_nearest_rank(sorted, 0.50);
    report.p95_ms = percentile_nearest_rank(sorted, 0.95);
    report.fps = iterations / report.wall_seconds;
    return report;
}

// Benchmarks the full single-image path: preprocessing, forward pass,
// decode, confidence filter and suppression, on one reused frame.
inline BenchReport time_pipeline(const Network& net, const Tensor3& frame,
                                 double conf_threshold, double nms_iou, int iterations,
                                 int warmup, double soak_seconds = 0.0,
                                 const ForwardOptions& opts = {}) {
    PreprocessConfig pre;
    pre.target_size = net.spec.input_size;
    BenchReport report = time_workload(
        [&] {
            const Tensor3 input = preprocess(frame, pre);
            detect_pipeline(net, input, conf_threshold, nms_iou, frame.width(),
                            frame.height(), opts);
        },
        iterations, warmup, soak_seconds);
    report.threads = opts.threads;
    return report;
}

// Mean per-layer forward time over the given iterations.
inline std::vector<std::pair<int, double>> per_layer_profile(const Network& net,
                                                             const Tensor3& input,
                                                             int iterations,
                                                             const ForwardOptions& base = {}) {
    if (iterations < 1) {
        throw InsufficientData("need at least one profiling iteration");
    }
    std::vector<double> layer_ms;
    ForwardOptions opts = base;
    opts.layer_ms = &layer_ms;
    for (int i = 0; i < iterations; ++i) forward(net, input, opts);
    std::vector<std::pair<int, double>> out;
    out.reserve(layer_ms.size());
    for (std::size_t i = 0; i < layer_ms.size(); ++i) {
        out.emplace_back(static_cast<int>(i), layer_ms[i] / iterations);
    }
    return out;
}

// Aligned human-readable block followed by a single machine-parsable line.
inline std::string format_bench_report(const BenchReport& r) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-14s %d\n", "iterations", r.iterations);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %d\n", "threads", r.threads);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %.3f\n", "wall_seconds", r.wall_seconds);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %.3f\n", "mean_ms", r.mean_ms);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %.3f\n", "p50_ms", r.p50_ms);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %.3f\n", "p95_ms", r.p95_ms);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-14s %.3f\n", "fps", r.fps);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "bench iterations=%d threads=%d wall_s=%.6f mean_ms=%.6f p50_ms=%.6f "
                  "p95_ms=%.6f fps=%.6f\n",
                  r.iterations, r.threads, r.wall_seconds, r.mean_ms, r.p50_ms, r.p95_ms,
                  r.fps);
    out += buf;
    return out;
}

}  // namespace tinydet
