#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "core/network.hpp"

namespace gcnet {

// --- equivalence check (training form vs contracted form) ---

struct CheckReport {
    int trials = 0;
    double tol = 0.0;
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;  // max abs diff / max abs reference logit
    std::uint64_t argmax_mismatches = 0;  // on pixels with top-two margin > 1e-6
    std::uint64_t pixels = 0;
    bool pass = false;
};

// Contracts the model and drives `trials` seeded random inputs through both
// forms in eval mode. Pass iff the scale-relative error stays within tol.
template <typename T>
CheckReport check_equivalence(Network<T>& training_form, int trials, int h, int w, double tol,
                              std::uint64_t seed);

void print_check(const CheckReport& r, std::ostream& out);

// --- latency benchmark ---

struct BenchReport {
    std::string variant;
    std::string form;
    int h = 0, w = 0;
    int warmup_iters = 0, timed_iters = 0;
    double mean_ms = 0.0, median_ms = 0.0, p95_ms = 0.0;
    double fps = 0.0;  // 1000 / median_ms
    std::uint64_t params = 0;
    double gflops = 0.0;
};

// Single-input (batch 1) wall-clock forward timing on one worker thread.
template <typename T>
BenchReport run_bench(Network<T>& net, int h, int w, int warmup, int iters, std::uint64_t seed);

void print_bench(const BenchReport& r, std::ostream& out);
void write_bench_csv(const BenchReport& r, const std::string& path);

// --- segmentation of image files ---

struct SegmentInfo {
    int in_w = 0, in_h = 0;
    int net_w = 0, net_h = 0;
    bool resized = false;  // input dims were not divisible by 64
};

// Reads a binary PPM, runs the model, writes the per-pixel argmax as a
// binary PGM (or a palette-colorized PPM). Inputs whose dims are not
// divisible by 64 are bilinearly enlarged to the next multiple and the
// logits mapped back to the original resolution.
template <typename T>
SegmentInfo segment_file(Network<T>& net, const std::string& image_path,
                         const std::string& out_path, bool palette);

// Deterministic test input in [0, 1).
template <typename T>
Tensor4<T> random_input(int n, int c, int h, int w, std::uint64_t seed);

}  // namespace gcnet
