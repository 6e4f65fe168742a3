// Command-line front end for the GCNet library. Talks to the core strictly
// through the public C interface in gcnet/gcnet.h.

#include <cinttypes>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "gcnet/gcnet.h"

namespace {

struct ModelGuard {
    gc_model* m = nullptr;
    ~ModelGuard() { gc_model_free(m); }
};

int die(gc_status status, const std::string& context) {
    std::fprintf(stderr, "error (%s): %s\n", gc_status_name(status), gc_last_error());
    std::fprintf(stderr, "while: %s\n", context.c_str());
    return 2;
}

gc_variant parse_variant(const std::string& v) {
    if (v == "S" || v == "s") return GC_VARIANT_S;
    if (v == "M" || v == "m") return GC_VARIANT_M;
    if (v == "L" || v == "l") return GC_VARIANT_L;
    throw CLI::ValidationError("--variant", "expected S, M, or L");
}

gc_dtype parse_dtype(const std::string& v) {
    if (v == "f32") return GC_DTYPE_F32;
    if (v == "f64") return GC_DTYPE_F64;
    throw CLI::ValidationError("--dtype", "expected f32 or f64");
}

const char* variant_str(gc_variant v) {
    switch (v) {
        case GC_VARIANT_S: return "S";
        case GC_VARIANT_M: return "M";
        case GC_VARIANT_L: return "L";
    }
    return "?";
}

void print_model_line(const gc_model* m) {
    gc_model_desc d{};
    if (gc_model_describe(m, &d) != GC_OK) return;
    std::printf("GCNet-%s, %s form, %s, %u classes, C=%u, N=%u\n", variant_str(d.variant),
                d.form == GC_FORM_TRAINING ? "training" : "inference",
                d.dtype == GC_DTYPE_F32 ? "f32" : "f64", d.num_classes, d.base_channels,
                d.paths_per_block);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Golden Cudgel Network: multi-path training blocks that contract losslessly "
                 "into single 3x3 convolutions for inference"};
    app.require_subcommand(1);

    // --- build ---
    auto* build = app.add_subcommand("build", "build a randomly initialized training-form model");
    std::string b_variant = "S", b_dtype = "f32", b_ppm = "dappm", b_out;
    std::uint32_t b_classes = 19, b_base_c = 0;
    std::uint64_t b_seed = 1;
    build->add_option("--variant", b_variant, "model size: S, M, or L");
    build->add_option("--classes", b_classes, "number of segmentation classes");
    build->add_option("--base-c", b_base_c, "override the base channel width C (0 = default)");
    build->add_option("--ppm", b_ppm, "pyramid pooling internals: dappm or global");
    build->add_option("--dtype", b_dtype, "element type: f32 or f64");
    build->add_option("--seed", b_seed, "weight initialization seed");
    build->add_option("--out", b_out, "output model path")->required();

    // --- contract ---
    auto* contract = app.add_subcommand("contract", "fold a training-form model into its "
                                                    "single-convolution inference form");
    std::string c_in, c_out, c_dtype = "f32";
    contract->add_option("--in", c_in, "training-form model path")->required();
    contract->add_option("--out", c_out, "output model path")->required();
    contract->add_option("--dtype", c_dtype, "element type for the fusion pass");

    // --- check ---
    auto* check = app.add_subcommand("check", "verify training-form vs contracted equivalence");
    std::string k_model, k_variant = "S", k_dtype;
    bool k_fresh = false;
    std::uint32_t k_classes = 19, k_base_c = 0, k_h = 64, k_w = 128;
    int k_trials = 10;
    double k_tol = 0.0;
    std::uint64_t k_seed = 1;
    check->add_option("--model", k_model, "training-form model file to check");
    check->add_flag("--fresh", k_fresh, "check a freshly built in-memory model instead");
    check->add_option("--variant", k_variant, "variant for --fresh");
    check->add_option("--classes", k_classes, "classes for --fresh");
    check->add_option("--base-c", k_base_c, "base width override for --fresh");
    check->add_option("--trials", k_trials, "number of random inputs");
    check->add_option("--tol", k_tol,
                      "relative tolerance (default 1e-3 for files, 1e-8 for --fresh)");
    check->add_option("--height", k_h, "input height (divisible by 64)");
    check->add_option("--width", k_w, "input width (divisible by 64)");
    check->add_option("--seed", k_seed, "input generation seed");
    check->add_option("--dtype", k_dtype, "element type (default f32 for files, f64 for --fresh)");

    // --- bench ---
    auto* bench = app.add_subcommand("bench", "single-input forward latency benchmark");
    std::string n_model, n_csv, n_dtype = "f32";
    std::uint32_t n_h = 256, n_w = 512;
    int n_warmup = 5, n_iters = 20;
    std::uint64_t n_seed = 1;
    bench->add_option("--model", n_model, "model file to benchmark")->required();
    bench->add_option("--height", n_h, "input height");
    bench->add_option("--width", n_w, "input width");
    bench->add_option("--warmup", n_warmup, "warmup iterations (>= 5)");
    bench->add_option("--iters", n_iters, "timed iterations (>= 20)");
    bench->add_option("--seed", n_seed, "input generation seed");
    bench->add_option("--csv", n_csv, "also write the report as CSV");
    bench->add_option("--dtype", n_dtype, "element type to run in");

    // --- count ---
    auto* count = app.add_subcommand("count", "parameter and FLOP accounting");
    std::string t_model;
    std::uint32_t t_h = 1024, t_w = 2048;
    count->add_option("--model", t_model, "model file")->required();
    count->add_option("--height", t_h, "input height");
    count->add_option("--width", t_w, "input width");

    // --- train-toy ---
    auto* train = app.add_subcommand("train-toy", "desk-scale training on synthetic shapes");
    std::string y_out, y_trace;
    int y_iters = 1000, y_batch = 0, y_size = 0;
    std::uint32_t y_base_c = 0;
    double y_lr = 0.0;
    std::uint64_t y_seed = 42;
    train->add_option("--out", y_out, "output model path")->required();
    train->add_option("--iters", y_iters, "training iterations (<= 2000)");
    train->add_option("--batch", y_batch, "batch size (0 = default)");
    train->add_option("--size", y_size, "square image size, multiple of 64 (0 = default 128)");
    train->add_option("--base-c", y_base_c, "base width C (0 = default 8)");
    train->add_option("--lr", y_lr, "base learning rate (0 = default)");
    train->add_option("--seed", y_seed, "training seed");
    train->add_option("--trace", y_trace, "metric trace CSV path");

    // --- segment ---
    auto* segment = app.add_subcommand("segment", "segment a binary PPM image");
    std::string s_model, s_in, s_out, s_dtype = "f32";
    bool s_palette = false;
    segment->add_option("--model", s_model, "model file")->required();
    segment->add_option("--in", s_in, "input image (binary PPM, P6)")->required();
    segment->add_option("--out", s_out, "output label map (binary PGM, P5)")->required();
    segment->add_flag("--palette", s_palette, "write a colorized PPM instead of a PGM");
    segment->add_option("--dtype", s_dtype, "element type to run in");

    CLI11_PARSE(app, argc, argv);

    if (build->parsed()) {
        gc_build_desc d{};
        d.variant = parse_variant(b_variant);
        d.num_classes = b_classes;
        d.base_channels = b_base_c;
        d.ppm = b_ppm == "global" ? GC_PPM_GLOBAL : GC_PPM_DAPPM;
        d.dtype = parse_dtype(b_dtype);
        d.seed = b_seed;
        ModelGuard m;
        if (gc_status s = gc_model_build(&d, &m.m)) return die(s, "building model");
        if (gc_status s = gc_model_save(m.m, b_out.c_str())) return die(s, "saving " + b_out);
        print_model_line(m.m);
        std::printf("saved %s\n", b_out.c_str());
        return 0;
    }

    if (contract->parsed()) {
        ModelGuard m, fused;
        if (gc_status s = gc_model_load(c_in.c_str(), parse_dtype(c_dtype), &m.m))
            return die(s, "loading " + c_in);
        if (gc_status s = gc_model_contract(m.m, &fused.m)) return die(s, "contracting model");
        if (gc_status s = gc_model_save(fused.m, c_out.c_str()))
            return die(s, "saving " + c_out);
        print_model_line(fused.m);
        std::printf("saved %s\n", c_out.c_str());
        return 0;
    }

    if (check->parsed()) {
        ModelGuard m;
        if (k_fresh == k_model.empty()) {
            // exactly one source: either a file or --fresh
            std::fprintf(stderr, "check: pass either --model PATH or --fresh\n");
            return 2;
        }
        double tol = k_tol;
        if (k_fresh) {
            gc_build_desc d{};
            d.variant = parse_variant(k_variant);
            d.num_classes = k_classes;
            d.base_channels = k_base_c;
            d.ppm = GC_PPM_DAPPM;
            d.dtype = k_dtype.empty() ? GC_DTYPE_F64 : parse_dtype(k_dtype);
            d.seed = k_seed;
            if (gc_status s = gc_model_build(&d, &m.m)) return die(s, "building fresh model");
            if (tol == 0.0) tol = d.dtype == GC_DTYPE_F64 ? 1e-8 : 1e-3;
        } else {
            const gc_dtype dt = k_dtype.empty() ? GC_DTYPE_F32 : parse_dtype(k_dtype);
            if (gc_status s = gc_model_load(k_model.c_str(), dt, &m.m))
                return die(s, "loading " + k_model);
            // file payloads are f32; the default tolerance is the relaxed one
            if (tol == 0.0) tol = 1e-3;
        }
        print_model_line(m.m);
        gc_check_report r{};
        if (gc_status s = gc_model_check(m.m, k_trials, k_h, k_w, tol, k_seed, &r))
            return die(s, "running equivalence check");
        std::printf("trials:            %d  (%ux%u inputs)\n", r.trials, k_h, k_w);
        std::printf("max abs error:     %.3e\n", r.max_abs_err);
        std::printf("max rel error:     %.3e  (tolerance %.1e)\n", r.max_rel_err, r.tol);
        std::printf("argmax mismatches: %" PRIu64 " of %" PRIu64 " pixels (margin > 1e-6)\n",
                    r.argmax_mismatches, r.pixels);
        std::printf("result:            %s\n", r.pass ? "PASS" : "FAIL");
        return r.pass ? 0 : 1;
    }

    if (bench->parsed()) {
        ModelGuard m;
        if (gc_status s = gc_model_load(n_model.c_str(), parse_dtype(n_dtype), &m.m))
            return die(s, "loading " + n_model);
        print_model_line(m.m);
        gc_bench_report r{};
        if (gc_status s = gc_model_bench(m.m, n_h, n_w, n_warmup, n_iters, n_seed, &r))
            return die(s, "benchmarking");
        std::printf("resolution:   %ux%u (batch 1)\n", r.h, r.w);
        std::printf("warmup/timed: %d/%d iters\n", r.warmup_iters, r.timed_iters);
        std::printf("latency ms:   mean %.3f | median %.3f | p95 %.3f\n", r.mean_ms, r.median_ms,
                    r.p95_ms);
        std::printf("fps:          %.2f\n", r.fps);
        std::printf("params:       %" PRIu64 "\n", r.params);
        std::printf("gflops:       %.3f\n", r.gflops);
        if (!n_csv.empty()) {
            if (gc_status s = gc_bench_write_csv(m.m, &r, n_csv.c_str()))
                return die(s, "writing " + n_csv);
            std::printf("wrote %s\n", n_csv.c_str());
        }
        return 0;
    }

    if (count->parsed()) {
        ModelGuard m;
        if (gc_status s = gc_model_load(t_model.c_str(), GC_DTYPE_F32, &m.m))
            return die(s, "loading " + t_model);
        print_model_line(m.m);
        uint64_t params = 0, flops = 0;
        if (gc_status s = gc_model_count(m.m, t_h, t_w, &params, &flops))
            return die(s, "counting");
        std::printf("resolution: %ux%u\n", t_h, t_w);
        std::printf("params:     %" PRIu64 "  (%.2f M)\n", params, params / 1e6);
        std::printf("flops:      %" PRIu64 "  (%.2f G, multiply-add counted once)\n", flops,
                    flops / 1e9);
        return 0;
    }

    if (train->parsed()) {
        gc_toy_train_desc d{};
        d.seed = y_seed;
        d.iters = y_iters;
        d.batch = y_batch;
        d.image_size = y_size;
        d.base_channels = y_base_c;
        d.base_lr = y_lr;
        gc_toy_train_result r{};
        ModelGuard m;
        std::printf("training GCNet-S-narrow on synthetic shapes (%d iterations)...\n", y_iters);
        if (gc_status s = gc_toy_train(&d, y_trace.empty() ? nullptr : y_trace.c_str(), &r, &m.m))
            return die(s, "toy training");
        if (gc_status s = gc_model_save(m.m, y_out.c_str())) return die(s, "saving " + y_out);
        std::printf("final loss:     %.4f\n", r.final_loss);
        std::printf("validation mIoU: %.4f (%d classes)\n", r.final_miou, r.num_classes);
        if (!y_trace.empty()) std::printf("trace:          %s\n", y_trace.c_str());
        std::printf("saved %s\n", y_out.c_str());
        return 0;
    }

    if (segment->parsed()) {
        ModelGuard m;
        if (gc_status s = gc_model_load(s_model.c_str(), parse_dtype(s_dtype), &m.m))
            return die(s, "loading " + s_model);
        gc_segment_info info{};
        if (gc_status s = gc_model_segment(m.m, s_in.c_str(), s_out.c_str(), s_palette ? 1 : 0,
                                           &info))
            return die(s, "segmenting " + s_in);
        if (info.resized)
            std::fprintf(stderr,
                         "warning: %ux%u input is not divisible by 64; resized to %ux%u for "
                         "inference and mapped back\n",
                         info.in_w, info.in_h, info.net_w, info.net_h);
        std::printf("wrote %s (%ux%u)\n", s_out.c_str(), info.in_w, info.in_h);
        return 0;
    }

    return 0;
}
