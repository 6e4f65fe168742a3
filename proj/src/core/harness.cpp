#include "core/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "core/image.hpp"

namespace gcnet {

template <typename T>
Tensor4<T> random_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4<T> x(n, c, h, w);
    for (auto& v : x.data) v = static_cast<T>(rng.uniform());
    return x;
}

template <typename T>
CheckReport check_equivalence(Network<T>& training_form, int trials, int h, int w, double tol,
                              std::uint64_t seed) {
    require(training_form.form == Form::training,
            "check: model is already inference-form; a training-form model is required");
    require(trials >= 1, "check: trial count must be >= 1");
    require(tol > 0.0, "check: tolerance must be positive");

    Network<T> fused = contract_network(training_form);

    CheckReport report;
    report.trials = trials;
    report.tol = tol;
    double max_ref = 0.0;
    for (int t = 0; t < trials; ++t) {
        const Tensor4<T> x = random_input<T>(1, 3, h, w, seed + t);
        const Tensor4<T> a = network_forward_eval(training_form, x);
        const Tensor4<T> b = network_forward_eval(fused, x);

        for (std::size_t j = 0; j < a.size(); ++j) {
            const double diff =
                std::abs(static_cast<double>(a.data[j]) - static_cast<double>(b.data[j]));
            report.max_abs_err = std::max(report.max_abs_err, diff);
            max_ref = std::max(max_ref, std::abs(static_cast<double>(a.data[j])));
        }

        const LabelMap la = argmax_channel(a);
        const LabelMap lb = argmax_channel(b);
        const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
        report.pixels += plane;
        for (std::size_t j = 0; j < plane; ++j) {
            if (la.data[j] == lb.data[j]) continue;
            // disagreements inside the float noise floor of a near-tie do
            // not count; measure the top-two margin of the reference
            double best = -1e300, second = -1e300;
            for (int ci = 0; ci < a.c; ++ci) {
                const double v = a.plane(0, ci)[j];
                if (v > best) {
                    second = best;
                    best = v;
                } else if (v > second) {
                    second = v;
                }
            }
            if (best - second > 1e-6) ++report.argmax_mismatches;
        }
    }
    report.max_rel_err = report.max_abs_err / std::max(max_ref, 1e-30);
    report.pass = report.max_rel_err <= tol;
    return report;
}

void print_check(const CheckReport& r, std::ostream& out) {
    out << "trials:             " << r.trials << "\n"
        << "max abs error:      " << r.max_abs_err << "\n"
        << "max rel error:      " << r.max_rel_err << "  (tolerance " << r.tol << ")\n"
        << "argmax mismatches:  " << r.argmax_mismatches << " of " << r.pixels
        << " pixels (margin > 1e-6)\n"
        << "result:             " << (r.pass ? "PASS" : "FAIL") << "\n";
}

template <typename T>
BenchReport run_bench(Network<T>& net, int h, int w, int warmup, int iters, std::uint64_t seed) {
    require(warmup >= 5, "bench: warmup iterations must be >= 5");
    require(iters >= 20, "bench: timed iterations must be >= 20");
    require(h % 64 == 0 && w % 64 == 0, "bench: dims must be divisible by 64");

    const Tensor4<T> x = random_input<T>(1, 3, h, w, seed);
    for (int i = 0; i < warmup; ++i) network_forward_eval(net, x);

    std::vector<double> ms(static_cast<std::size_t>(iters));
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        network_forward_eval(net, x);
        const auto t1 = std::chrono::steady_clock::now();
        ms[static_cast<std::size_t>(i)] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::vector<double> sorted = ms;
    std::sort(sorted.begin(), sorted.end());

    BenchReport r;
    r.variant = variant_name(net.cfg.variant);
    r.form = net.form == Form::training ? "training" : "inference";
    r.h = h;
    r.w = w;
    r.warmup_iters = warmup;
    r.timed_iters = iters;
    double total = 0.0;
    for (double v : ms) total += v;
    r.mean_ms = total / iters;
    r.median_ms = iters % 2 == 1
                      ? sorted[static_cast<std::size_t>(iters / 2)]
                      : 0.5 * (sorted[static_cast<std::size_t>(iters / 2 - 1)] +
                               sorted[static_cast<std::size_t>(iters / 2)]);
    r.p95_ms = sorted[static_cast<std::size_t>(
        std::min<std::size_t>(sorted.size() - 1,
                              static_cast<std::size_t>(std::ceil(0.95 * iters)) - 1))];
    r.fps = 1000.0 / r.median_ms;

    const CountReport counts = count_params_flops(net, h, w);
    r.params = counts.params;
    r.gflops = static_cast<double>(counts.flops) / 1e9;
    return r;
}

void print_bench(const BenchReport& r, std::ostream& out) {
    out << "variant:      GCNet-" << r.variant << " (" << r.form << " form)\n"
        << "resolution:   " << r.h << "x" << r.w << " (batch 1)\n"
        << "warmup/timed: " << r.warmup_iters << "/" << r.timed_iters << " iters\n"
        << "latency ms:   mean " << r.mean_ms << ", median " << r.median_ms << ", p95 "
        << r.p95_ms << "\n"
        << "fps:          " << r.fps << "\n"
        << "params:       " << r.params << "\n"
        << "gflops:       " << r.gflops << "\n";
}

void write_bench_csv(const BenchReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open benchmark csv for writing: " + path);
    out << "variant,form,height,width,warmup_iters,timed_iters,mean_ms,median_ms,p95_ms,fps,"
           "params,gflops\n";
    out.precision(10);
    out << r.variant << ',' << r.form << ',' << r.h << ',' << r.w << ',' << r.warmup_iters << ','
        << r.timed_iters << ',' << r.mean_ms << ',' << r.median_ms << ',' << r.p95_ms << ','
        << r.fps << ',' << r.params << ',' << r.gflops << '\n';
    if (!out) throw IoError("failed writing benchmark csv: " + path);
}

template <typename T>
SegmentInfo segment_file(Network<T>& net, const std::string& image_path,
                         const std::string& out_path, bool palette) {
    require(net.cfg.num_classes <= 255, "segment: label maps are 8-bit, need <= 255 classes");

    const io::PpmImage img = io::read_ppm(image_path);
    Tensor4<T> x = io::ppm_to_tensor<T>(img);

    SegmentInfo info;
    info.in_w = img.w;
    info.in_h = img.h;
    info.net_h = (img.h + 63) / 64 * 64;
    info.net_w = (img.w + 63) / 64 * 64;
    info.resized = info.net_h != img.h || info.net_w != img.w;
    if (info.resized) x = bilinear_resize(x, info.net_h, info.net_w);

    Tensor4<T> logits = network_forward_eval(net, x);
    if (info.resized) logits = bilinear_resize(logits, img.h, img.w);
    const LabelMap labels = argmax_channel(logits);

    if (palette)
        io::write_ppm(io::colorize_labels(labels), out_path);
    else
        io::write_pgm(labels, out_path);
    return info;
}

#define GCNET_INSTANTIATE(T)                                                                \
    template Tensor4<T> random_input<T>(int, int, int, int, std::uint64_t);                \
    template CheckReport check_equivalence<T>(Network<T>&, int, int, int, double,          \
                                              std::uint64_t);                              \
    template BenchReport run_bench<T>(Network<T>&, int, int, int, int, std::uint64_t);     \
    template SegmentInfo segment_file<T>(Network<T>&, const std::string&,                  \
                                         const std::string&, bool);

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace gcnet
