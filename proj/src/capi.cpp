#include "gcnet/gcnet.h"

#include <cstring>
#include <string>
#include <variant>

#include "core/harness.hpp"
#include "core/network.hpp"
#include "core/serialize.hpp"
#include "core/train.hpp"

using namespace gcnet;

// Opaque handle: one network in either element type.
struct gc_model {
    std::variant<Network<float>, Network<double>> net;

    gc_dtype dtype() const { return net.index() == 0 ? GC_DTYPE_F32 : GC_DTYPE_F64; }

    template <typename F>
    auto visit(F&& f) const {
        return std::visit(std::forward<F>(f), const_cast<gc_model*>(this)->net);
    }
};

namespace {

thread_local std::string g_last_error;

gc_status fail(gc_status status, const char* what) {
    g_last_error = what ? what : "";
    return status;
}

template <typename F>
gc_status guarded(F&& f) {
    try {
        f();
        return GC_OK;
    } catch (const InvalidArgument& e) {
        return fail(GC_ERR_INVALID_ARGUMENT, e.what());
    } catch (const IoError& e) {
        return fail(GC_ERR_IO, e.what());
    } catch (const FormatError& e) {
        return fail(GC_ERR_FORMAT, e.what());
    } catch (const NumericError& e) {
        return fail(GC_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(GC_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(GC_ERR_INTERNAL, "unknown error");
    }
}

gc_status need(bool cond, const char* msg) {
    return cond ? GC_OK : fail(GC_ERR_INVALID_ARGUMENT, msg);
}

Variant to_variant(gc_variant v) {
    switch (v) {
        case GC_VARIANT_S: return Variant::S;
        case GC_VARIANT_M: return Variant::M;
        case GC_VARIANT_L: return Variant::L;
    }
    throw InvalidArgument("unknown variant value");
}

gc_variant from_variant(Variant v) {
    switch (v) {
        case Variant::S: return GC_VARIANT_S;
        case Variant::M: return GC_VARIANT_M;
        case Variant::L: return GC_VARIANT_L;
    }
    return GC_VARIANT_S;
}

template <typename In, typename Out>
void forward_copy(const gc_model* model, const In* image, uint32_t h, uint32_t w,
                  Out* logits_out) {
    model->visit([&](auto& net) {
        using S = typename std::decay_t<decltype(net.stem[0].conv.weight[0])>;
        Tensor4<S> x(1, 3, static_cast<int>(h), static_cast<int>(w));
        for (std::size_t j = 0; j < x.size(); ++j) x.data[j] = static_cast<S>(image[j]);
        const Tensor4<S> logits = network_forward_eval(net, x);
        for (std::size_t j = 0; j < logits.size(); ++j)
            logits_out[j] = static_cast<Out>(logits.data[j]);
    });
}

}  // namespace

extern "C" {

const char* gc_version(void) { return "1.0.0"; }

const char* gc_status_name(gc_status status) {
    switch (status) {
        case GC_OK: return "ok";
        case GC_ERR_INVALID_ARGUMENT: return "invalid argument";
        case GC_ERR_IO: return "io error";
        case GC_ERR_FORMAT: return "format error";
        case GC_ERR_NUMERIC: return "numeric error";
        case GC_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

const char* gc_last_error(void) { return g_last_error.c_str(); }

gc_status gc_model_build(const gc_build_desc* desc, gc_model** out) {
    if (gc_status s = need(desc && out, "gc_model_build: null argument")) return s;
    return guarded([&] {
        NetworkConfig cfg = NetworkConfig::make(
            to_variant(desc->variant), static_cast<int>(desc->num_classes),
            static_cast<int>(desc->base_channels),
            desc->ppm == GC_PPM_DAPPM ? PpmKind::dappm : PpmKind::global_pool);
        auto* model = new gc_model;
        if (desc->dtype == GC_DTYPE_F64)
            model->net = build_gcnet<double>(cfg, desc->seed);
        else
            model->net = build_gcnet<float>(cfg, desc->seed);
        *out = model;
    });
}

void gc_model_free(gc_model* model) { delete model; }

gc_status gc_model_save(const gc_model* model, const char* path) {
    if (gc_status s = need(model && path, "gc_model_save: null argument")) return s;
    return guarded([&] { model->visit([&](auto& net) { io::save_model(net, path); }); });
}

gc_status gc_model_load(const char* path, gc_dtype dtype, gc_model** out) {
    if (gc_status s = need(path && out, "gc_model_load: null argument")) return s;
    return guarded([&] {
        auto* model = new gc_model;
        try {
            if (dtype == GC_DTYPE_F64)
                model->net = io::load_model<double>(path);
            else
                model->net = io::load_model<float>(path);
        } catch (...) {
            delete model;
            throw;
        }
        *out = model;
    });
}

gc_status gc_model_contract(const gc_model* model, gc_model** out) {
    if (gc_status s = need(model && out, "gc_model_contract: null argument")) return s;
    return guarded([&] {
        auto* fused = new gc_model;
        try {
            model->visit([&](auto& net) { fused->net = contract_network(net); });
        } catch (...) {
            delete fused;
            throw;
        }
        *out = fused;
    });
}

gc_status gc_model_describe(const gc_model* model, gc_model_desc* out) {
    if (gc_status s = need(model && out, "gc_model_describe: null argument")) return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            out->variant = from_variant(net.cfg.variant);
            out->form = net.form == Form::training ? GC_FORM_TRAINING : GC_FORM_INFERENCE;
            out->dtype = model->dtype();
            out->num_classes = static_cast<uint32_t>(net.cfg.num_classes);
            out->base_channels = static_cast<uint32_t>(net.cfg.base_channels);
            out->paths_per_block = static_cast<uint32_t>(net.cfg.n_paths);
        });
    });
}

gc_status gc_model_count(const gc_model* model, uint32_t h, uint32_t w, uint64_t* params,
                         uint64_t* flops) {
    if (gc_status s = need(model && params && flops, "gc_model_count: null argument")) return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            const CountReport r =
                count_params_flops(net, static_cast<int>(h), static_cast<int>(w));
            *params = r.params;
            *flops = r.flops;
        });
    });
}

gc_status gc_model_forward_f32(const gc_model* model, const float* image, uint32_t h, uint32_t w,
                               float* logits_out) {
    if (gc_status s = need(model && image && logits_out, "gc_model_forward: null argument"))
        return s;
    return guarded([&] { forward_copy(model, image, h, w, logits_out); });
}

gc_status gc_model_forward_f64(const gc_model* model, const double* image, uint32_t h, uint32_t w,
                               double* logits_out) {
    if (gc_status s = need(model && image && logits_out, "gc_model_forward: null argument"))
        return s;
    return guarded([&] { forward_copy(model, image, h, w, logits_out); });
}

gc_status gc_model_check(const gc_model* model, int32_t trials, uint32_t h, uint32_t w,
                         double tol, uint64_t seed, gc_check_report* out) {
    if (gc_status s = need(model && out, "gc_model_check: null argument")) return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            const CheckReport r = check_equivalence(net, trials, static_cast<int>(h),
                                                    static_cast<int>(w), tol, seed);
            out->trials = r.trials;
            out->tol = r.tol;
            out->max_abs_err = r.max_abs_err;
            out->max_rel_err = r.max_rel_err;
            out->argmax_mismatches = r.argmax_mismatches;
            out->pixels = r.pixels;
            out->pass = r.pass ? 1 : 0;
        });
    });
}

gc_status gc_model_bench(const gc_model* model, uint32_t h, uint32_t w, int32_t warmup,
                         int32_t iters, uint64_t seed, gc_bench_report* out) {
    if (gc_status s = need(model && out, "gc_model_bench: null argument")) return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            const BenchReport r = run_bench(net, static_cast<int>(h), static_cast<int>(w), warmup,
                                            iters, seed);
            out->h = h;
            out->w = w;
            out->warmup_iters = r.warmup_iters;
            out->timed_iters = r.timed_iters;
            out->mean_ms = r.mean_ms;
            out->median_ms = r.median_ms;
            out->p95_ms = r.p95_ms;
            out->fps = r.fps;
            out->params = r.params;
            out->gflops = r.gflops;
        });
    });
}

gc_status gc_bench_write_csv(const gc_model* model, const gc_bench_report* report,
                             const char* path) {
    if (gc_status s = need(model && report && path, "gc_bench_write_csv: null argument"))
        return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            BenchReport r;
            r.variant = variant_name(net.cfg.variant);
            r.form = net.form == Form::training ? "training" : "inference";
            r.h = static_cast<int>(report->h);
            r.w = static_cast<int>(report->w);
            r.warmup_iters = report->warmup_iters;
            r.timed_iters = report->timed_iters;
            r.mean_ms = report->mean_ms;
            r.median_ms = report->median_ms;
            r.p95_ms = report->p95_ms;
            r.fps = report->fps;
            r.params = report->params;
            r.gflops = report->gflops;
            write_bench_csv(r, path);
        });
    });
}

gc_status gc_model_segment(const gc_model* model, const char* image_path, const char* out_path,
                           int32_t write_palette, gc_segment_info* info_or_null) {
    if (gc_status s = need(model && image_path && out_path, "gc_model_segment: null argument"))
        return s;
    return guarded([&] {
        model->visit([&](auto& net) {
            const SegmentInfo info =
                segment_file(net, image_path, out_path, write_palette != 0);
            if (info_or_null) {
                info_or_null->in_w = static_cast<uint32_t>(info.in_w);
                info_or_null->in_h = static_cast<uint32_t>(info.in_h);
                info_or_null->net_w = static_cast<uint32_t>(info.net_w);
                info_or_null->net_h = static_cast<uint32_t>(info.net_h);
                info_or_null->resized = info.resized ? 1 : 0;
            }
        });
    });
}

gc_status gc_toy_train(const gc_toy_train_desc* desc, const char* trace_csv_path,
                       gc_toy_train_result* result_or_null, gc_model** out) {
    if (gc_status s = need(desc && out, "gc_toy_train: null argument")) return s;
    return guarded([&] {
        train::ToyTrainConfig cfg;
        cfg.seed = desc->seed;
        if (desc->iters > 0) cfg.iters = desc->iters;
        if (desc->batch > 0) cfg.batch = desc->batch;
        if (desc->image_size > 0) cfg.image_size = desc->image_size;
        if (desc->base_channels > 0) cfg.base_channels = static_cast<int>(desc->base_channels);
        if (desc->base_lr > 0) cfg.base_lr = desc->base_lr;

        train::ToyTrainResult result = train::toy_train_run(cfg);
        if (trace_csv_path) train::write_trace_csv(result.trace, trace_csv_path);
        if (result_or_null) {
            result_or_null->final_loss = result.trace.empty() ? 0.0 : result.trace.back().loss;
            result_or_null->final_miou = result.final_miou;
            result_or_null->num_classes = train::ShapeDataset::kNumClasses;
        }
        auto* model = new gc_model;
        model->net = std::move(result.net);
        *out = model;
    });
}

}  // extern "C"
