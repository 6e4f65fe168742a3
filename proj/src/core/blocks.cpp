#include "core/blocks.hpp"

#include "core/autograd.hpp"

namespace gcnet {

template <typename T>
Tensor4<T> gcblock_forward(GCBlock<T>& b, const Tensor4<T>& x, Mode mode) {
    if (mode == Mode::eval) {
        EvalExec<T> ex;
        return ex.value(gcblock_run(ex, b, ex.input(x)));
    }
    require(b.form == Form::training, "gcblock: train mode requires the training form");
    TapeExec<T> ex(false);
    return ex.value(gcblock_run(ex, b, ex.input(x)));
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> bilateral_fuse(FusionModule<T>& s2d, FusionModule<T>& d2s,
                                                 const Tensor4<T>& sem, const Tensor4<T>& det,
                                                 Mode mode) {
    if (mode == Mode::eval) {
        EvalExec<T> ex;
        auto [s, d] = bilateral_fuse_run(ex, s2d, d2s, ex.input(sem), ex.input(det));
        return {ex.value(s), ex.value(d)};
    }
    TapeExec<T> ex(false);
    auto [s, d] = bilateral_fuse_run(ex, s2d, d2s, ex.input(sem), ex.input(det));
    return {ex.value(s), ex.value(d)};
}

template <typename T>
Tensor4<T> pyramid_pool_forward(PyramidPooling<T>& p, const Tensor4<T>& x, Mode mode) {
    if (mode == Mode::eval) {
        EvalExec<T> ex;
        return ex.value(ppm_run(ex, p, ex.input(x)));
    }
    TapeExec<T> ex(false);
    return ex.value(ppm_run(ex, p, ex.input(x)));
}

template <typename T>
Tensor4<T> seghead_forward(SegHead<T>& h, const Tensor4<T>& x, Mode mode) {
    if (mode == Mode::eval) {
        EvalExec<T> ex;
        return ex.value(seghead_run(ex, h, ex.input(x)));
    }
    TapeExec<T> ex(false);
    return ex.value(seghead_run(ex, h, ex.input(x)));
}

#define GCNET_INSTANTIATE(T)                                                                   \
    template Tensor4<T> gcblock_forward<T>(GCBlock<T>&, const Tensor4<T>&, Mode);             \
    template std::pair<Tensor4<T>, Tensor4<T>> bilateral_fuse<T>(                             \
        FusionModule<T>&, FusionModule<T>&, const Tensor4<T>&, const Tensor4<T>&, Mode);      \
    template Tensor4<T> pyramid_pool_forward<T>(PyramidPooling<T>&, const Tensor4<T>&, Mode); \
    template Tensor4<T> seghead_forward<T>(SegHead<T>&, const Tensor4<T>&, Mode);

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace gcnet
