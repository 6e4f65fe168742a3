#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "core/harness.hpp"
#include "core/image.hpp"
#include "core/serialize.hpp"
#include "test_util.hpp"

using namespace gcnet;
using namespace testutil;

namespace {

std::string tmp_path(const std::string& name) {
    return "gcnet_test_" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("model file: save -> load -> save is byte-identical") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 5, 8), 3);
    FileGuard a{tmp_path("rt_a.gcwt")}, b{tmp_path("rt_b.gcwt")};
    io::save_model(net, a.path);
    auto loaded = io::load_model<double>(a.path);
    io::save_model(loaded, b.path);
    CHECK(slurp(a.path) == slurp(b.path));

    // loaded values are the f32 quantization of the originals
    auto po = parameters(net);
    auto pl = parameters(loaded);
    REQUIRE(po.size() == pl.size());
    for (std::size_t i = 0; i < po.size(); ++i)
        for (std::size_t j = 0; j < po[i].data->size(); ++j)
            CHECK((*pl[i].data)[j] == static_cast<double>(static_cast<float>((*po[i].data)[j])));
}

TEST_CASE("model file: f32 models round trip exactly") {
    auto net = build_gcnet<float>(NetworkConfig::make(Variant::S, 4, 8), 9);
    FileGuard f{tmp_path("rt_f32.gcwt")};
    io::save_model(net, f.path);
    auto loaded = io::load_model<float>(f.path);
    auto po = parameters(net);
    auto pl = parameters(loaded);
    REQUIRE(po.size() == pl.size());
    for (std::size_t i = 0; i < po.size(); ++i)
        for (std::size_t j = 0; j < po[i].data->size(); ++j)
            CHECK((*pl[i].data)[j] == (*po[i].data)[j]);
    CHECK(loaded.cfg.num_classes == 4);
    CHECK(loaded.cfg.base_channels == 8);
    CHECK(loaded.form == Form::training);
}

TEST_CASE("model file: truncation and bad magic fail cleanly") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 4, 8), 1);
    FileGuard f{tmp_path("trunc.gcwt")};
    io::save_model(net, f.path);
    const std::string full = slurp(f.path);

    FileGuard cut{tmp_path("cut.gcwt")};
    std::ofstream(cut.path, std::ios::binary).write(full.data(), full.size() / 2);
    CHECK_THROWS_AS(io::load_model<double>(cut.path), FormatError);

    FileGuard bad{tmp_path("bad.gcwt")};
    std::string corrupted = full;
    corrupted[0] = 'X';
    std::ofstream(bad.path, std::ios::binary).write(corrupted.data(), corrupted.size());
    CHECK_THROWS_AS(io::load_model<double>(bad.path), FormatError);

    CHECK_THROWS_AS(io::load_model<double>("does_not_exist.gcwt"), IoError);
}

TEST_CASE("model file: contracted model file is smaller; inference form rejects training") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 5, 8), 2);
    auto fused = contract_network(net);
    FileGuard a{tmp_path("train.gcwt")}, b{tmp_path("infer.gcwt")};
    io::save_model(net, a.path);
    io::save_model(fused, b.path);
    CHECK(slurp(b.path).size() < slurp(a.path).size());

    auto loaded = io::load_model<double>(b.path);
    CHECK(loaded.form == Form::inference);
    CHECK(batchnorm_count(loaded) == 0);
    const auto x = random_input<double>(1, 3, 64, 64, 7);
    CHECK_THROWS_AS(network_forward_train(loaded, x), InvalidArgument);
    CHECK_NOTHROW(network_forward_eval(loaded, x));
}

TEST_CASE("ppm/pgm: round trips and malformed input") {
    io::PpmImage img;
    img.w = 3;
    img.h = 2;
    img.rgb = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 160, 170, 180};
    FileGuard p{tmp_path("img.ppm")};
    io::write_ppm(img, p.path);
    const auto back = io::read_ppm(p.path);
    CHECK(back.w == 3);
    CHECK(back.h == 2);
    CHECK(back.rgb == img.rgb);

    LabelMap labels(1, 2, 3);
    labels.data = {0, 1, 2, 3, 4, 5};
    FileGuard g{tmp_path("labels.pgm")};
    io::write_pgm(labels, g.path);
    const auto lback = io::read_pgm(g.path);
    CHECK(lback.data == labels.data);

    FileGuard junk{tmp_path("junk.ppm")};
    std::ofstream(junk.path, std::ios::binary) << "P6\n4 4\n255\nxx";
    CHECK_THROWS_AS(io::read_ppm(junk.path), FormatError);
    FileGuard text{tmp_path("text.ppm")};
    std::ofstream(text.path, std::ios::binary) << "P3\n1 1\n255\n0 0 0\n";
    CHECK_THROWS_AS(io::read_ppm(text.path), FormatError);
}

TEST_CASE("check harness: fresh model passes strict f64 tolerance") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 7, 8), 21);
    const auto r = check_equivalence(net, 3, 64, 128, 1e-8, 99);
    CHECK(r.pass);
    CHECK(r.max_abs_err <= 1e-8);
    CHECK(r.argmax_mismatches == 0);

    CHECK_THROWS_AS(check_equivalence(net, 0, 64, 128, 1e-8, 99), InvalidArgument);
    auto fused = contract_network(net);
    CHECK_THROWS_AS(check_equivalence(fused, 3, 64, 128, 1e-8, 99), InvalidArgument);
}

TEST_CASE("check harness: invariant under doubling one BN gamma") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 5, 8), 22);
    REQUIRE(net.s2[0].paths[0].stages[0].bn.has_value());
    for (auto& v : net.s2[0].paths[0].stages[0].bn->gamma) v *= 2.0;
    const auto r = check_equivalence(net, 3, 64, 64, 1e-8, 5);
    CHECK(r.pass);
}

TEST_CASE("check harness: a perturbed fused kernel is caught") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 5, 8), 23);
    auto fused = contract_network(net);
    fused.s3[0].fused->weight[0] += 1e-3;

    const auto x = random_input<double>(1, 3, 64, 64, 3);
    const auto a = network_forward_eval(net, x);
    const auto b = network_forward_eval(fused, x);
    CHECK(rel_error(b, a) > 1e-8);
}

TEST_CASE("segment: zero model labels everything class 0 with matching dims") {
    auto net = build_gcnet<double>(NetworkConfig::make(Variant::S, 5, 8), 4);
    for (auto& p : parameters(net))
        for (auto& v : *p.data) v = 0.0;

    io::PpmImage img;
    img.w = 70;  // not divisible by 64: exercises the resize path
    img.h = 66;
    img.rgb.assign(static_cast<std::size_t>(img.w) * img.h * 3, 128);
    FileGuard in{tmp_path("seg_in.ppm")}, out{tmp_path("seg_out.pgm")};
    io::write_ppm(img, in.path);

    const auto info = segment_file(net, in.path, out.path, false);
    CHECK(info.resized);
    CHECK(info.net_h == 128);
    CHECK(info.net_w == 128);

    const auto labels = io::read_pgm(out.path);
    CHECK(labels.h == img.h);
    CHECK(labels.w == img.w);
    for (const auto v : labels.data) CHECK(v == 0);  // tie-break toward class 0
}

TEST_CASE("bench harness: enforces minimum warmup and iteration counts") {
    auto net = build_gcnet<float>(NetworkConfig::make(Variant::S, 4, 4), 5);
    CHECK_THROWS_AS(run_bench(net, 64, 64, 4, 20, 1), InvalidArgument);
    CHECK_THROWS_AS(run_bench(net, 64, 64, 5, 19, 1), InvalidArgument);
    CHECK_THROWS_AS(run_bench(net, 60, 64, 5, 20, 1), InvalidArgument);
}
