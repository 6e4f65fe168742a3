#include "core/image.hpp"

#include <cmath>
#include <fstream>

namespace gcnet {
namespace io {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw FormatError("unexpected end of header in " + path);
    return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
    int v = 0;
    for (char c : tok) {
        if (c < '0' || c > '9') throw FormatError("bad numeric header field in " + path);
        v = v * 10 + (c - '0');
        if (v > (1 << 24)) throw FormatError("implausible image dimension in " + path);
    }
    if (v < 1) throw FormatError("image dimensions must be >= 1 in " + path);
    return v;
}

}  // namespace

PpmImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    if (next_token(in, path) != "P6") throw FormatError("not a binary PPM (P6) file: " + path);
    PpmImage img;
    img.w = parse_dim(next_token(in, path), path);
    img.h = parse_dim(next_token(in, path), path);
    const int maxval = parse_dim(next_token(in, path), path);
    if (maxval != 255) throw FormatError("only maxval 255 PPM images are supported: " + path);
    img.rgb.resize(static_cast<std::size_t>(img.w) * img.h * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.rgb.size())
        throw FormatError("truncated PPM payload: " + path);
    return img;
}

void write_ppm(const PpmImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open image for writing: " + path);
    out << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw IoError("failed writing image: " + path);
}

void write_pgm(const LabelMap& labels, const std::string& path) {
    require(labels.n == 1, "write_pgm: single label map expected");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open label map for writing: " + path);
    out << "P5\n" << labels.w << ' ' << labels.h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(labels.w));
    for (int y = 0; y < labels.h; ++y) {
        for (int x = 0; x < labels.w; ++x) {
            const std::int32_t v = labels.at(0, y, x);
            require(v >= 0 && v <= 255, "write_pgm: label exceeds 8-bit range");
            row[static_cast<std::size_t>(x)] = static_cast<std::uint8_t>(v);
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing label map: " + path);
}

LabelMap read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open label map: " + path);
    if (next_token(in, path) != "P5") throw FormatError("not a binary PGM (P5) file: " + path);
    const int w = parse_dim(next_token(in, path), path);
    const int h = parse_dim(next_token(in, path), path);
    const int maxval = parse_dim(next_token(in, path), path);
    if (maxval != 255) throw FormatError("only maxval 255 PGM files are supported: " + path);
    LabelMap out(1, h, w);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), w);
        if (in.gcount() != w) throw FormatError("truncated PGM payload: " + path);
        for (int x = 0; x < w; ++x) out.at(0, y, x) = row[static_cast<std::size_t>(x)];
    }
    return out;
}

template <typename T>
Tensor4<T> ppm_to_tensor(const PpmImage& img) {
    Tensor4<T> out(1, 3, img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * img.w + x) * 3;
            for (int c = 0; c < 3; ++c)
                out.at(0, c, y, x) = static_cast<T>(img.rgb[base + c] / 255.0);
        }
    }
    return out;
}

template <typename T>
PpmImage tensor_to_ppm(const Tensor4<T>& x) {
    require(x.n == 1 && x.c == 3, "tensor_to_ppm: expected a single RGB tensor");
    PpmImage img;
    img.w = x.w;
    img.h = x.h;
    img.rgb.resize(static_cast<std::size_t>(x.w) * x.h * 3);
    for (int y = 0; y < x.h; ++y) {
        for (int xx = 0; xx < x.w; ++xx) {
            for (int c = 0; c < 3; ++c) {
                double v = static_cast<double>(x.at(0, c, y, xx));
                v = std::min(1.0, std::max(0.0, v));
                img.rgb[(static_cast<std::size_t>(y) * x.w + xx) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

PpmImage colorize_labels(const LabelMap& labels) {
    require(labels.n == 1, "colorize_labels: single label map expected");
    // 16-entry repeating palette; ignore pixels render black
    static constexpr std::uint8_t kPalette[16][3] = {
        {64, 64, 64},   {220, 60, 60},  {60, 200, 80},   {70, 90, 230},
        {230, 200, 50}, {60, 200, 200}, {200, 70, 200},  {240, 140, 40},
        {130, 220, 40}, {40, 130, 220}, {220, 40, 130},  {150, 150, 90},
        {90, 150, 150}, {150, 90, 150}, {200, 200, 200}, {30, 90, 30}};
    PpmImage img;
    img.w = labels.w;
    img.h = labels.h;
    img.rgb.assign(static_cast<std::size_t>(labels.w) * labels.h * 3, 0);
    for (int y = 0; y < labels.h; ++y) {
        for (int x = 0; x < labels.w; ++x) {
            const std::int32_t v = labels.at(0, y, x);
            if (v == LabelMap::kIgnore) continue;
            const std::uint8_t* color = kPalette[v % 16];
            std::uint8_t* dst = &img.rgb[(static_cast<std::size_t>(y) * labels.w + x) * 3];
            dst[0] = color[0];
            dst[1] = color[1];
            dst[2] = color[2];
        }
    }
    return img;
}

template Tensor4<float> ppm_to_tensor<float>(const PpmImage&);
template Tensor4<double> ppm_to_tensor<double>(const PpmImage&);
template PpmImage tensor_to_ppm<float>(const Tensor4<float>&);
template PpmImage tensor_to_ppm<double>(const Tensor4<double>&);

}  // namespace io
}  // namespace gcnet
