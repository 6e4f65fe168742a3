#include "core/serialize.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace gcnet {
namespace io {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open model file: " + path);
    }

    void bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError("truncated model file: " + path_);
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    bool at_end() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
    std::string path_;
};

struct NamedTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

template <typename T>
void append_tensor(std::string& out, const std::string& name,
                   const std::vector<std::uint32_t>& dims, const std::vector<T>& values,
                   std::uint32_t& count) {
    require(name.size() <= 0xffff, "model tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(dims.size()));
    std::size_t total = 1;
    for (std::uint32_t d : dims) {
        put_u32(out, d);
        total *= d;
    }
    require(total == values.size(), "model tensor dims do not match payload");
    for (const T& v : values) put_f32(out, static_cast<float>(v));
    ++count;
}

std::uint8_t variant_byte(Variant v) {
    switch (v) {
        case Variant::S: return 0;
        case Variant::M: return 1;
        case Variant::L: return 2;
    }
    return 0;
}

Variant byte_variant(std::uint8_t b) {
    switch (b) {
        case 0: return Variant::S;
        case 1: return Variant::M;
        case 2: return Variant::L;
        default: throw FormatError("model file: unknown variant byte " + std::to_string(b));
    }
}

}  // namespace

template <typename T>
void save_model(Network<T>& net, const std::string& path) {
    std::string body;
    std::uint32_t count = 0;
    visit_network_tensors<T>(
        net,
        [&](const std::string& name, ConvKernel<T>& k) {
            append_tensor(body, name + ".weight",
                          {static_cast<std::uint32_t>(k.c_out), static_cast<std::uint32_t>(k.c_in),
                           static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw)},
                          k.weight, count);
            append_tensor(body, name + ".bias", {static_cast<std::uint32_t>(k.c_out)}, k.bias,
                          count);
        },
        [&](const std::string& name, BatchNormStats<T>& s) {
            const std::uint32_t c = static_cast<std::uint32_t>(s.channels());
            append_tensor(body, name + ".gamma", {c}, s.gamma, count);
            append_tensor(body, name + ".beta", {c}, s.beta, count);
            append_tensor(body, name + ".mean", {c}, s.mean, count);
            append_tensor(body, name + ".var", {c}, s.var, count);
        });

    std::string header = "GCWT";
    put_u32(header, kModelFormatVersion);
    header.push_back(net.form == Form::training ? 0 : 1);
    header.push_back(static_cast<char>(variant_byte(net.cfg.variant)));
    put_u32(header, static_cast<std::uint32_t>(net.cfg.num_classes));
    put_u32(header, static_cast<std::uint32_t>(net.cfg.base_channels));
    put_u32(header, count);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open model file for writing: " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("failed writing model file: " + path);
}

template <typename T>
Network<T> load_model(const std::string& path) {
    Reader in(path);

    char magic[4];
    in.bytes(magic, 4);
    if (std::memcmp(magic, "GCWT", 4) != 0)
        throw FormatError("not a GCWT model file: " + path);
    const std::uint32_t version = in.u32();
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    const std::uint8_t form_byte = in.u8();
    if (form_byte > 1) throw FormatError("model file: bad form byte");
    const Variant variant = byte_variant(in.u8());
    const std::uint32_t num_classes = in.u32();
    const std::uint32_t base_c = in.u32();
    const std::uint32_t count = in.u32();
    if (num_classes < 2 || num_classes > 100000 || base_c < 1 || base_c > 100000)
        throw FormatError("model file: implausible header fields");

    std::map<std::string, NamedTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = in.u16();
        std::string name(name_len, '\0');
        in.bytes(name.data(), name_len);
        const std::uint8_t rank = in.u8();
        if (rank == 0 || rank > 4) throw FormatError("model file: bad tensor rank for " + name);
        NamedTensor t;
        std::size_t total = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = in.u32();
            if (dim == 0 || dim > (1u << 24)) throw FormatError("model file: bad dim for " + name);
            t.dims.push_back(dim);
            total *= dim;
        }
        t.values.resize(total);
        for (std::size_t j = 0; j < total; ++j) t.values[j] = in.f32();
        if (!tensors.emplace(name, std::move(t)).second)
            throw FormatError("model file: duplicate tensor name " + name);
    }
    if (!in.at_end()) throw FormatError("model file: trailing bytes after last tensor");

    // PPM variant is carried structurally by the tensor names.
    const PpmKind ppm = tensors.count("ppm.scale0.weight") ? PpmKind::dappm : PpmKind::global_pool;

    NetworkConfig cfg = NetworkConfig::make(variant, static_cast<int>(num_classes),
                                            static_cast<int>(base_c), ppm);
    Network<T> net = build_gcnet<T>(cfg, 0);
    if (form_byte == 1) net = contract_network(net);

    std::size_t used = 0;
    auto take = [&](const std::string& name, const std::vector<std::uint32_t>& want_dims,
                    std::vector<T>& dst) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw FormatError("model file: missing tensor " + name);
        if (it->second.dims != want_dims)
            throw FormatError("model file: shape mismatch for " + name);
        dst.resize(it->second.values.size());
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(it->second.values[j]);
        ++used;
    };

    visit_network_tensors<T>(
        net,
        [&](const std::string& name, ConvKernel<T>& k) {
            take(name + ".weight",
                 {static_cast<std::uint32_t>(k.c_out), static_cast<std::uint32_t>(k.c_in),
                  static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw)},
                 k.weight);
            take(name + ".bias", {static_cast<std::uint32_t>(k.c_out)}, k.bias);
        },
        [&](const std::string& name, BatchNormStats<T>& s) {
            const std::uint32_t c = static_cast<std::uint32_t>(s.channels());
            take(name + ".gamma", {c}, s.gamma);
            take(name + ".beta", {c}, s.beta);
            take(name + ".mean", {c}, s.mean);
            take(name + ".var", {c}, s.var);
        });
    if (used != tensors.size())
        throw FormatError("model file: contains tensors not part of this architecture");
    return net;
}

template void save_model<float>(Network<float>&, const std::string&);
template void save_model<double>(Network<double>&, const std::string&);
template Network<float> load_model<float>(const std::string&);
template Network<double> load_model<double>(const std::string&);

}  // namespace io
}  // namespace gcnet
