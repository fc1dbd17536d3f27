#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sdcn/tensor.hpp"

namespace sdcn {

static_assert(std::endian::native == std::endian::little,
              "sgt/clip/checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kSgtMagic[4] = {'S', 'G', 'T', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw FormatError("sgt: truncated header");
    }
    return v;
}

}  // namespace

void write_sgt(std::ostream& out, const Tensor4& t) {
    const Shape4 s = t.shape();
    out.write(kSgtMagic, sizeof kSgtMagic);
    for (std::size_t d : {s.b, s.c, s.h, s.w}) {
        if (d > 0xFFFFFFFFu) {
            throw ShapeError("sgt: dimension exceeds u32");
        }
        write_u32(out, static_cast<std::uint32_t>(d));
    }
    out.write(reinterpret_cast<const char*>(t.span().data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) {
        throw IoError("sgt: write failed");
    }
}

Tensor4 read_sgt(std::istream& in) {
    char magic[4];
    if (!in.read(magic, sizeof magic)) {
        throw FormatError("sgt: truncated magic");
    }
    if (std::memcmp(magic, kSgtMagic, sizeof magic) != 0) {
        throw FormatError("sgt: bad magic");
    }
    Shape4 s;
    s.b = read_u32(in);
    s.c = read_u32(in);
    s.h = read_u32(in);
    s.w = read_u32(in);
    if (s.count() == 0) {
        throw FormatError("sgt: zero dimension");
    }
    std::vector<float> data(s.count());
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float)))) {
        throw FormatError("sgt: truncated payload");
    }
    return Tensor4(s, std::move(data));
}

void save_sgt(const std::string& path, const Tensor4& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    write_sgt(out, t);
}

Tensor4 load_sgt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    return read_sgt(in);
}

}  // namespace sdcn
