#include <cstring>
#include <fstream>

#include "sdcn/wavelet.hpp"

namespace sdcn {

namespace {

constexpr char kClipMagic[4] = {'C', 'L', 'P', '1'};

template <typename V>
void put(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in, const std::string& path) {
    V v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw FormatError("clip " + path + ": truncated header");
    }
    return v;
}

}  // namespace

void save_clip(const std::string& path, const RawClip& clip) {
    clip.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write(kClipMagic, sizeof kClipMagic);
    put(out, static_cast<std::uint32_t>(clip.n_channels()));
    put(out, static_cast<std::uint32_t>(clip.n_samples()));
    put(out, static_cast<float>(clip.sample_rate_hz));
    put(out, static_cast<std::uint8_t>(clip.label));
    for (const auto& ch : clip.channels) {
        out.write(reinterpret_cast<const char*>(ch.data()),
                  static_cast<std::streamsize>(ch.size() * sizeof(float)));
    }
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

RawClip load_clip(const std::string& path, const std::string& clip_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    char magic[4];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kClipMagic, sizeof magic) != 0) {
        throw FormatError("clip " + path + ": bad magic");
    }
    const auto n_channels = get<std::uint32_t>(in, path);
    const auto n_samples = get<std::uint32_t>(in, path);
    const auto rate = get<float>(in, path);
    const auto label = get<std::uint8_t>(in, path);
    if (label > 1) {
        throw FormatError("clip " + path + ": label must be 0 or 1");
    }
    RawClip clip;
    clip.clip_id = clip_id;
    clip.label = static_cast<ClipLabel>(label);
    clip.sample_rate_hz = rate;
    clip.channels.assign(n_channels, std::vector<float>(n_samples));
    for (auto& ch : clip.channels) {
        if (!in.read(reinterpret_cast<char*>(ch.data()),
                     static_cast<std::streamsize>(ch.size() * sizeof(float)))) {
            throw FormatError("clip " + path + ": truncated samples");
        }
    }
    clip.validate();
    return clip;
}

}  // namespace sdcn
