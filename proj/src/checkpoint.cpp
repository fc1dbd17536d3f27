#include <cstring>
#include <fstream>
#include <sstream>

#include "sdcn/model.hpp"

namespace sdcn {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'D', 'C', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const SdcnModel& model, const std::string& path) {
    const std::string config = nlohmann::json(model.config()).dump();
    std::ostringstream body(std::ios::binary);
    body.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = kCheckpointVersion;
    const auto length = static_cast<std::uint32_t>(config.size());
    body.write(reinterpret_cast<const char*>(&version), sizeof version);
    body.write(reinterpret_cast<const char*>(&length), sizeof length);
    body.write(config.data(), static_cast<std::streamsize>(config.size()));
    model.params().visit([&body](const std::string&, const Shape4& shape, std::span<const float> data) {
        write_sgt(body, Tensor4(shape, std::vector<float>(data.begin(), data.end())));
    });

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    const std::string bytes = body.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

SdcnModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    char magic[4];
    std::uint32_t version = 0;
    std::uint32_t length = 0;
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw FormatError("checkpoint " + path + ": bad magic");
    }
    if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || version != kCheckpointVersion) {
        throw FormatError("checkpoint " + path + ": unsupported version");
    }
    if (!in.read(reinterpret_cast<char*>(&length), sizeof length)) {
        throw FormatError("checkpoint " + path + ": truncated header");
    }
    std::string config_text(length, '\0');
    if (!in.read(config_text.data(), length)) {
        throw FormatError("checkpoint " + path + ": truncated config");
    }
    SdcnConfig config;
    try {
        config = nlohmann::json::parse(config_text).get<SdcnConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint " + path + ": bad config block: " + e.what());
    }

    SdcnParams params = SdcnParams::zeros(config);
    params.visit([&](const std::string& name, const Shape4& shape, std::span<float> data) {
        Tensor4 t = read_sgt(in);
        if (t.shape() != shape) {
            throw FormatError("checkpoint " + path + ": tensor " + name + " has dims " +
                              t.shape().str() + ", expected " + shape.str());
        }
        std::copy(t.span().begin(), t.span().end(), data.begin());
    });
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("checkpoint " + path + ": trailing bytes");
    }
    return SdcnModel(std::move(config), std::move(params));
}

}  // namespace sdcn
