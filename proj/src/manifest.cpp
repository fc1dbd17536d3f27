#include "sdcn/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "sdcn/error.hpp"

namespace sdcn {

void write_manifest(const std::filesystem::path& path, const std::vector<SegmentRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const auto& r : records) {
        nlohmann::json j{{"clip_id", r.clip_id},
                         {"segment_index", r.segment_index},
                         {"label", r.label},
                         {"sgt_path", r.sgt_path}};
        if (!r.freqs.empty()) {
            j["freqs"] = r.freqs;
        }
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<SegmentRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest: " + path.string());
    }
    std::vector<SegmentRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            SegmentRecord r;
            r.clip_id = j.at("clip_id").get<std::string>();
            r.segment_index = j.at("segment_index").get<std::size_t>();
            r.label = j.at("label").get<int>();
            r.sgt_path = j.at("sgt_path").get<std::string>();
            if (j.contains("freqs")) {
                r.freqs = j.at("freqs").get<std::vector<double>>();
            }
            if (r.label != 0 && r.label != 1) {
                throw FormatError("label must be 0 or 1");
            }
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace sdcn
