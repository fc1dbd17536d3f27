#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sdcn {

/// One preprocessed segment. sgt_path is relative to the manifest's directory.
struct SegmentRecord {
    std::string clip_id;
    std::size_t segment_index = 0;
    int label = 0;
    std::string sgt_path;
    std::vector<double> freqs;

    bool operator==(const SegmentRecord&) const = default;
};

/// JSON-lines: {clip_id, segment_index, label, sgt_path, freqs}.
void write_manifest(const std::filesystem::path& path, const std::vector<SegmentRecord>& records);
std::vector<SegmentRecord> read_manifest(const std::filesystem::path& path);

}  // namespace sdcn
