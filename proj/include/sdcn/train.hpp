#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcn/adam.hpp"
#include "sdcn/manifest.hpp"
#include "sdcn/metrics.hpp"
#include "sdcn/model.hpp"

namespace sdcn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 16;
    std::size_t epochs = 20;
    std::uint64_t seed = 1;
    double train_fraction = 0.8;  // by clip
    std::size_t patience = 0;     // epochs without a clip-AUC gain before stopping; 0 = never
    double threshold = 0.5;       // sensitivity operating point

    void validate() const;
    AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Segments held in memory, each (1, C, H, W), in manifest order.
struct SegmentDataset {
    std::vector<Tensor4> inputs;
    std::vector<int> labels;
    std::vector<std::string> clip_ids;
    std::vector<std::size_t> segment_index;

    std::size_t size() const { return inputs.size(); }
    /// Rows of the batch in index order, stacked along the batch axis.
    Tensor4 batch(std::span<const std::size_t> index) const;
};

/// Loads every record's .sgt (paths relative to base_dir). Scalograms with fewer rows than
/// cfg.input_h are zero-padded symmetrically; any other shape mismatch is a ShapeError.
SegmentDataset load_segments(const std::vector<SegmentRecord>& records,
                             const std::filesystem::path& base_dir, const SdcnConfig& cfg);

struct ClipSplit {
    std::vector<SegmentRecord> train;
    std::vector<SegmentRecord> validation;
};

/// Stratified split by clip: round(fraction * n) clips of each class go to training, drawn
/// with a seeded shuffle. Every class keeps at least one clip on each side.
/// Throws ConfigError when a class has fewer than two clips.
ClipSplit split_by_clip(const std::vector<SegmentRecord>& records, double train_fraction,
                        std::uint64_t seed);

struct EvalResult {
    double loss = 0.0;
    double seg_auc = 0.0;
    double clip_auc = 0.0;
    double sens = 0.0;
    std::vector<double> segment_probs;  // dataset order
    std::vector<ClipScore> clips;       // first-appearance order
};

/// Forward pass over the whole dataset. Results do not depend on batch_size.
EvalResult evaluate(const SdcnModel& model, const SegmentDataset& data, double threshold,
                    std::size_t batch_size = 16);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seg_auc = 0.0;
    double clip_auc = 0.0;
    double sens = 0.0;
};

void to_json(nlohmann::json& j, const EpochMetrics& m);

struct TrainResult {
    SdcnModel best;
    std::size_t best_epoch = 0;
    std::vector<EpochMetrics> history;
};

/// Adam on shuffled segment mini-batches. After each epoch the validation set is scored;
/// the model with the highest clip AUC (ties: lower validation loss) is kept.
/// Each epoch's metrics are written to `log` as one JSON line, if given.
TrainResult train_loop(const SegmentDataset& train, const SegmentDataset& validation,
                       const SdcnConfig& model_cfg, const TrainConfig& cfg,
                       std::ostream* log = nullptr);

}  // namespace sdcn
