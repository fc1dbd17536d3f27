#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdcn/error.hpp"

namespace sdcn {

struct BceResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d prob
};

/// Mean binary cross-entropy. Probabilities are clamped to [1e-7, 1 - 1e-7] first.
BceResult bce_loss(std::span<const double> probs, std::span<const int> labels);

/// Clip probability from its segment probabilities: the maximum.
double aggregate_clip(std::span<const double> segment_probs);

/// Area under the ROC curve as the Mann-Whitney statistic, ties counting one half.
/// Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct ClipScore {
    std::string clip_id;
    int label = 0;
    std::vector<double> segment_probs;
    double clip_prob = 0.0;
};

ClipScore make_clip_score(std::string clip_id, int label, std::vector<double> segment_probs);

/// Fraction of label-1 clips with clip_prob >= threshold.
double sensitivity(std::span<const ClipScore> clips, double threshold = 0.5);

}  // namespace sdcn
