#include "sdcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace sdcn {

namespace {
constexpr double kProbClamp = 1e-7;
}

BceResult bce_loss(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size()) {
        throw ShapeError("bce_loss: " + std::to_string(probs.size()) + " probabilities for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (probs.empty()) {
        throw ShapeError("bce_loss: empty batch");
    }
    const double n = static_cast<double>(probs.size());
    BceResult r;
    r.grad.resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
        const double y = labels[i];
        r.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        r.grad[i] = (p - y) / (p * (1.0 - p)) / n;
    }
    r.loss /= n;
    return r;
}

double aggregate_clip(std::span<const double> segment_probs) {
    if (segment_probs.empty()) {
        throw MetricError("aggregate_clip: no segment probabilities");
    }
    return *std::max_element(segment_probs.begin(), segment_probs.end());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("auc: scores and labels differ in length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Doubled mid-ranks keep the statistic in exact integer arithmetic.
    std::uint64_t positives = 0;
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const std::uint64_t twice_mid_rank = i + 1 + j;  // 2 * mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) {
                ++positives;
                twice_rank_sum += twice_mid_rank;
            }
        }
        i = j;
    }
    const std::uint64_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw MetricError("auc: undefined with a single class present");
    }
    // 2U = 2R+ - n+(n+ + 1)
    const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
    return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

ClipScore make_clip_score(std::string clip_id, int label, std::vector<double> segment_probs) {
    ClipScore s{std::move(clip_id), label, std::move(segment_probs), 0.0};
    s.clip_prob = aggregate_clip(s.segment_probs);
    return s;
}

double sensitivity(std::span<const ClipScore> clips, double threshold) {
    std::size_t positives = 0;
    std::size_t hits = 0;
    for (const auto& c : clips) {
        if (c.label == 1) {
            ++positives;
            if (c.clip_prob >= threshold) {
                ++hits;
            }
        }
    }
    if (positives == 0) {
        throw MetricError("sensitivity: no positive clips");
    }
    return static_cast<double>(hits) / static_cast<double>(positives);
}

}  // namespace sdcn
