#include "sdcn/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "sdcn/error.hpp"

namespace sdcn {

void TrainConfig::validate() const {
    adam().validate();
    if (batch_size == 0) {
        throw ConfigError("train: batch_size must be positive");
    }
    if (epochs == 0) {
        throw ConfigError("train: epochs must be positive");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train: train_fraction must lie in (0, 1)");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ConfigError("train: threshold must lie in [0, 1]");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"epsilon", c.epsilon},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"seed", c.seed},
                       {"train_fraction", c.train_fraction},
                       {"patience", c.patience},
                       {"threshold", c.threshold}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.patience = j.value("patience", c.patience);
    c.threshold = j.value("threshold", c.threshold);
}

void to_json(nlohmann::json& j, const EpochMetrics& m) {
    j = nlohmann::json{{"epoch", m.epoch},         {"train_loss", m.train_loss},
                       {"val_loss", m.val_loss},   {"seg_auc", m.seg_auc},
                       {"clip_auc", m.clip_auc},   {"sens", m.sens}};
}

Tensor4 SegmentDataset::batch(std::span<const std::size_t> index) const {
    if (index.empty()) {
        throw ShapeError("batch: no rows selected");
    }
    const Shape4 one = inputs.at(index[0]).shape();
    Tensor4 out(one.b * index.size(), one.c, one.h, one.w);
    const std::size_t stride = one.count();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const Tensor4& src = inputs.at(index[i]);
        if (src.shape() != one) {
            throw ShapeError("batch: mixed segment shapes " + src.shape().str() + " and " + one.str());
        }
        std::copy(src.span().begin(), src.span().end(), out.span().begin() + i * stride);
    }
    return out;
}

SegmentDataset load_segments(const std::vector<SegmentRecord>& records,
                             const std::filesystem::path& base_dir, const SdcnConfig& cfg) {
    SegmentDataset data;
    data.inputs.reserve(records.size());
    for (const auto& r : records) {
        Tensor4 t = load_sgt((base_dir / r.sgt_path).string());
        const Shape4 s = t.shape();
        if (s.b != 1 || s.c != cfg.input_channels || s.w != cfg.input_w || s.h > cfg.input_h ||
            (cfg.input_h - s.h) % 2 != 0) {
            throw ShapeError(r.sgt_path + ": shape " + s.str() + " does not fit model input " +
                             Shape4{1, cfg.input_channels, cfg.input_h, cfg.input_w}.str());
        }
        if (s.h < cfg.input_h) {
            t = pad2d(t, (cfg.input_h - s.h) / 2, 0);
        }
        data.inputs.push_back(std::move(t));
        data.labels.push_back(r.label);
        data.clip_ids.push_back(r.clip_id);
        data.segment_index.push_back(r.segment_index);
    }
    return data;
}

ClipSplit split_by_clip(const std::vector<SegmentRecord>& records, double train_fraction,
                        std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split_by_clip: fraction must lie in (0, 1)");
    }
    // Clips per class in first-appearance order.
    std::array<std::vector<std::string>, 2> clips;
    std::map<std::string, int> label_of;
    for (const auto& r : records) {
        auto [it, inserted] = label_of.emplace(r.clip_id, r.label);
        if (inserted) {
            clips.at(static_cast<std::size_t>(r.label)).push_back(r.clip_id);
        } else if (it->second != r.label) {
            throw FormatError("clip " + r.clip_id + " has segments with different labels");
        }
    }
    std::mt19937_64 rng(seed);
    std::map<std::string, bool> in_train;
    for (std::size_t label = 0; label < 2; ++label) {
        auto& ids = clips[label];
        if (ids.size() < 2) {
            throw ConfigError("split_by_clip: class " + std::to_string(label) +
                              " needs at least two clips, has " + std::to_string(ids.size()));
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            in_train[ids[i]] = i < n_train;
        }
    }
    ClipSplit split;
    for (const auto& r : records) {
        (in_train.at(r.clip_id) ? split.train : split.validation).push_back(r);
    }
    return split;
}

EvalResult evaluate(const SdcnModel& model, const SegmentDataset& data, double threshold,
                    std::size_t batch_size) {
    if (data.size() == 0) {
        throw ShapeError("evaluate: empty dataset");
    }
    if (batch_size == 0) {
        throw ConfigError("evaluate: batch_size must be positive");
    }
    EvalResult r;
    r.segment_probs.reserve(data.size());
    std::vector<std::size_t> index;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t stop = std::min(data.size(), start + batch_size);
        index.resize(stop - start);
        std::iota(index.begin(), index.end(), start);
        const auto probs = model_forward(data.batch(index), model);
        r.segment_probs.insert(r.segment_probs.end(), probs.begin(), probs.end());
    }
    r.loss = bce_loss(r.segment_probs, data.labels).loss;
    r.seg_auc = auc(r.segment_probs, data.labels);

    std::map<std::string, std::size_t> slot;
    std::vector<std::vector<double>> per_clip;
    std::vector<std::pair<std::string, int>> meta;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto [it, inserted] = slot.emplace(data.clip_ids[i], per_clip.size());
        if (inserted) {
            per_clip.emplace_back();
            meta.emplace_back(data.clip_ids[i], data.labels[i]);
        }
        per_clip[it->second].push_back(r.segment_probs[i]);
    }
    std::vector<double> clip_probs;
    std::vector<int> clip_labels;
    for (std::size_t c = 0; c < per_clip.size(); ++c) {
        r.clips.push_back(make_clip_score(meta[c].first, meta[c].second, std::move(per_clip[c])));
        clip_probs.push_back(r.clips.back().clip_prob);
        clip_labels.push_back(meta[c].second);
    }
    r.clip_auc = auc(clip_probs, clip_labels);
    r.sens = sensitivity(r.clips, threshold);
    return r;
}

TrainResult train_loop(const SegmentDataset& train, const SegmentDataset& validation,
                       const SdcnConfig& model_cfg, const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    model_cfg.validate();
    if (train.size() == 0 || validation.size() == 0) {
        throw ConfigError("train_loop: empty training or validation split");
    }
    for (const auto* d : {&train, &validation}) {
        const auto pos = std::count(d->labels.begin(), d->labels.end(), 1);
        if (pos == 0 || static_cast<std::size_t>(pos) == d->size()) {
            throw MetricError("train_loop: a split contains only one class");
        }
    }

    SdcnModel model = init_model(model_cfg, model_cfg.seed);
    AdamState adam;
    const AdamConfig adam_cfg = cfg.adam();
    std::mt19937_64 rng(cfg.seed);

    TrainResult result;
    result.best = model;
    double best_auc = -1.0;
    double best_loss = 0.0;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> batch_labels;
    ForwardCache cache;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> index(order.data() + start, stop - start);
            batch_labels.clear();
            for (std::size_t i : index) {
                batch_labels.push_back(train.labels[i]);
            }
            const auto probs = model_forward(train.batch(index), model, &cache);
            const BceResult bce = bce_loss(probs, batch_labels);
            loss_sum += bce.loss * static_cast<double>(index.size());
            // Gradient of the unclamped mean BCE with respect to each logit, (p - y) / n. Going
            // through the clamped probability gradient would vanish once a logit saturates.
            std::vector<double> grad_logits(index.size());
            for (std::size_t b = 0; b < index.size(); ++b) {
                grad_logits[b] = (cache.probs[b] - batch_labels[b]) / static_cast<double>(index.size());
            }
            const SdcnParams grads = model_backward_logits(model, cache, grad_logits);
            adam_step(model, grads, adam, adam_cfg);
        }

        const EvalResult eval = evaluate(model, validation, cfg.threshold, cfg.batch_size);
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(train.size());
        m.val_loss = eval.loss;
        m.seg_auc = eval.seg_auc;
        m.clip_auc = eval.clip_auc;
        m.sens = eval.sens;
        result.history.push_back(m);
        if (log != nullptr) {
            *log << nlohmann::json(m).dump() << '\n' << std::flush;
        }

        // Patience counts epochs without a strict clip-AUC gain; a lower validation loss at
        // equal AUC updates the checkpoint but does not extend the run.
        const bool auc_gain = m.clip_auc > best_auc;
        if (auc_gain || (m.clip_auc == best_auc && m.val_loss < best_loss)) {
            best_auc = m.clip_auc;
            best_loss = m.val_loss;
            result.best = model;
            result.best_epoch = epoch;
        }
        since_best = auc_gain ? 0 : since_best + 1;
        if (cfg.patience > 0 && since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

}  // namespace sdcn
