#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sdcn/adam.hpp"
#include "sdcn/error.hpp"
#include "sdcn/manifest.hpp"
#include "sdcn/metrics.hpp"
#include "sdcn/synth.hpp"
#include "sdcn/train.hpp"

using namespace sdcn;
namespace fs = std::filesystem;

namespace {

const CwtConfig kTinyCwt{16, 2.0, 150.0, 6.0, 750};  // 30 s at 400 Hz -> 16 x 16

SynthConfig tiny_synth(std::size_t per_class, double gain, std::uint64_t seed) {
    SynthConfig s;
    s.n_clips_per_class = per_class;
    s.clip_seconds = 60.0;
    s.n_channels = 2;
    s.gain = gain;
    s.seed = seed;
    return s;
}

// Synthesizes, segments and transforms clips with the tiny CWT into dir; returns the records.
std::vector<SegmentRecord> build_tiny(const fs::path& dir, const SynthConfig& sc) {
    std::vector<SegmentRecord> records;
    for (const auto& clip : gen_synthetic_dataset(sc)) {
        const auto seg = segment_clip(clip, 30.0);
        for (std::size_t s = 0; s < seg.segments.size(); ++s) {
            const auto sgt = build_scalogram(seg.segments[s], kTinyCwt, s);
            const std::string name = clip.clip_id + "_s" + std::to_string(s) + ".sgt";
            save_sgt((dir / name).string(), sgt.values);
            records.push_back({clip.clip_id, s, static_cast<int>(clip.label), name, sgt.freqs_hz});
        }
    }
    return records;
}

std::string run_log(const SegmentDataset& train, const SegmentDataset& val, const TrainConfig& tc) {
    std::ostringstream log;
    train_loop(train, val, SdcnConfig::tiny(), tc, &log);
    return log.str();
}

}  // namespace

TEST_CASE("bce loss examples and gradient") {
    const std::vector<int> pos{1};
    CHECK(bce_loss(std::vector<double>{0.5}, pos).loss == doctest::Approx(std::log(2.0)));
    CHECK(bce_loss(std::vector<double>{0.0}, pos).loss == doctest::Approx(-std::log(1e-7)));
    CHECK(bce_loss(std::vector<double>{1.0}, pos).loss < 1e-6);
    CHECK_THROWS_AS(bce_loss(std::vector<double>{0.5, 0.5}, pos), ShapeError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<double> p(7);
    std::vector<int> y(7);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u(rng);
        y[i] = static_cast<int>(i % 2);
    }
    const auto r = bce_loss(p, y);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double h = 1e-6;
        auto hi = p;
        auto lo = p;
        hi[i] += h;
        lo[i] -= h;
        const double fd = (bce_loss(hi, y).loss - bce_loss(lo, y).loss) / (2 * h);
        CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    std::vector<float> w{0.5f, -1.0f, 2.0f};
    const auto before = w;
    std::vector<float> g(3, 0.0f);
    std::vector<std::span<float>> ps{w};
    std::vector<std::span<const float>> gs{g};
    AdamState st;
    adam_step(ps, gs, st, {});
    CHECK(w == before);
    CHECK(st.t == 1);
}

TEST_CASE("adam: the first step moves every parameter tensor by about lr against its gradient") {
    const SdcnModel start = init_model(SdcnConfig::tiny(), 5);
    SdcnModel model = start;
    SdcnParams grads = SdcnParams::zeros(model.config());
    std::mt19937_64 rng(6);
    grads.visit([&](const std::string&, const Shape4&, std::span<float> g) {
        for (float& v : g) {
            v = static_cast<float>(oracle::normals(1, rng)[0]);
        }
    });
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    AdamState st;
    adam_step(model, grads, st, cfg);

    std::vector<std::span<const float>> gs;
    std::vector<std::span<const float>> before;
    std::vector<std::string> names;
    grads.visit([&](const std::string& n, const Shape4&, std::span<const float> g) {
        gs.push_back(g);
        names.push_back(n);
    });
    start.params().visit([&](const std::string&, const Shape4&, std::span<const float> p) { before.push_back(p); });
    std::size_t t = 0;
    model.params().visit([&](const std::string&, const Shape4&, std::span<const float> after) {
        double worst = 0.0;
        for (std::size_t i = 0; i < after.size(); ++i) {
            const double step = static_cast<double>(after[i]) - before[t][i];
            const double expected = -cfg.learning_rate * gs[t][i] / (std::abs(gs[t][i]) + cfg.epsilon);
            worst = std::max(worst, std::abs(step - expected));
        }
        INFO(names[t]);
        CHECK(worst < 2e-6);  // float rounding of parameters near 1
        ++t;
    });
    CHECK(t == names.size());
}

TEST_CASE("adam: the first step is invariant to gradient scale") {
    std::mt19937_64 rng(8);
    const auto base = oracle::normals(50, rng);
    const auto g0 = oracle::normals(50, rng);
    std::vector<float> a(base.begin(), base.end());
    std::vector<float> b = a;
    std::vector<float> ga(g0.begin(), g0.end());
    std::vector<float> gb(ga);
    for (float& v : gb) v *= 1000.0f;
    AdamState sa;
    AdamState sb;
    std::vector<std::span<float>> pa{a};
    std::vector<std::span<float>> pb{b};
    std::vector<std::span<const float>> ca{ga};
    std::vector<std::span<const float>> cb{gb};
    adam_step(pa, ca, sa, {});
    adam_step(pb, cb, sb, {});
    CHECK(testing::max_abs_diff(a, b) < 1e-7);
}

TEST_CASE("clip aggregation is the exact maximum and ignores segment order") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(20);
        for (double& v : p) v = u(rng);
        const double m = *std::max_element(p.begin(), p.end());
        CHECK(aggregate_clip(p) == m);
        std::shuffle(p.begin(), p.end(), rng);
        CHECK(aggregate_clip(p) == m);
    }
    CHECK_THROWS_AS(aggregate_clip(std::vector<double>{}), MetricError);
}

TEST_CASE("auc examples") {
    const std::vector<int> y{0, 0, 1, 1};
    CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y) == 0.0);
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y) == 0.75);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
}

TEST_CASE("auc equals brute-force pair counting and is invariant to increasing transforms") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> len(2, 30);
    std::uniform_int_distribution<int> level(0, 6);  // coarse scores force ties
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = len(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = level(rng) / 6.0 + 0.01;
            y[i] = coin(rng) ? 1 : 0;
        }
        y[0] = 0;
        y[1] = 1;
        CHECK(auc(s, y) == oracle::auc_pairs(s, y).value());
        std::vector<double> cubed(s);
        for (double& v : cubed) v = v * v * v;
        CHECK(auc(cubed, y) == auc(s, y));
    }
}

TEST_CASE("sensitivity counts positives at or above the threshold") {
    std::vector<ClipScore> clips{make_clip_score("a", 1, {0.2, 0.6}), make_clip_score("b", 1, {0.5}),
                                 make_clip_score("c", 1, {0.9}), make_clip_score("d", 1, {0.1, 0.4}),
                                 make_clip_score("e", 0, {0.99})};
    CHECK(sensitivity(clips, 0.5) == 0.75);
    CHECK(sensitivity(clips, 0.0) == 1.0);
    CHECK(sensitivity(clips, 0.95) == 0.0);
    clips.resize(0);
    clips.push_back(make_clip_score("n", 0, {0.3}));
    CHECK_THROWS_AS(sensitivity(clips), MetricError);
}

TEST_CASE("synthetic dataset is balanced, ordered and deterministic per seed") {
    SynthConfig sc = tiny_synth(3, 2.0, 11);
    sc.clip_seconds = 2.0;
    const auto a = gen_synthetic_dataset(sc);
    const auto b = gen_synthetic_dataset(sc);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label == (i % 2 == 0 ? ClipLabel::interictal : ClipLabel::preictal));
        CHECK(a[i].clip_id == b[i].clip_id);
        CHECK(a[i].channels == b[i].channels);
        CHECK(a[i].n_channels() == 2);
        CHECK(a[i].n_samples() == 800);
    }
    sc.seed = 12;
    CHECK(gen_synthetic_dataset(sc)[0].channels != a[0].channels);
    sc.gain = 0.5;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("split by clip keeps every clip on one side and both classes on each") {
    std::vector<SegmentRecord> recs;
    for (int c = 0; c < 20; ++c)
        for (std::size_t s = 0; s < 5; ++s)
            recs.push_back({"clip" + std::to_string(c), s, c % 2, "x.sgt", {}});
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto split = split_by_clip(recs, 0.8, seed);
        std::set<std::string> tr;
        std::set<std::string> va;
        for (const auto& r : split.train) tr.insert(r.clip_id);
        for (const auto& r : split.validation) va.insert(r.clip_id);
        for (const auto& id : va) CHECK(tr.count(id) == 0);
        CHECK(tr.size() == 16);
        CHECK(va.size() == 4);
        CHECK(split.train.size() + split.validation.size() == recs.size());
        const auto pos = std::count_if(split.validation.begin(), split.validation.end(),
                                       [](const SegmentRecord& r) { return r.label == 1; });
        CHECK(pos == 10);
    }
    CHECK(split_by_clip(recs, 0.8, 4).train == split_by_clip(recs, 0.8, 4).train);

    std::vector<SegmentRecord> lonely{{"a", 0, 0, "a.sgt", {}}, {"b", 0, 1, "b.sgt", {}}, {"c", 0, 1, "c.sgt", {}}};
    CHECK_THROWS_AS(split_by_clip(lonely, 0.8, 1), ConfigError);
}

TEST_CASE("manifest round-trips and rejects malformed lines") {
    testing::TempDir dir("manifest");
    const std::vector<SegmentRecord> recs{{"synth_interictal_000", 0, 0, "a_s00.sgt", {10.0, 5.0}},
                                          {"synth_preictal_000", 19, 1, "b_s19.sgt", {}}};
    write_manifest(dir.path / "m.jsonl", recs);
    CHECK(read_manifest(dir.path / "m.jsonl") == recs);

    std::ofstream(dir.path / "bad.jsonl") << "{\"clip_id\":\"a\",\"segment_index\":0,\"label\":2,\"sgt_path\":\"a\"}\n";
    CHECK_THROWS_AS(read_manifest(dir.path / "bad.jsonl"), FormatError);
    std::ofstream(dir.path / "junk.jsonl") << "not json\n";
    CHECK_THROWS_AS(read_manifest(dir.path / "junk.jsonl"), FormatError);
    CHECK_THROWS_AS(read_manifest(dir.path / "missing.jsonl"), IoError);
}

TEST_CASE("load_segments pads short scalograms and rejects other mismatches") {
    testing::TempDir dir("load");
    std::mt19937_64 rng(13);
    save_sgt((dir.path / "short.sgt").string(), testing::random_tensor<float>({1, 2, 12, 16}, rng));
    save_sgt((dir.path / "wide.sgt").string(), testing::random_tensor<float>({1, 2, 16, 20}, rng));
    const auto data = load_segments({{"a", 0, 1, "short.sgt", {}}}, dir.path, SdcnConfig::tiny());
    REQUIRE(data.inputs[0].shape() == Shape4{1, 2, 16, 16});
    CHECK(data.inputs[0](0, 1, 0, 3) == 0.0f);
    CHECK(data.inputs[0](0, 1, 1, 3) == 0.0f);
    CHECK(data.inputs[0](0, 1, 14, 3) == 0.0f);
    CHECK(data.labels == std::vector<int>{1});
    CHECK_THROWS_AS(load_segments({{"b", 0, 0, "wide.sgt", {}}}, dir.path, SdcnConfig::tiny()), ShapeError);
}

TEST_CASE("evaluation does not depend on batch size") {
    testing::TempDir dir("eval");
    const auto recs = build_tiny(dir.path, tiny_synth(2, 2.0, 14));
    const auto data = load_segments(recs, dir.path, SdcnConfig::tiny());
    const SdcnModel model = init_model(SdcnConfig::tiny(), 2);
    const auto a = evaluate(model, data, 0.5, 1);
    const auto b = evaluate(model, data, 0.5, 3);
    const auto c = evaluate(model, data, 0.5, 64);
    CHECK(a.segment_probs == b.segment_probs);
    CHECK(a.segment_probs == c.segment_probs);
    CHECK(a.clip_auc == c.clip_auc);
    REQUIRE(a.clips.size() == 4);
    CHECK(a.clips[0].clip_prob == aggregate_clip(a.clips[0].segment_probs));
}

TEST_CASE("one epoch on two tiny clips gives a finite loss and emits metrics") {
    testing::TempDir dir("smoke");
    SynthConfig sc = tiny_synth(1, 2.0, 15);
    sc.clip_seconds = 30.0;
    const auto recs = build_tiny(dir.path, sc);
    const auto data = load_segments(recs, dir.path, SdcnConfig::tiny());
    TrainConfig tc;
    tc.epochs = 1;
    std::ostringstream log;
    const auto result = train_loop(data, data, SdcnConfig::tiny(), tc, &log);
    REQUIRE(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].train_loss));
    const auto line = nlohmann::json::parse(log.str());
    for (const char* key : {"epoch", "train_loss", "seg_auc", "clip_auc", "sens"}) {
        CHECK(line.contains(key));
    }
    CHECK(result.best_epoch == 1);
}

TEST_CASE("train_loop rejects empty and single-class splits") {
    testing::TempDir dir("reject");
    SynthConfig sc = tiny_synth(1, 2.0, 16);
    sc.clip_seconds = 30.0;
    const auto data = load_segments(build_tiny(dir.path, sc), dir.path, SdcnConfig::tiny());
    SegmentDataset one_class;
    one_class.inputs = {data.inputs[0]};
    one_class.labels = {data.labels[0]};
    one_class.clip_ids = {data.clip_ids[0]};
    one_class.segment_index = {0};
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train_loop(data, SegmentDataset{}, SdcnConfig::tiny(), tc), ConfigError);
    CHECK_THROWS_AS(train_loop(data, one_class, SdcnConfig::tiny(), tc), MetricError);
}

TEST_CASE("training is reproducible and the loss falls on separable data") {
    testing::TempDir dir("learn");
    const auto recs = build_tiny(dir.path, tiny_synth(8, 4.0, 17));
    const auto split = split_by_clip(recs, 0.75, 1);
    const auto train = load_segments(split.train, dir.path, SdcnConfig::tiny());
    const auto val = load_segments(split.validation, dir.path, SdcnConfig::tiny());
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;

    const std::string first = run_log(train, val, tc);
    CHECK(first == run_log(train, val, tc));

    std::vector<double> losses;
    std::istringstream in(first);
    for (std::string line; std::getline(in, line);) {
        losses.push_back(nlohmann::json::parse(line).at("train_loss").get<double>());
    }
    REQUIRE(losses.size() == 3);
    for (std::size_t e = 1; e < losses.size(); ++e) {
        INFO("epoch " << e + 1 << ": " << losses[e] << " after " << losses[e - 1]);
        CHECK(losses[e] <= 1.05 * losses[e - 1]);
    }
    CHECK(losses.back() < losses.front());
}
