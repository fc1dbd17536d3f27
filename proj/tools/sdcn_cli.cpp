// sdcn: synthetic data, scalogram preprocessing, training, evaluation and self-checks.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdcn/checks.hpp"
#include "sdcn/error.hpp"
#include "sdcn/manifest.hpp"
#include "sdcn/model.hpp"
#include "sdcn/synth.hpp"
#include "sdcn/train.hpp"
#include "sdcn/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Preset {
    sdcn::CwtConfig cwt;
    double segment_seconds = 30.0;
    sdcn::SdcnConfig model;
};

// Scalogram settings are chosen so H and W match the model input of the same name.
Preset make_preset(const std::string& name) {
    Preset p;
    if (name == "desk") {
        p.cwt = {64, 0.5, 150.0, 6.0, 47};  // 12000 samples / 47 -> 256 columns
        p.model = sdcn::SdcnConfig::desk();
    } else if (name == "paper") {
        p.cwt = {100, 0.5, 50.0, 6.0, 2};  // 100 rows, zero-padded to 104 on load
        p.model = sdcn::SdcnConfig::paper();
    } else if (name == "tiny") {
        p.cwt = {16, 2.0, 150.0, 6.0, 750};
        p.model = sdcn::SdcnConfig::tiny();
    } else {
        throw sdcn::ConfigError("unknown preset '" + name + "' (desk, paper, tiny)");
    }
    return p;
}

struct RunConfig {
    std::string preset = "desk";
    fs::path out = ".";
    Preset p = make_preset("desk");
    sdcn::SynthConfig synth;
    sdcn::TrainConfig train;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw sdcn::IoError("cannot open config file: " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw sdcn::FormatError(path.string() + ": " + e.what());
    }
}

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> preset;
};

// defaults < preset < config file < flags
RunConfig resolve(const GlobalFlags& g) {
    json file = g.config.empty() ? json::object() : read_json_file(g.config);
    RunConfig rc;
    rc.preset = g.preset.value_or(file.value("preset", std::string("desk")));
    rc.p = make_preset(rc.preset);
    try {
        if (file.contains("cwt")) file["cwt"].get_to(rc.p.cwt);
        if (file.contains("model")) file["model"].get_to(rc.p.model);
        if (file.contains("synth")) file["synth"].get_to(rc.synth);
        if (file.contains("train")) file["train"].get_to(rc.train);
        rc.p.segment_seconds = file.value("segment_seconds", rc.p.segment_seconds);
        if (file.contains("out")) rc.out = file["out"].get<std::string>();
        if (file.contains("seed")) {
            const auto s = file["seed"].get<std::uint64_t>();
            rc.synth.seed = rc.train.seed = rc.p.model.seed = s;
        }
    } catch (const json::exception& e) {
        throw sdcn::ConfigError("config file: " + std::string(e.what()));
    }
    if (g.seed) {
        rc.synth.seed = rc.train.seed = rc.p.model.seed = *g.seed;
    }
    if (g.out) {
        rc.out = *g.out;
    }
    return rc;
}

template <typename T>
void apply(const std::optional<T>& flag, T& field) {
    if (flag) {
        field = *flag;
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw sdcn::IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------

struct SynthFlags {
    std::optional<std::size_t> clips;
    std::optional<double> clip_seconds, sample_rate, gain, noise, band_hz;
    std::optional<std::size_t> channels;
};

int cmd_synth(const GlobalFlags& g, const SynthFlags& f) {
    RunConfig rc = resolve(g);
    apply(f.clips, rc.synth.n_clips_per_class);
    apply(f.clip_seconds, rc.synth.clip_seconds);
    apply(f.sample_rate, rc.synth.sample_rate_hz);
    apply(f.channels, rc.synth.n_channels);
    apply(f.gain, rc.synth.gain);
    apply(f.noise, rc.synth.noise_level);
    apply(f.band_hz, rc.synth.band_hz);
    rc.synth.validate();

    const auto clips = sdcn::gen_synthetic_dataset(rc.synth);
    ensure_dir(rc.out);
    std::ofstream index(rc.out / "clips.jsonl", std::ios::trunc);
    std::size_t counts[2] = {0, 0};
    for (const auto& clip : clips) {
        const std::string file = clip.clip_id + ".clip";
        sdcn::save_clip((rc.out / file).string(), clip);
        const int label = static_cast<int>(clip.label);
        ++counts[label];
        index << json{{"clip_id", clip.clip_id}, {"label", label}, {"path", file}}.dump() << '\n';
    }
    if (!index) {
        throw sdcn::IoError("cannot write " + (rc.out / "clips.jsonl").string());
    }
    std::cout << json{{"interictal", counts[0]}, {"preictal", counts[1]}, {"out", rc.out.string()}}.dump()
              << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct PreprocessFlags {
    std::string input;
    std::optional<double> segment_seconds, f_min, f_max, omega0;
    std::optional<std::size_t> n_freqs, decimation;
};

int cmd_preprocess(const GlobalFlags& g, const PreprocessFlags& f) {
    RunConfig rc = resolve(g);
    apply(f.segment_seconds, rc.p.segment_seconds);
    apply(f.n_freqs, rc.p.cwt.n_freqs);
    apply(f.f_min, rc.p.cwt.f_min_hz);
    apply(f.f_max, rc.p.cwt.f_max_hz);
    apply(f.omega0, rc.p.cwt.morlet_omega0);
    apply(f.decimation, rc.p.cwt.time_decimation);

    std::vector<fs::path> files;
    if (!fs::is_directory(f.input)) {
        throw sdcn::IoError("input directory does not exist: " + f.input);
    }
    for (const auto& entry : fs::directory_iterator(f.input)) {
        if (entry.is_regular_file() && entry.path().extension() == ".clip") {
            files.push_back(entry.path());
        }
    }
    if (files.empty()) {
        throw sdcn::IoError("no .clip files in " + f.input);
    }
    std::sort(files.begin(), files.end());

    ensure_dir(rc.out);
    std::vector<sdcn::SegmentRecord> records;
    std::size_t dropped = 0;
    for (const auto& path : files) {
        const sdcn::RawClip clip = sdcn::load_clip(path.string(), path.stem().string());
        const auto seg = sdcn::segment_clip(clip, rc.p.segment_seconds);
        if (seg.dropped_samples > 0) {
            std::cerr << "warning: " << clip.clip_id << ": dropped " << seg.dropped_samples
                      << " trailing samples\n";
            dropped += seg.dropped_samples;
        }
        for (std::size_t s = 0; s < seg.segments.size(); ++s) {
            const auto sc = sdcn::build_scalogram(seg.segments[s], rc.p.cwt, s);
            char name[32];
            std::snprintf(name, sizeof name, "_s%02zu.sgt", s);
            const std::string file = clip.clip_id + name;
            sdcn::save_sgt((rc.out / file).string(), sc.values);
            records.push_back({clip.clip_id, s, static_cast<int>(clip.label), file, sc.freqs_hz});
        }
    }
    sdcn::write_manifest(rc.out / "manifest.jsonl", records);
    std::cout << json{{"clips", files.size()}, {"segments", records.size()},
                      {"dropped_samples", dropped}, {"cwt", rc.p.cwt},
                      {"segment_seconds", rc.p.segment_seconds}}.dump()
              << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string manifest;
    std::optional<double> lr, train_fraction, threshold;
    std::optional<std::size_t> batch_size, epochs, patience;
};

std::vector<sdcn::SegmentRecord> rebase(std::vector<sdcn::SegmentRecord> records,
                                        const fs::path& from, const fs::path& to) {
    for (auto& r : records) {
        r.sgt_path = fs::relative(fs::absolute(from / r.sgt_path), fs::absolute(to)).generic_string();
    }
    return records;
}

int cmd_train(const GlobalFlags& g, const TrainFlags& f) {
    RunConfig rc = resolve(g);
    apply(f.lr, rc.train.learning_rate);
    apply(f.train_fraction, rc.train.train_fraction);
    apply(f.threshold, rc.train.threshold);
    apply(f.batch_size, rc.train.batch_size);
    apply(f.epochs, rc.train.epochs);
    apply(f.patience, rc.train.patience);
    rc.train.validate();
    rc.p.model.validate();

    const fs::path manifest(f.manifest);
    const fs::path base = manifest.parent_path();
    const auto records = sdcn::read_manifest(manifest);
    const auto split = sdcn::split_by_clip(records, rc.train.train_fraction, rc.train.seed);
    const auto train = sdcn::load_segments(split.train, base, rc.p.model);
    const auto val = sdcn::load_segments(split.validation, base, rc.p.model);

    ensure_dir(rc.out);
    sdcn::write_manifest(rc.out / "train_manifest.jsonl", rebase(split.train, base, rc.out));
    sdcn::write_manifest(rc.out / "val_manifest.jsonl", rebase(split.validation, base, rc.out));

    std::ofstream log(rc.out / "metrics.jsonl", std::ios::trunc);
    if (!log) {
        throw sdcn::IoError("cannot write metrics log in " + rc.out.string());
    }
    log << json{{"config", {{"preset", rc.preset},
                            {"manifest", manifest.generic_string()},
                            {"model", rc.p.model},
                            {"train", rc.train},
                            {"train_segments", train.size()},
                            {"val_segments", val.size()}}}}
               .dump()
        << '\n';

    const auto result = sdcn::train_loop(train, val, rc.p.model, rc.train, &log);
    sdcn::save_checkpoint(result.best, (rc.out / "checkpoint.sdcn").string());
    const auto& best = result.history.at(result.best_epoch - 1);
    json summary = best;
    summary["best_epoch"] = result.best_epoch;
    summary["epochs_run"] = result.history.size();
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalFlags {
    std::string checkpoint;
    std::string manifest;
    std::optional<double> threshold;
    std::optional<std::size_t> batch_size;
};

int cmd_eval(const GlobalFlags& g, const EvalFlags& f) {
    RunConfig rc = resolve(g);
    apply(f.threshold, rc.train.threshold);
    apply(f.batch_size, rc.train.batch_size);
    if (!fs::is_regular_file(f.checkpoint)) {
        throw sdcn::IoError("checkpoint not found: " + f.checkpoint);
    }
    const sdcn::SdcnModel model = sdcn::load_checkpoint(f.checkpoint);
    const fs::path manifest(f.manifest);
    const auto data = sdcn::load_segments(sdcn::read_manifest(manifest), manifest.parent_path(),
                                          model.config());
    const auto r = sdcn::evaluate(model, data, rc.train.threshold, rc.train.batch_size);
    for (const auto& c : r.clips) {
        std::cout << json{{"clip_id", c.clip_id},
                          {"label", c.label},
                          {"clip_prob", c.clip_prob},
                          {"segment_probs", c.segment_probs}}
                         .dump()
                  << '\n';
    }
    std::cout << json{{"seg_auc", r.seg_auc}, {"clip_auc", r.clip_auc}, {"sens", r.sens},
                      {"val_loss", r.loss}, {"threshold", rc.train.threshold},
                      {"segments", data.size()}, {"clips", r.clips.size()}}
                     .dump()
              << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const GlobalFlags& g) {
    const auto reports = sdcn::run_all_checks(g.seed.value_or(1));
    bool ok = true;
    for (const auto& r : reports) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases): " << r.detail
                  << '\n';
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

sdcn::DilationVector parse_dilation(const std::string& text) {
    const auto comma = text.find(',');
    std::size_t used_h = 0, used_w = 0;
    try {
        if (comma == std::string::npos) {
            throw std::invalid_argument(text);
        }
        const std::string hs = text.substr(0, comma);
        const std::string ws = text.substr(comma + 1);
        const long h = std::stol(hs, &used_h);
        const long w = std::stol(ws, &used_w);
        if (used_h != hs.size() || used_w != ws.size() || h < 1 || w < 1) {
            throw std::invalid_argument(text);
        }
        return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    } catch (const std::logic_error&) {
        throw sdcn::ConfigError("dilation must be 'd_h,d_w' with positive integers, got '" + text + "'");
    }
}

int cmd_rf(std::size_t k, const std::vector<std::string>& dilations) {
    for (const auto& d : dilations) {
        const auto rf = sdcn::receptive_field(k, parse_dilation(d));
        std::cout << rf.h << 'x' << rf.w << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-dilated convolutional network toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config, "JSON config file (flags take precedence)");
    app.add_option("--seed", g.seed, "Seed for data generation, initialization and shuffling");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--preset", g.preset, "Scale preset: desk, paper or tiny");

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "Generate a balanced synthetic clip dataset");
    synth->add_option("--clips", sf.clips, "Clips per class");
    synth->add_option("--clip-seconds", sf.clip_seconds);
    synth->add_option("--sample-rate", sf.sample_rate);
    synth->add_option("--channels", sf.channels);
    synth->add_option("--gain", sf.gain, "Preictal low-band amplitude gain");
    synth->add_option("--noise", sf.noise, "Noise standard deviation");
    synth->add_option("--band-hz", sf.band_hz, "Upper edge of the amplified band");

    PreprocessFlags pf;
    auto* pre = app.add_subcommand("preprocess", "Segment clips and write scalogram tensors");
    pre->add_option("--in", pf.input, "Directory of .clip files")->required();
    pre->add_option("--segment-seconds", pf.segment_seconds);
    pre->add_option("--n-freqs", pf.n_freqs);
    pre->add_option("--f-min", pf.f_min);
    pre->add_option("--f-max", pf.f_max);
    pre->add_option("--omega0", pf.omega0);
    pre->add_option("--decimation", pf.decimation);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train on a segment manifest");
    train->add_option("--manifest", tf.manifest)->required();
    train->add_option("--lr", tf.lr);
    train->add_option("--batch-size", tf.batch_size);
    train->add_option("--epochs", tf.epochs);
    train->add_option("--train-fraction", tf.train_fraction);
    train->add_option("--patience", tf.patience);
    train->add_option("--threshold", tf.threshold);

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "Score a manifest with a checkpoint");
    eval->add_option("--checkpoint", ef.checkpoint)->required();
    eval->add_option("--manifest", ef.manifest)->required();
    eval->add_option("--threshold", ef.threshold);
    eval->add_option("--batch-size", ef.batch_size);

    auto* gradcheck = app.add_subcommand("gradcheck", "Run gradient and oracle self-checks");

    std::size_t rf_k = 0;
    std::vector<std::string> rf_d;
    auto* rf = app.add_subcommand("rf", "Print receptive fields as HxW");
    rf->add_option("--k", rf_k, "Kernel size")->required();
    rf->add_option("--d", rf_d, "Dilation d_h,d_w (repeatable)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(g, sf);
        if (*pre) return cmd_preprocess(g, pf);
        if (*train) return cmd_train(g, tf);
        if (*eval) return cmd_eval(g, ef);
        if (*gradcheck) return cmd_gradcheck(g);
        if (*rf) return cmd_rf(rf_k, rf_d);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
