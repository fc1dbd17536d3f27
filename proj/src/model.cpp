#include "sdcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace sdcn {

std::vector<DilationVector> default_branch_dilations() {
    return {{1, 1}, {1, 2}, {1, 4}, {1, 8}, {1, 16}};
}

void SdcBlockSpec::validate() const {
    if (k != 3 && k != 5) {
        throw ConfigError("sdc block: kernel size must be 3 or 5");
    }
    if (branch_dilations.empty()) {
        throw ConfigError("sdc block: needs at least one branch");
    }
    if (filters_per_branch == 0 || in_channels == 0) {
        throw ConfigError("sdc block: filter and channel counts must be positive");
    }
    for (std::size_t i = 0; i < branch_dilations.size(); ++i) {
        branch_spec(i).validate();
    }
}

ConvSpec SdcBlockSpec::branch_spec(std::size_t branch) const {
    return ConvSpec{k, branch_dilations.at(branch), in_channels, filters_per_branch, Padding::same};
}

void SdcnConfig::validate() const {
    if (input_h == 0 || input_w == 0 || input_channels == 0) {
        throw ConfigError("sdcn: input dims must be positive");
    }
    if (input_h % 8 != 0 || input_w % 8 != 0) {
        throw ConfigError("sdcn: input height and width must be divisible by 8 (three 2x2 pools)");
    }
    for (std::size_t f : block_filters) {
        if (f == 0) throw ConfigError("sdcn: block filter counts must be positive");
    }
    for (std::size_t u : fc_units) {
        if (u == 0) throw ConfigError("sdcn: fc sizes must be positive");
    }
    for (std::size_t p = 0; p < 2; ++p) {
        for (std::size_t b = 0; b < 3; ++b) {
            block_spec(p, b).validate();
        }
    }
}

SdcBlockSpec SdcnConfig::block_spec(std::size_t path, std::size_t block) const {
    SdcBlockSpec spec;
    spec.k = path_kernels.at(path);
    spec.branch_dilations = branch_dilations;
    spec.filters_per_branch = block_filters.at(block);
    spec.in_channels = block == 0 ? input_channels : branch_dilations.size() * block_filters[block - 1];
    return spec;
}

std::size_t SdcnConfig::feature_size() const {
    return 2 * branch_dilations.size() * block_filters[2] * feature_h() * feature_w();
}

std::size_t SdcnConfig::parameter_count() const {
    std::size_t total = 0;
    for (std::size_t p = 0; p < 2; ++p) {
        for (std::size_t b = 0; b < 3; ++b) {
            const SdcBlockSpec spec = block_spec(p, b);
            for (std::size_t r = 0; r < spec.branch_dilations.size(); ++r) {
                total += spec.branch_spec(r).parameter_count();
            }
        }
    }
    total += (feature_size() + 1) * fc_units[0];
    total += (fc_units[0] + 1) * fc_units[1];
    total += fc_units[1] + 1;
    return total;
}

SdcnConfig SdcnConfig::desk() {
    return SdcnConfig{};
}

SdcnConfig SdcnConfig::paper() {
    SdcnConfig c;
    c.input_h = 104;
    c.input_w = 6000;
    c.input_channels = 16;
    c.block_filters = {64, 128, 256};
    c.fc_units = {1024, 512};
    return c;
}

SdcnConfig SdcnConfig::tiny() {
    SdcnConfig c;
    c.input_h = 16;
    c.input_w = 16;
    c.input_channels = 2;
    c.block_filters = {2, 4, 8};
    c.fc_units = {16, 8};
    return c;
}

void to_json(nlohmann::json& j, const DilationVector& d) {
    j = nlohmann::json::array({d.h, d.w});
}

void from_json(const nlohmann::json& j, DilationVector& d) {
    d.h = j.at(0).get<std::size_t>();
    d.w = j.at(1).get<std::size_t>();
}

void to_json(nlohmann::json& j, const SdcnConfig& c) {
    j = nlohmann::json{{"input_h", c.input_h},
                       {"input_w", c.input_w},
                       {"input_channels", c.input_channels},
                       {"block_filters", c.block_filters},
                       {"fc_units", c.fc_units},
                       {"path_kernels", c.path_kernels},
                       {"branch_dilations", c.branch_dilations},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SdcnConfig& c) {
    c.input_h = j.value("input_h", c.input_h);
    c.input_w = j.value("input_w", c.input_w);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.block_filters = j.value("block_filters", c.block_filters);
    c.fc_units = j.value("fc_units", c.fc_units);
    c.path_kernels = j.value("path_kernels", c.path_kernels);
    c.branch_dilations = j.value("branch_dilations", c.branch_dilations);
    c.seed = j.value("seed", c.seed);
}

std::size_t SdcnParams::scalar_count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Shape4&, std::span<const float> s) { n += s.size(); });
    return n;
}

SdcnParams SdcnParams::zeros(const SdcnConfig& cfg) {
    cfg.validate();
    SdcnParams p;
    for (std::size_t path = 0; path < 2; ++path) {
        p.paths[path].resize(3);
        for (std::size_t b = 0; b < 3; ++b) {
            const SdcBlockSpec spec = cfg.block_spec(path, b);
            for (std::size_t r = 0; r < spec.branch_dilations.size(); ++r) {
                p.paths[path][b].branches.push_back(make_conv_params<float>(spec.branch_spec(r)));
            }
        }
    }
    p.fc1 = {Tensor2(cfg.fc_units[0], cfg.feature_size()), std::vector<float>(cfg.fc_units[0])};
    p.fc2 = {Tensor2(cfg.fc_units[1], cfg.fc_units[0]), std::vector<float>(cfg.fc_units[1])};
    p.head = {Tensor2(1, cfg.fc_units[1]), std::vector<float>(1)};
    return p;
}

SdcnModel::SdcnModel(SdcnConfig config, SdcnParams params)
    : config_(std::move(config)), params_(std::move(params)) {
    const SdcnParams expected = SdcnParams::zeros(config_);
    std::vector<Shape4> shapes;
    expected.visit([&](const std::string&, const Shape4& s, std::span<const float>) { shapes.push_back(s); });
    std::size_t i = 0;
    params_.visit([&](const std::string& name, const Shape4& s, std::span<const float>) {
        if (i >= shapes.size() || shapes[i] != s) {
            throw ShapeError("sdcn: parameter " + name + " has dims " + s.str() +
                             " inconsistent with config");
        }
        ++i;
    });
    if (i != shapes.size()) {
        throw ShapeError("sdcn: parameter count inconsistent with config");
    }
}

SdcnModel init_model(const SdcnConfig& cfg, std::uint64_t seed) {
    SdcnParams params = SdcnParams::zeros(cfg);
    std::mt19937_64 rng(seed);
    params.visit([&rng](const std::string& name, const Shape4& shape, std::span<float> data) {
        if (name.ends_with(".bias")) {
            return;
        }
        // Conv weights are (O, C, k, k); dense weights are stored as (1, 1, out, in).
        const std::size_t fan_in = shape.b == 1 && shape.c == 1 ? shape.w : shape.c * shape.h * shape.w;
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (float& v : data) {
            v = static_cast<float>(normal(rng));
        }
    });
    SdcnConfig stored = cfg;
    stored.seed = seed;
    return SdcnModel(stored, std::move(params));
}

namespace {

void relu_inplace(std::span<float> v) {
    for (float& x : v) {
        x = x > 0.0f ? x : 0.0f;
    }
}

// y = x W^T + b
Tensor2 dense_forward(const Tensor2& x, const DenseParams& d) {
    Tensor2 y = matmul_bt(x, d.weights);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += d.bias[c];
        }
    }
    return y;
}

// Accumulates parameter grads of a dense layer; returns dL/dx.
Tensor2 dense_backward(const Tensor2& x, const DenseParams& d, const Tensor2& grad_y,
                       DenseParams& grads) {
    grads.weights = matmul_at(grad_y, x);
    grads.bias.assign(d.bias.size(), 0.0f);
    for (std::size_t r = 0; r < grad_y.rows(); ++r) {
        for (std::size_t c = 0; c < grad_y.cols(); ++c) {
            grads.bias[c] += grad_y(r, c);
        }
    }
    return matmul(grad_y, d.weights);
}

void relu_mask(Tensor2& grad, const Tensor2& activated) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activated[i] > 0.0f)) {
            grad[i] = 0.0f;
        }
    }
}

double sigmoid(double z) {
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    // Keep probabilities strictly inside (0, 1) even when the logit saturates.
    return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

}  // namespace

Tensor4 sdc_block_forward(const Tensor4& x, const SdcBlockSpec& spec, const SdcBlockParams& params,
                          SdcBlockCache& cache) {
    spec.validate();
    if (params.branches.size() != spec.branch_dilations.size()) {
        throw ShapeError("sdc block: parameter branch count does not match spec");
    }
    const Shape4 s = x.shape();
    if (s.c != spec.in_channels) {
        throw ShapeError("sdc block: input " + s.str() + " has wrong channel count");
    }
    if (spec.followed_by_pool && (s.h % 2 != 0 || s.w % 2 != 0)) {
        throw ShapeError("sdc block: spatial dims must be even, got " + s.str());
    }
    std::vector<Tensor4> outputs;
    outputs.reserve(params.branches.size());
    for (std::size_t r = 0; r < params.branches.size(); ++r) {
        Tensor4 y = sdconv_forward(x, spec.branch_spec(r), params.branches[r]);
        relu_inplace(y.span());
        outputs.push_back(std::move(y));
    }
    cache.input = x;
    cache.activated = concat_channels<float>(outputs);
    if (!spec.followed_by_pool) {
        cache.pool = {};
        return cache.activated;
    }
    return maxpool2x2(cache.activated, cache.pool);
}

SdcBlockGrads sdc_block_backward(const SdcBlockSpec& spec, const SdcBlockParams& params,
                                 const SdcBlockCache& cache, const Tensor4& grad_out,
                                 bool input_grad) {
    Tensor4 grad_act = spec.followed_by_pool
                           ? maxpool2x2_backward(grad_out, cache.pool, cache.activated.shape())
                           : grad_out;
    if (grad_act.shape() != cache.activated.shape()) {
        throw ShapeError("sdc block backward: gradient dims do not match cache");
    }
    for (std::size_t i = 0; i < grad_act.size(); ++i) {
        if (!(cache.activated[i] > 0.0f)) {
            grad_act[i] = 0.0f;
        }
    }
    SdcBlockGrads grads;
    grads.params.branches.resize(params.branches.size());
    if (input_grad) {
        grads.grad_input = Tensor4(cache.input.shape());
    }
    const std::size_t f = spec.filters_per_branch;
    for (std::size_t r = 0; r < params.branches.size(); ++r) {
        const Tensor4 g = slice_channels(grad_act, r * f, f);
        ConvGrads cg = sdconv_backward(cache.input, spec.branch_spec(r), params.branches[r], g, input_grad);
        if (input_grad) {
            auto dst = grads.grad_input.span();
            auto src = cg.grad_x.span();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += src[i];
            }
        }
        grads.params.branches[r] = ConvParams{std::move(cg.grad_w), std::move(cg.grad_b)};
    }
    return grads;
}

std::vector<double> model_forward(const Tensor4& x, const SdcnModel& model, ForwardCache* cache) {
    const SdcnConfig& cfg = model.config();
    const Shape4 s = x.shape();
    if (s.b == 0 || s.c != cfg.input_channels || s.h != cfg.input_h || s.w != cfg.input_w) {
        throw ShapeError("sdcn: input " + s.str() + " does not match config (" +
                         std::to_string(cfg.input_channels) + "," + std::to_string(cfg.input_h) +
                         "," + std::to_string(cfg.input_w) + ")");
    }
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};
    c.model = &model;
    c.model_version = model.version();
    c.batch = s.b;

    const SdcnParams& params = model.params();
    std::array<Tensor4, 2> path_out;
    for (std::size_t p = 0; p < 2; ++p) {
        c.blocks[p].resize(3);
        const Tensor4* in = &x;
        Tensor4 y;
        for (std::size_t b = 0; b < 3; ++b) {
            y = sdc_block_forward(*in, cfg.block_spec(p, b), params.paths[p][b], c.blocks[p][b]);
            in = &y;
        }
        c.path_shapes[p] = y.shape();
        path_out[p] = std::move(y);
        if (!cache) {
            c.blocks[p].clear();
        }
    }

    // Per sample: flattened path 0 output followed by flattened path 1 output.
    const std::size_t per0 = path_out[0].size() / s.b;
    const std::size_t per1 = path_out[1].size() / s.b;
    c.features = Tensor2(s.b, per0 + per1);
    for (std::size_t b = 0; b < s.b; ++b) {
        auto row = c.features.row(b);
        std::copy_n(path_out[0].span().begin() + static_cast<std::ptrdiff_t>(b * per0), per0, row.begin());
        std::copy_n(path_out[1].span().begin() + static_cast<std::ptrdiff_t>(b * per1), per1,
                    row.begin() + static_cast<std::ptrdiff_t>(per0));
    }

    c.hidden1 = dense_forward(c.features, params.fc1);
    relu_inplace(c.hidden1.span());
    c.hidden2 = dense_forward(c.hidden1, params.fc2);
    relu_inplace(c.hidden2.span());

    // The single output unit is accumulated in double: its rounding would otherwise be the
    // coarsest quantization on the way to the probability.
    c.logits.resize(s.b);
    c.probs.resize(s.b);
    const auto w = params.head.weights.row(0);
    for (std::size_t b = 0; b < s.b; ++b) {
        const auto h = c.hidden2.row(b);
        double z = params.head.bias[0];
        for (std::size_t j = 0; j < h.size(); ++j) {
            z += static_cast<double>(w[j]) * static_cast<double>(h[j]);
        }
        c.logits[b] = z;
        c.probs[b] = sigmoid(z);
    }
    return c.probs;
}

SdcnParams model_backward(const SdcnModel& model, const ForwardCache& cache,
                          std::span<const double> grad_probs) {
    if (grad_probs.size() != cache.batch) {
        throw ShapeError("model_backward: expected " + std::to_string(cache.batch) + " upstream gradients");
    }
    // d prob / d logit = p (1 - p) from the unclamped sigmoid.
    std::vector<double> grad_logits(cache.batch);
    for (std::size_t b = 0; b < cache.batch; ++b) {
        const double p = 1.0 / (1.0 + std::exp(-cache.logits.at(b)));
        grad_logits[b] = grad_probs[b] * p * (1.0 - p);
    }
    return model_backward_logits(model, cache, grad_logits);
}

SdcnParams model_backward_logits(const SdcnModel& model, const ForwardCache& cache,
                                 std::span<const double> grad_logits) {
    if (cache.model != &model || cache.model_version != model.version() || cache.blocks[0].empty()) {
        throw UsageError("model_backward: cache does not belong to the current model state");
    }
    if (grad_logits.size() != cache.batch) {
        throw ShapeError("model_backward: expected " + std::to_string(cache.batch) + " upstream gradients");
    }
    const SdcnConfig& cfg = model.config();
    const SdcnParams& params = model.params();
    SdcnParams grads;

    Tensor2 gz(cache.batch, 1);
    for (std::size_t b = 0; b < cache.batch; ++b) {
        gz(b, 0) = static_cast<float>(grad_logits[b]);
    }
    Tensor2 g2 = dense_backward(cache.hidden2, params.head, gz, grads.head);
    relu_mask(g2, cache.hidden2);
    Tensor2 g1 = dense_backward(cache.hidden1, params.fc2, g2, grads.fc2);
    relu_mask(g1, cache.hidden1);
    const Tensor2 gx = dense_backward(cache.features, params.fc1, g1, grads.fc1);

    const std::size_t per0 = cache.path_shapes[0].count() / cache.batch;
    for (std::size_t p = 0; p < 2; ++p) {
        const Shape4 ps = cache.path_shapes[p];
        const std::size_t per = ps.count() / cache.batch;
        const std::size_t offset = p == 0 ? 0 : per0;
        Tensor4 g(ps);
        for (std::size_t b = 0; b < cache.batch; ++b) {
            const auto row = gx.row(b);
            std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(offset), per,
                        g.span().begin() + static_cast<std::ptrdiff_t>(b * per));
        }
        grads.paths[p].resize(3);
        for (std::size_t blk = 3; blk-- > 0;) {
            SdcBlockGrads bg = sdc_block_backward(cfg.block_spec(p, blk), params.paths[p][blk],
                                                  cache.blocks[p][blk], g, blk > 0);
            grads.paths[p][blk] = std::move(bg.params);
            g = std::move(bg.grad_input);
        }
    }
    return grads;
}

}  // namespace sdcn
