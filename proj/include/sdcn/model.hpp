#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcn/sdconv.hpp"
#include "sdcn/tensor.hpp"

namespace sdcn {

/// Default branch dilation vectors of an SDC block: [1,1], [1,2], [1,4], [1,8], [1,16].
std::vector<DilationVector> default_branch_dilations();

/// Parallel same-padded semi-dilated convolutions -> ReLU -> channel concat -> 2x2 max-pool.
struct SdcBlockSpec {
    std::size_t k = 3;
    std::vector<DilationVector> branch_dilations = default_branch_dilations();
    std::size_t filters_per_branch = 8;
    std::size_t in_channels = 1;
    bool followed_by_pool = true;

    void validate() const;
    std::size_t out_channels() const { return branch_dilations.size() * filters_per_branch; }
    ConvSpec branch_spec(std::size_t branch) const;
};

struct SdcnConfig {
    std::size_t input_h = 64;
    std::size_t input_w = 256;
    std::size_t input_channels = 4;
    std::array<std::size_t, 3> block_filters{8, 16, 32};  // per branch
    std::array<std::size_t, 2> fc_units{128, 64};
    std::array<std::size_t, 2> path_kernels{3, 5};
    std::vector<DilationVector> branch_dilations = default_branch_dilations();
    std::uint64_t seed = 1;

    void validate() const;
    SdcBlockSpec block_spec(std::size_t path, std::size_t block) const;
    /// Spatial dims after the three pooled blocks.
    std::size_t feature_h() const { return input_h / 8; }
    std::size_t feature_w() const { return input_w / 8; }
    /// Length of the concatenated, flattened two-path feature vector.
    std::size_t feature_size() const;
    std::size_t parameter_count() const;

    /// 64 x 256 x 4 input, filters 8/16/32, FC 128/64.
    static SdcnConfig desk();
    /// 100 x 6000 x 16 scalograms zero-padded to 104 rows, filters 64/128/256, FC 1024/512.
    static SdcnConfig paper();
    /// 16 x 16 x 2, filters 2/4/8, FC 16/8. Used for gradient checks.
    static SdcnConfig tiny();

    bool operator==(const SdcnConfig&) const = default;
};

void to_json(nlohmann::json& j, const DilationVector& d);
void from_json(const nlohmann::json& j, DilationVector& d);
void to_json(nlohmann::json& j, const SdcnConfig& c);
void from_json(const nlohmann::json& j, SdcnConfig& c);

struct SdcBlockParams {
    std::vector<ConvParams> branches;
};

/// Fully connected layer: y = x W^T + b with W stored (out x in).
struct DenseParams {
    Tensor2 weights;
    std::vector<float> bias;
};

/// Every learnable tensor of the network. Declaration order (used by checkpoints and
/// optimizers): path 0 blocks 0..2 branches 0..4 (weights, bias), path 1 likewise,
/// then fc1, fc2, head (weights, bias).
struct SdcnParams {
    std::array<std::vector<SdcBlockParams>, 2> paths;
    DenseParams fc1;
    DenseParams fc2;
    DenseParams head;

    /// f(name, shape, span) for each tensor in declaration order.
    template <typename F>
    void visit(F&& f);
    template <typename F>
    void visit(F&& f) const;

    std::size_t scalar_count() const;
    /// Zero-valued parameters with the shapes implied by cfg.
    static SdcnParams zeros(const SdcnConfig& cfg);
};

class SdcnModel {
public:
    SdcnModel() = default;
    SdcnModel(SdcnConfig config, SdcnParams params);

    const SdcnConfig& config() const { return config_; }
    const SdcnParams& params() const { return params_; }
    /// Mutable access invalidates forward caches taken before the call.
    SdcnParams& mutable_params() {
        ++version_;
        return params_;
    }
    std::uint64_t version() const { return version_; }

private:
    SdcnConfig config_;
    SdcnParams params_;
    std::uint64_t version_ = 0;
};

/// He-normal weights (variance 2 / fan_in), zero biases; deterministic in seed.
SdcnModel init_model(const SdcnConfig& cfg, std::uint64_t seed);

struct SdcBlockCache {
    Tensor4 input;
    Tensor4 activated;  // concatenated post-ReLU branch outputs, before pooling
    PoolIndices pool;
};

Tensor4 sdc_block_forward(const Tensor4& x, const SdcBlockSpec& spec, const SdcBlockParams& params,
                          SdcBlockCache& cache);

struct SdcBlockGrads {
    Tensor4 grad_input;  // empty when not requested
    SdcBlockParams params;
};

SdcBlockGrads sdc_block_backward(const SdcBlockSpec& spec, const SdcBlockParams& params,
                                 const SdcBlockCache& cache, const Tensor4& grad_out,
                                 bool input_grad = true);

struct ForwardCache {
    const SdcnModel* model = nullptr;
    std::uint64_t model_version = 0;
    std::size_t batch = 0;
    std::array<std::vector<SdcBlockCache>, 2> blocks;
    std::array<Shape4, 2> path_shapes{};
    Tensor2 features;  // batch x feature_size
    Tensor2 hidden1;   // post-ReLU
    Tensor2 hidden2;   // post-ReLU
    std::vector<double> logits;
    std::vector<double> probs;
};

/// Class probabilities in (0, 1) for a (B, N_ch, H, W) batch.
std::vector<double> model_forward(const Tensor4& x, const SdcnModel& model, ForwardCache* cache = nullptr);

/// Gradients of sum_i grad_probs[i] * probs[i] with respect to every parameter.
SdcnParams model_backward(const SdcnModel& model, const ForwardCache& cache,
                          std::span<const double> grad_probs);

/// Same, with upstream gradients taken with respect to the logits instead of the probabilities.
SdcnParams model_backward_logits(const SdcnModel& model, const ForwardCache& cache,
                                 std::span<const double> grad_logits);

// Checkpoint: "SDCN", u32 version, u32 config-JSON length, config JSON bytes, then each
// parameter tensor in declaration order as an .sgt payload.
void save_checkpoint(const SdcnModel& model, const std::string& path);
SdcnModel load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------

template <typename F>
void SdcnParams::visit(F&& f) {
    for (std::size_t p = 0; p < paths.size(); ++p) {
        for (std::size_t b = 0; b < paths[p].size(); ++b) {
            for (std::size_t r = 0; r < paths[p][b].branches.size(); ++r) {
                auto& conv = paths[p][b].branches[r];
                const std::string base = "path" + std::to_string(p) + ".block" + std::to_string(b) +
                                         ".branch" + std::to_string(r);
                f(base + ".weight", conv.weights.shape(), conv.weights.span());
                f(base + ".bias", Shape4{1, 1, 1, conv.bias.size()}, std::span<float>(conv.bias));
            }
        }
    }
    auto dense = [&f](const std::string& name, DenseParams& d) {
        f(name + ".weight", Shape4{1, 1, d.weights.rows(), d.weights.cols()}, d.weights.span());
        f(name + ".bias", Shape4{1, 1, 1, d.bias.size()}, std::span<float>(d.bias));
    };
    dense("fc1", fc1);
    dense("fc2", fc2);
    dense("head", head);
}

template <typename F>
void SdcnParams::visit(F&& f) const {
    const_cast<SdcnParams*>(this)->visit(
        [&f](const std::string& name, const Shape4& shape, std::span<float> data) {
            f(name, shape, std::span<const float>(data));
        });
}

}  // namespace sdcn
