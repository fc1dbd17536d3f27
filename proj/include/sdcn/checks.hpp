#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdcn {

/// Outcome of one self-check suite; `worst` is the largest error observed.
struct CheckReport {
    std::string name;
    bool passed = false;
    std::size_t cases = 0;
    double worst = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// Receptive-field formula vs the support of an input gradient, 20 random (k, d_h, d_w).
CheckReport check_receptive_field(std::uint64_t seed);
/// Implicit-GEMM forward vs direct undilated convolution with the zero-expanded kernel.
CheckReport check_expanded_kernel(std::uint64_t seed, std::size_t cases = 50);
/// d = [1,1] and d = [2,2] against the serial direct-sum convolution.
CheckReport check_degenerate_dilations(std::uint64_t seed);
/// sdconv_backward vs central differences; float tolerance 1e-3, double 1e-6.
CheckReport check_conv_gradients_float(std::uint64_t seed, std::size_t cases = 20);
CheckReport check_conv_gradients_double(std::uint64_t seed, std::size_t cases = 20);
/// model_backward vs central differences on the tiny preset, 50 random parameters.
CheckReport check_model_gradients(std::uint64_t seed, std::size_t samples = 50);

/// Every suite above, in order.
std::vector<CheckReport> run_all_checks(std::uint64_t seed);

}  // namespace sdcn
