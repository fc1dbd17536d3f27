#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sdcn/tensor.hpp"

namespace testing {

template <typename T>
std::vector<double> as_double(std::span<const T> v) {
    return std::vector<double>(v.begin(), v.end());
}

template <typename T>
std::vector<double> as_double(const sdcn::BasicTensor4<T>& t) {
    return as_double<T>(t.span());
}

template <typename T>
sdcn::BasicTensor4<T> random_tensor(sdcn::Shape4 s, std::mt19937_64& rng) {
    const auto v = oracle::normals(s.count(), rng);
    return sdcn::BasicTensor4<T>(s, std::vector<T>(v.begin(), v.end()));
}

inline oracle::Dims dims(const sdcn::Shape4& s) {
    return {s.b, s.c, s.h, s.w};
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("sdcn_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
