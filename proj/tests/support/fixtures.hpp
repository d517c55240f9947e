#pragma once

#include "cdaae/datasets.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace cdaae::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "cdaae")
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// N grayscale images of size h×w with deterministic pseudo-random bytes.
inline IdxArray gray_fixture(std::uint32_t n, std::uint32_t h, std::uint32_t w, std::uint64_t seed)
{
    IdxArray a;
    a.dims = {n, h, w};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> byte(0, 255);
    a.data.resize(static_cast<std::size_t>(n) * h * w);
    for (auto& b : a.data) b = static_cast<std::uint8_t>(byte(rng));
    return a;
}

inline IdxArray label_fixture(const std::vector<std::uint8_t>& labels)
{
    IdxArray a;
    a.dims = {static_cast<std::uint32_t>(labels.size())};
    a.data = labels;
    return a;
}

/// Small synthetic pair for fast tests.
inline DatasetPair tiny_pair(std::size_t train_per_class = 6, std::size_t test_per_class = 3,
                             std::size_t categories = 4, std::uint64_t seed = 3)
{
    SynthOptions o;
    o.categories = categories;
    o.train_per_class = train_per_class;
    o.test_per_class = test_per_class;
    o.seed = seed;
    return synth_pair(o);
}

} // namespace cdaae::testing
