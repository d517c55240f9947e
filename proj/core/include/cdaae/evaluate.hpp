#pragma once

#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/optimizer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cdaae {

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& probs);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Eval-mode forward over a set in chunks; returns N×K probabilities row-major.
std::vector<float> classify(const ContentClassifier& classifier, const ImageSet& set, std::size_t chunk = 250);
std::vector<float> encode_content_probs(const NetworkSet& nets, const ImageSet& set, std::size_t chunk = 250);

/// Accuracy of argmax E^c on a labeled set.
double content_accuracy(const NetworkSet& nets, const ImageSet& set);

// ------------------------------------------------------------------ oracle

struct OracleOptions {
    NetConfig net;
    std::size_t steps = 600;
    std::size_t batch_size = 64;
    AdamOptions adam{1e-3, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 11;
};

/// Independent per-domain classifier used only for scoring.
struct Oracle {
    Domain domain = Domain::A;
    std::unique_ptr<ContentClassifier> classifier;
    double test_accuracy = 0.0;

    std::vector<int> predict(const Tensor& images) const;
};

Oracle train_oracle_classifier(const DomainSplit& split, Domain domain, const OracleOptions& options);

// ---------------------------------------------------------------- transfer

enum class Scenario { prior, self, cross };

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);

struct TransferResult {
    double accuracy = 0.0;
    std::size_t samples = 0;
};

/// Generates `per_class` images per category in `target` and scores them
/// with the target-domain oracle. prior: one-hot content with a prior style.
/// self: target test images re-rendered with a prior style. cross: the
/// other domain's test images transformed into `target`.
TransferResult transfer_accuracy(const NetworkSet& nets, const Oracle& oracle, Scenario scenario, Domain target,
                                 const DatasetPair& data, std::size_t per_class, std::uint64_t seed);

/// Per-scenario accuracies named P2A, A2A, B2A, P2B, B2B, A2B.
struct EvalReport {
    struct Entry {
        std::string name;
        double accuracy;
        std::size_t samples;
    };
    std::vector<Entry> entries;
    double oracle_a_accuracy = 0.0;
    double oracle_b_accuracy = 0.0;

    const Entry& at(std::string_view name) const;
    void write_csv(std::ostream& os) const;
    void write_table(std::ostream& os) const;
};

EvalReport evaluate_transfer(const NetworkSet& nets, const Oracle& oracle_a, const Oracle& oracle_b,
                             const DatasetPair& data, std::size_t per_class, std::uint64_t seed);

// ------------------------------------------------------------- compression

struct ImageDims {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;
    std::size_t bits_per_value = 8;
};

/// Kept as an exact integer ratio until value() is called.
struct CompressionRatio {
    std::uint64_t image_bits = 0;
    std::uint64_t code_bits = 0;

    double value() const { return static_cast<double>(image_bits) / static_cast<double>(code_bits); }
};

/// Image storage bits over content_dims·content_bits + style_dims·style_bits.
CompressionRatio compression_ratio(const ImageDims& image, std::size_t content_dims, std::size_t content_bits_per_dim,
                                   std::size_t style_dims, std::size_t style_bits_per_dim);

// ------------------------------------------------------------------- grids

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // row-major RGB

    std::array<std::uint8_t, 3> at(std::size_t x, std::size_t y) const;
    bool operator==(const RgbImage&) const = default;
};

struct GridOptions {
    std::size_t rows = 1;
    std::size_t cols = 1;
    bool separator_after_first_column = false;
    bool separator_after_first_row = false;
    std::size_t separator_width = 2;
    std::array<std::uint8_t, 3> separator_color{255, 0, 0};
    /// Nearest-neighbour magnification; 1 keeps the canonical raw size.
    std::size_t upscale = 1;
};

/// round((v + 1)·127.5), clamped to [0, 255].
std::uint8_t to_pixel(float v);

/// Lays out N×3×32×32 images row-major; N must equal rows·cols.
RgbImage image_grid(const Tensor& images, const GridOptions& options);

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

} // namespace cdaae
