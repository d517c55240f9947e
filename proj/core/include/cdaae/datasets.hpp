#pragma once

#include "cdaae/nets.hpp"
#include "cdaae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdaae {

/// Minibatch of N×3×32×32 images from one domain.
template <class T>
struct BasicDomainBatch {
    BasicTensor<T> images;
    std::optional<std::vector<int>> labels;
    Domain domain = Domain::A;
    /// Positions of the samples in their source set.
    std::vector<std::size_t> indices;

    std::size_t size() const { return images.defined() ? images.dim(0) : 0; }
    bool labeled() const { return labels.has_value(); }
    const std::vector<int>& require_labels() const;

    template <class U>
    BasicDomainBatch<U> cast() const
    {
        return BasicDomainBatch<U>{images.template cast<U>(), labels, domain, indices};
    }
};

using DomainBatch = BasicDomainBatch<float>;

/// Preprocessed images of one domain held contiguously, N×3×32×32.
struct ImageSet {
    Domain domain = Domain::A;
    std::size_t count = 0;
    std::vector<float> pixels;
    std::vector<int> labels; // empty when unlabeled

    static constexpr std::size_t kImageValues = kImageChannels * kImageSize * kImageSize;

    bool labeled() const { return !labels.empty(); }
    std::span<const float> image(std::size_t i) const { return {pixels.data() + i * kImageValues, kImageValues}; }
    ImageSet subset(std::span<const std::size_t> indices, bool keep_labels) const;
    /// Throws if labels fall outside [0, categories).
    void check_labels(std::size_t categories) const;
};

DomainBatch make_batch(const ImageSet& set, std::span<const std::size_t> indices, bool with_labels);

struct DomainSplit {
    ImageSet train;
    ImageSet test;
};

struct DatasetPair {
    DomainSplit a;
    DomainSplit b;
    std::size_t categories = 10;

    const DomainSplit& domain(Domain d) const { return d == Domain::A ? a : b; }
};

// ---------------------------------------------------------------- IDX files

class IdxError : public std::runtime_error {
public:
    IdxError(std::size_t offset, const std::string& what);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Unsigned-byte IDX array: big-endian dimension header followed by payload.
struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxArray& array);
IdxArray load_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// ------------------------------------------------------------ preprocessing

enum class PreprocessRule { mnist, usps, passthrough };

PreprocessRule parse_preprocess_rule(std::string_view name);
std::string_view to_string(PreprocessRule rule);

/// Raw 8-bit images, N×H×W×C (C = 1 or 3).
struct RawImages {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> bytes;

    static RawImages from_idx(const IdxArray& array);
};

/// Bilinear resampling of a single-channel plane (half-pixel centres).
std::vector<float> resize_bilinear(std::span<const float> src, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                                   std::size_t dst_w);

/// Centres a 16×16 plane in a zero-filled 22×22 plane.
std::vector<float> center_pad(std::span<const float> src, std::size_t src_size, std::size_t dst_size);

/// Produces N×3×32×32 floats in [−1, 1].
std::vector<float> preprocess(const RawImages& raw, PreprocessRule rule);

/// Reads an image/label IDX pair into an ImageSet.
ImageSet load_idx_images(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                         PreprocessRule rule, Domain domain);

// ------------------------------------------------------------------ splits

struct LabelSplit {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
};

/// Picks `per_class` random samples of every class to keep labels.
LabelSplit semisup_split(const ImageSet& set, std::size_t per_class, std::size_t categories, std::uint64_t seed);

// --------------------------------------------------------------- synthetic

enum class SynthStyle { shapes, digits };

SynthStyle parse_synth_style(std::string_view name);

/// Ink/background contrast of synthetic domain B.
enum class SynthPolarity { dark_on_light, light_on_dark };

SynthPolarity parse_synth_polarity(std::string_view name);
std::string_view to_string(SynthPolarity p);

struct SynthOptions {
    SynthStyle style = SynthStyle::digits;
    SynthPolarity polarity_b = SynthPolarity::dark_on_light;
    std::size_t categories = 10;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 20;
    std::uint64_t seed = 7;
};

/// Two-domain desk-scale surrogate. Domain A renders class glyphs in colour
/// on a dark background; domain B renders independently jittered grey
/// glyphs on a textured background, dark on light by default. The
/// light-on-dark variant is a milder shift, closer to what a source-only
/// classifier can partly bridge.
DatasetPair synth_pair(const SynthOptions& options);

/// Writes an ImageSet as IDX (N×32×32×3 bytes, plus labels when present).
void export_idx(const ImageSet& set, const std::filesystem::path& images, const std::filesystem::path& labels);

} // namespace cdaae
