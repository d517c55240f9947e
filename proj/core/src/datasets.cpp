#include "cdaae/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace cdaae {

template <class T>
const std::vector<int>& BasicDomainBatch<T>::require_labels() const
{
    if (!labels) throw std::invalid_argument("batch from domain " + std::string(to_string(domain)) + " is unlabeled");
    return *labels;
}

template struct BasicDomainBatch<float>;
template struct BasicDomainBatch<double>;

ImageSet ImageSet::subset(std::span<const std::size_t> indices, bool keep_labels) const
{
    ImageSet out;
    out.domain = domain;
    out.count = indices.size();
    out.pixels.reserve(indices.size() * kImageValues);
    for (auto i : indices) {
        if (i >= count) throw std::out_of_range("subset index " + std::to_string(i) + " out of range");
        auto img = image(i);
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
        if (keep_labels && labeled()) out.labels.push_back(labels[i]);
    }
    return out;
}

void ImageSet::check_labels(std::size_t categories) const
{
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= categories)
            throw std::out_of_range("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                    " outside [0, " + std::to_string(categories) + ")");
}

DomainBatch make_batch(const ImageSet& set, std::span<const std::size_t> indices, bool with_labels)
{
    if (indices.empty()) throw std::invalid_argument("cannot build an empty batch");
    std::vector<float> pixels;
    pixels.reserve(indices.size() * ImageSet::kImageValues);
    std::vector<int> labels;
    for (auto i : indices) {
        if (i >= set.count) throw std::out_of_range("batch index " + std::to_string(i) + " out of range");
        auto img = set.image(i);
        pixels.insert(pixels.end(), img.begin(), img.end());
        if (with_labels) {
            if (!set.labeled()) throw std::invalid_argument("labels requested from an unlabeled set");
            labels.push_back(set.labels[i]);
        }
    }
    DomainBatch batch;
    batch.images = Tensor({indices.size(), kImageChannels, kImageSize, kImageSize}, std::move(pixels));
    if (with_labels) batch.labels = std::move(labels);
    batch.domain = set.domain;
    batch.indices.assign(indices.begin(), indices.end());
    return batch;
}

// ---------------------------------------------------------------- IDX files

IdxError::IdxError(std::size_t offset, const std::string& what)
    : std::runtime_error("IDX parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset)
{
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4) throw IdxError(0, "file shorter than the 4-byte magic");
    if (bytes[0] != 0 || bytes[1] != 0) throw IdxError(0, "magic must start with two zero bytes");
    if (bytes[2] != 0x08) throw IdxError(2, "only unsigned-byte payloads (type 0x08) are supported");
    const std::size_t rank = bytes[3];
    if (rank == 0) throw IdxError(3, "rank must be at least 1");
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() < header)
        throw IdxError(bytes.size(), "header needs " + std::to_string(header) + " bytes, file has " +
                                         std::to_string(bytes.size()));
    IdxArray out;
    std::size_t payload = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        const auto* p = bytes.data() + 4 + 4 * i;
        const std::uint32_t d = (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                                (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
        out.dims.push_back(d);
        payload *= d;
    }
    if (bytes.size() - header != payload)
        throw IdxError(header, "payload length mismatch: expected " + std::to_string(payload) + " bytes, found " +
                                   std::to_string(bytes.size() - header));
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& array)
{
    std::size_t payload = 1;
    for (auto d : array.dims) payload *= d;
    if (array.dims.empty() || array.dims.size() > 255 || payload != array.data.size())
        throw std::invalid_argument("IDX dims do not describe the payload");
    std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(array.dims.size())};
    for (auto d : array.dims) {
        out.push_back(static_cast<std::uint8_t>(d >> 24));
        out.push_back(static_cast<std::uint8_t>(d >> 16));
        out.push_back(static_cast<std::uint8_t>(d >> 8));
        out.push_back(static_cast<std::uint8_t>(d));
    }
    out.insert(out.end(), array.data.begin(), array.data.end());
    return out;
}

IdxArray load_idx(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open IDX file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

void write_idx(const std::filesystem::path& path, const IdxArray& array)
{
    auto bytes = serialize_idx(array);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write IDX file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ------------------------------------------------------------ preprocessing

PreprocessRule parse_preprocess_rule(std::string_view name)
{
    if (name == "mnist") return PreprocessRule::mnist;
    if (name == "usps") return PreprocessRule::usps;
    if (name == "passthrough") return PreprocessRule::passthrough;
    throw std::invalid_argument("unknown preprocess rule '" + std::string(name) + "'");
}

std::string_view to_string(PreprocessRule rule)
{
    switch (rule) {
    case PreprocessRule::mnist: return "mnist";
    case PreprocessRule::usps: return "usps";
    case PreprocessRule::passthrough: return "passthrough";
    }
    return "?";
}

RawImages RawImages::from_idx(const IdxArray& array)
{
    RawImages raw;
    if (array.dims.size() == 3) {
        raw.channels = 1;
    } else if (array.dims.size() == 4 && (array.dims[3] == 1 || array.dims[3] == 3)) {
        raw.channels = array.dims[3];
    } else {
        throw std::invalid_argument("image IDX must be N×H×W or N×H×W×C with C in {1,3}");
    }
    raw.count = array.dims[0];
    raw.height = array.dims[1];
    raw.width = array.dims[2];
    raw.bytes = array.data;
    return raw;
}

std::vector<float> resize_bilinear(std::span<const float> src, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                                   std::size_t dst_w)
{
    std::vector<float> out(dst_h * dst_w);
    const double sy = static_cast<double>(src_h) / dst_h;
    const double sx = static_cast<double>(src_w) / dst_w;
    auto coord = [](double pos, std::size_t size, std::size_t& i0, std::size_t& i1, double& frac) {
        pos = std::clamp(pos, 0.0, static_cast<double>(size - 1));
        i0 = static_cast<std::size_t>(std::floor(pos));
        i1 = std::min(i0 + 1, size - 1);
        frac = pos - static_cast<double>(i0);
    };
    for (std::size_t y = 0; y < dst_h; ++y) {
        std::size_t y0, y1;
        double fy;
        coord((y + 0.5) * sy - 0.5, src_h, y0, y1, fy);
        for (std::size_t x = 0; x < dst_w; ++x) {
            std::size_t x0, x1;
            double fx;
            coord((x + 0.5) * sx - 0.5, src_w, x0, x1, fx);
            const double top = src[y0 * src_w + x0] * (1 - fx) + src[y0 * src_w + x1] * fx;
            const double bottom = src[y1 * src_w + x0] * (1 - fx) + src[y1 * src_w + x1] * fx;
            out[y * dst_w + x] = static_cast<float>(top * (1 - fy) + bottom * fy);
        }
    }
    return out;
}

std::vector<float> center_pad(std::span<const float> src, std::size_t src_size, std::size_t dst_size)
{
    if (dst_size < src_size) throw std::invalid_argument("center_pad: target smaller than source");
    const std::size_t off = (dst_size - src_size) / 2;
    std::vector<float> out(dst_size * dst_size, 0.0f);
    for (std::size_t y = 0; y < src_size; ++y)
        for (std::size_t x = 0; x < src_size; ++x) out[(y + off) * dst_size + x + off] = src[y * src_size + x];
    return out;
}

std::vector<float> preprocess(const RawImages& raw, PreprocessRule rule)
{
    if (raw.bytes.size() != raw.count * raw.height * raw.width * raw.channels)
        throw std::invalid_argument("raw image payload does not match its dimensions");
    if (rule == PreprocessRule::usps && (raw.height != 16 || raw.width != 16))
        throw std::invalid_argument("usps rule needs 16×16 input, got " + std::to_string(raw.height) + "×" +
                                    std::to_string(raw.width));
    if (rule == PreprocessRule::passthrough && (raw.height != kImageSize || raw.width != kImageSize))
        throw std::invalid_argument("passthrough rule needs 32×32 input, got " + std::to_string(raw.height) + "×" +
                                    std::to_string(raw.width));

    const std::size_t plane_in = raw.height * raw.width;
    const std::size_t plane_out = kImageSize * kImageSize;
    std::vector<float> out(raw.count * kImageChannels * plane_out);
    std::vector<float> plane(plane_in);
    for (std::size_t n = 0; n < raw.count; ++n) {
        for (std::size_t c = 0; c < raw.channels; ++c) {
            const std::uint8_t* src = raw.bytes.data() + n * plane_in * raw.channels;
            for (std::size_t i = 0; i < plane_in; ++i) plane[i] = src[i * raw.channels + c];
            std::vector<float> resized;
            switch (rule) {
            case PreprocessRule::mnist:
                resized = resize_bilinear(plane, raw.height, raw.width, kImageSize, kImageSize);
                break;
            case PreprocessRule::usps: {
                auto padded = center_pad(plane, 16, 22);
                resized = resize_bilinear(padded, 22, 22, kImageSize, kImageSize);
                break;
            }
            case PreprocessRule::passthrough: resized = plane; break;
            }
            for (auto& v : resized) v = std::clamp(v / 127.5f - 1.0f, -1.0f, 1.0f);
            // Grayscale fills all three channels with the same plane.
            const std::size_t targets = raw.channels == 1 ? kImageChannels : 1;
            for (std::size_t t = 0; t < targets; ++t) {
                const std::size_t ch = raw.channels == 1 ? t : c;
                std::copy(resized.begin(), resized.end(), out.begin() + (n * kImageChannels + ch) * plane_out);
            }
        }
    }
    return out;
}

ImageSet load_idx_images(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                         PreprocessRule rule, Domain domain)
{
    auto raw = RawImages::from_idx(load_idx(images));
    ImageSet set;
    set.domain = domain;
    set.count = raw.count;
    set.pixels = preprocess(raw, rule);
    if (labels) {
        auto arr = load_idx(*labels);
        if (arr.dims.size() != 1 || arr.dims[0] != raw.count)
            throw std::invalid_argument("label file " + labels->string() + " does not match image count " +
                                        std::to_string(raw.count));
        set.labels.assign(arr.data.begin(), arr.data.end());
    }
    return set;
}

// ------------------------------------------------------------------ splits

LabelSplit semisup_split(const ImageSet& set, std::size_t per_class, std::size_t categories, std::uint64_t seed)
{
    if (!set.labeled()) throw std::invalid_argument("semisup_split needs a labeled set");
    set.check_labels(categories);
    std::vector<std::vector<std::size_t>> by_class(categories);
    for (std::size_t i = 0; i < set.count; ++i) by_class[static_cast<std::size_t>(set.labels[i])].push_back(i);
    for (std::size_t k = 0; k < categories; ++k)
        if (by_class[k].size() < per_class)
            throw std::invalid_argument("class " + std::to_string(k) + " has only " +
                                        std::to_string(by_class[k].size()) + " samples, " +
                                        std::to_string(per_class) + " requested");
    std::mt19937_64 rng(seed);
    LabelSplit split;
    std::vector<bool> taken(set.count, false);
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = 0; j < per_class; ++j) {
            split.labeled.push_back(members[j]);
            taken[members[j]] = true;
        }
    }
    for (std::size_t i = 0; i < set.count; ++i)
        if (!taken[i]) split.unlabeled.push_back(i);
    return split;
}

// --------------------------------------------------------------- synthetic

SynthStyle parse_synth_style(std::string_view name)
{
    if (name == "shapes") return SynthStyle::shapes;
    if (name == "digits") return SynthStyle::digits;
    throw std::invalid_argument("unknown synthetic style '" + std::string(name) + "'");
}

SynthPolarity parse_synth_polarity(std::string_view name)
{
    if (name == "dark-on-light") return SynthPolarity::dark_on_light;
    if (name == "light-on-dark") return SynthPolarity::light_on_dark;
    throw std::invalid_argument("unknown synthetic polarity '" + std::string(name) + "'");
}

std::string_view to_string(SynthPolarity p)
{
    return p == SynthPolarity::dark_on_light ? "dark-on-light" : "light-on-dark";
}

namespace {

struct Box {
    double x0, x1, y0, y1;
    bool contains(double u, double v) const { return u >= x0 && u <= x1 && v >= y0 && v <= y1; }
};

// Seven-segment glyphs in the unit square.
bool digit_covers(int digit, double u, double v, double t)
{
    constexpr double L = 0.2, R = 0.8, Tp = 0.05, B = 0.95, M = 0.5;
    const std::array<Box, 7> seg{{
        {L, R, Tp, Tp + t},          // a
        {R - t, R, Tp, M},           // b
        {R - t, R, M, B},            // c
        {L, R, B - t, B},            // d
        {L, L + t, M, B},            // e
        {L, L + t, Tp, M},           // f
        {L, R, M - t / 2, M + t / 2} // g
    }};
    static constexpr std::array<const char*, 10> on{"abcdef", "bc", "abged", "abgcd", "fgbc",
                                                    "afgcd",  "afgedc", "abc", "abcdefg", "abcdfg"};
    for (const char* s = on[static_cast<std::size_t>(digit)]; *s; ++s)
        if (seg[static_cast<std::size_t>(*s - 'a')].contains(u, v)) return true;
    return false;
}

bool shape_covers(int shape, double u, double v, double t)
{
    const double x = u - 0.5, y = v - 0.5;
    const double r = std::hypot(x, y);
    switch (shape) {
    case 0: return r <= 0.42;                                                      // disc
    case 1: return std::abs(x) <= 0.36 && std::abs(y) <= 0.36;                     // square
    case 2: return y <= 0.38 && y >= -0.4 && std::abs(x) <= (y + 0.4) * 0.55;      // triangle
    case 3: return (std::abs(x) <= t && std::abs(y) <= 0.42) || (std::abs(y) <= t && std::abs(x) <= 0.42); // plus
    case 4: return r <= 0.42 && r >= 0.42 - 2 * t;                                 // ring
    case 5: return std::abs(std::abs(x) - std::abs(y)) <= t * 1.2 && r <= 0.5;     // cross
    case 6: return std::abs(y) <= 1.2 * t && std::abs(x) <= 0.44;                  // bar
    case 7: return std::abs(x) + std::abs(y) <= 0.44;                              // diamond
    case 8: return (y <= -0.42 + 2 * t && y >= -0.42 && std::abs(x) <= 0.42) || (std::abs(x) <= t && std::abs(y) <= 0.42); // T
    case 9: return (std::abs(x) <= 0.36 && std::abs(y) <= 0.36) && !(std::abs(x) <= 0.36 - 2 * t && std::abs(y) <= 0.36 - 2 * t); // frame
    }
    return false;
}

struct GlyphPose {
    double cx, cy, size, angle, stroke;
};

GlyphPose random_pose(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> shift(-3.0, 3.0), size(19.0, 25.0), angle(-0.18, 0.18),
        stroke(0.11, 0.16);
    return {16.0 + shift(rng), 16.0 + shift(rng), size(rng), angle(rng), stroke(rng)};
}

// Fractional coverage of each pixel, 3×3 supersampled.
std::array<double, kImageSize * kImageSize> render_coverage(SynthStyle style, int cls, const GlyphPose& pose)
{
    std::array<double, kImageSize * kImageSize> cov{};
    const double ca = std::cos(pose.angle), sa = std::sin(pose.angle);
    for (std::size_t py = 0; py < kImageSize; ++py)
        for (std::size_t px = 0; px < kImageSize; ++px) {
            int hits = 0;
            for (int sy = 0; sy < 3; ++sy)
                for (int sx = 0; sx < 3; ++sx) {
                    const double x = px + (sx + 0.5) / 3.0 - pose.cx;
                    const double y = py + (sy + 0.5) / 3.0 - pose.cy;
                    const double u = (ca * x + sa * y) / pose.size + 0.5;
                    const double v = (-sa * x + ca * y) / pose.size + 0.5;
                    const bool in = style == SynthStyle::digits ? digit_covers(cls, u, v, pose.stroke)
                                                                : shape_covers(cls, u, v, pose.stroke);
                    hits += in ? 1 : 0;
                }
            cov[py * kImageSize + px] = hits / 9.0;
        }
    return cov;
}

float quantize(double v)
{
    const double byte = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<float>(byte / 127.5 - 1.0);
}

void render_domain_a(SynthStyle style, int cls, std::mt19937_64& rng, float* out)
{
    const auto cov = render_coverage(style, cls, random_pose(rng));
    std::uniform_real_distribution<double> bg(0.0, 0.22), fg(0.6, 1.0);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::array<double, 3> back{bg(rng), bg(rng), bg(rng)}, front{fg(rng), fg(rng), fg(rng)};
    const std::size_t plane = kImageSize * kImageSize;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out[c * plane + i] = quantize(back[c] + (front[c] - back[c]) * cov[i] + noise(rng));
}

void render_domain_b(SynthStyle style, SynthPolarity polarity, int cls, std::mt19937_64& rng, float* out)
{
    const auto cov = render_coverage(style, cls, random_pose(rng));
    const bool light_ink = polarity == SynthPolarity::light_on_dark;
    std::uniform_real_distribution<double> bg(light_ink ? 0.15 : 0.75, light_ink ? 0.45 : 0.92),
        ink(light_ink ? 0.55 : 0.05, light_ink ? 0.9 : 0.25), freq(2.0, 4.5), phase(0.0, 6.2832),
        dir(0.0, std::numbers::pi);
    const double amplitude = light_ink ? 0.1 : 0.08;
    std::normal_distribution<double> noise(0.0, 0.03);
    const double back = bg(rng), front = ink(rng), f = freq(rng), ph = phase(rng), th = dir(rng);
    const double kx = std::cos(th) * f * 2.0 * std::numbers::pi / kImageSize;
    const double ky = std::sin(th) * f * 2.0 * std::numbers::pi / kImageSize;
    const std::size_t plane = kImageSize * kImageSize;
    for (std::size_t y = 0; y < kImageSize; ++y)
        for (std::size_t x = 0; x < kImageSize; ++x) {
            const std::size_t i = y * kImageSize + x;
            const double texture = amplitude * std::sin(kx * x + ky * y + ph);
            const double v = quantize((back + texture) * (1.0 - cov[i]) + front * cov[i] + noise(rng));
            for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<float>(v);
        }
}

ImageSet render_set(const SynthOptions& o, Domain d, std::size_t per_class, std::mt19937_64& rng)
{
    ImageSet set;
    set.domain = d;
    set.count = per_class * o.categories;
    set.pixels.resize(set.count * ImageSet::kImageValues);
    set.labels.resize(set.count);
    // Classes interleave so any prefix is roughly balanced.
    for (std::size_t i = 0; i < set.count; ++i) {
        const int cls = static_cast<int>(i % o.categories);
        set.labels[i] = cls;
        float* out = set.pixels.data() + i * ImageSet::kImageValues;
        if (d == Domain::A)
            render_domain_a(o.style, cls, rng, out);
        else
            render_domain_b(o.style, o.polarity_b, cls, rng, out);
    }
    return set;
}

} // namespace

DatasetPair synth_pair(const SynthOptions& o)
{
    if (o.categories < 2) throw std::invalid_argument("synthetic data needs at least 2 categories");
    if (o.categories > 10) throw std::invalid_argument("synthetic glyph sets provide at most 10 categories");
    if (o.train_per_class < 1 || o.test_per_class < 1)
        throw std::invalid_argument("synthetic data needs at least one sample per class");
    DatasetPair pair;
    pair.categories = o.categories;
    // Independent streams per domain: B never copies an A sample.
    std::mt19937_64 rng_a(o.seed * 2 + 1), rng_b(o.seed * 2 + 2);
    pair.a.train = render_set(o, Domain::A, o.train_per_class, rng_a);
    pair.a.test = render_set(o, Domain::A, o.test_per_class, rng_a);
    pair.b.train = render_set(o, Domain::B, o.train_per_class, rng_b);
    pair.b.test = render_set(o, Domain::B, o.test_per_class, rng_b);
    return pair;
}

void export_idx(const ImageSet& set, const std::filesystem::path& images, const std::filesystem::path& labels)
{
    IdxArray img;
    img.dims = {static_cast<std::uint32_t>(set.count), static_cast<std::uint32_t>(kImageSize),
                static_cast<std::uint32_t>(kImageSize), static_cast<std::uint32_t>(kImageChannels)};
    img.data.resize(set.count * ImageSet::kImageValues);
    const std::size_t plane = kImageSize * kImageSize;
    for (std::size_t n = 0; n < set.count; ++n)
        for (std::size_t c = 0; c < kImageChannels; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const float v = set.pixels[n * ImageSet::kImageValues + c * plane + i];
                img.data[(n * plane + i) * kImageChannels + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f)));
            }
    write_idx(images, img);
    if (set.labeled()) {
        IdxArray lab;
        lab.dims = {static_cast<std::uint32_t>(set.count)};
        for (auto l : set.labels) lab.data.push_back(static_cast<std::uint8_t>(l));
        write_idx(labels, lab);
    }
}

} // namespace cdaae
