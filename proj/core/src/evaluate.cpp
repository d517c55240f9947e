#include "cdaae/evaluate.hpp"

#include "cdaae/ops.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace cdaae {

std::vector<int> argmax_rows(const Tensor& probs)
{
    if (probs.rank() != 2) throw DimensionError("argmax_rows expects N×K, got " + to_string(probs.shape()));
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    auto v = probs.values();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (v[i * k + j] > v[i * k + best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth)
{
    if (predicted.size() != truth.size())
        throw std::invalid_argument("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                    std::to_string(truth.size()) + " labels");
    if (truth.empty()) throw std::invalid_argument("accuracy over an empty set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

template <class Fn>
std::vector<float> chunked(const ImageSet& set, std::size_t chunk, Fn&& forward)
{
    std::vector<float> out;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < set.count; begin += chunk) {
        const std::size_t end = std::min(set.count, begin + chunk);
        idx.clear();
        for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
        auto probs = forward(make_batch(set, idx, false).images);
        out.insert(out.end(), probs.values().begin(), probs.values().end());
    }
    return out;
}

std::vector<int> argmax_flat(const std::vector<float>& probs, std::size_t k)
{
    return argmax_rows(Tensor({probs.size() / k, k}, probs));
}

} // namespace

std::vector<float> classify(const ContentClassifier& classifier, const ImageSet& set, std::size_t chunk)
{
    return chunked(set, chunk, [&](const Tensor& x) { return classifier.forward(x, Mode::eval); });
}

std::vector<float> encode_content_probs(const NetworkSet& nets, const ImageSet& set, std::size_t chunk)
{
    return chunked(set, chunk, [&](const Tensor& x) { return nets.encode_content(x, Mode::eval); });
}

double content_accuracy(const NetworkSet& nets, const ImageSet& set)
{
    if (!set.labeled()) throw std::invalid_argument("content_accuracy needs labels");
    return accuracy(argmax_flat(encode_content_probs(nets, set), nets.prior().categories), set.labels);
}

// ------------------------------------------------------------------ oracle

std::vector<int> Oracle::predict(const Tensor& images) const
{
    return argmax_rows(classifier->forward(images, Mode::eval));
}

Oracle train_oracle_classifier(const DomainSplit& split, Domain domain, const OracleOptions& options)
{
    if (!split.train.labeled() || split.train.count == 0)
        throw std::invalid_argument("oracle training needs a labeled, nonempty training split");
    if (options.batch_size < 2) throw std::invalid_argument("oracle batch size must be at least 2");
    const std::size_t k = options.net.prior.categories;
    split.train.check_labels(k);

    Oracle oracle;
    oracle.domain = domain;
    oracle.classifier = std::make_unique<ContentClassifier>(options.net, options.seed);
    Adam<float> opt(oracle.classifier->parameters(), options.adam);
    std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<std::size_t> pick(0, split.train.count - 1);
    std::vector<std::size_t> idx(options.batch_size);
    for (std::size_t step = 0; step < options.steps; ++step) {
        for (auto& i : idx) i = pick(rng);
        auto batch = make_batch(split.train, idx, true);
        for (auto [name, p] : opt.parameters()) p.zero_grad();
        auto probs = oracle.classifier->forward(batch.images, Mode::train);
        backward(cross_entropy(probs, one_hot<float>(*batch.labels, k)));
        opt.step();
    }
    if (split.test.count > 0 && split.test.labeled())
        oracle.test_accuracy = accuracy(argmax_flat(classify(*oracle.classifier, split.test), k), split.test.labels);
    return oracle;
}

// ---------------------------------------------------------------- transfer

std::string_view to_string(Scenario s)
{
    switch (s) {
    case Scenario::prior: return "prior";
    case Scenario::self: return "self";
    case Scenario::cross: return "cross";
    }
    return "?";
}

Scenario parse_scenario(std::string_view name)
{
    if (name == "prior") return Scenario::prior;
    if (name == "self") return Scenario::self;
    if (name == "cross") return Scenario::cross;
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

TransferResult transfer_accuracy(const NetworkSet& nets, const Oracle& oracle, Scenario scenario, Domain target,
                                 const DatasetPair& data, std::size_t per_class, std::uint64_t seed)
{
    if (oracle.domain != target)
        throw std::invalid_argument("scenario targets domain " + std::string(to_string(target)) +
                                    " but the oracle was trained on domain " + std::string(to_string(oracle.domain)));
    if (per_class == 0) throw std::invalid_argument("per_class must be positive");
    const std::size_t k = nets.prior().categories;
    std::mt19937_64 rng(seed);
    constexpr std::size_t kChunk = 200;

    std::vector<int> predicted, truth;
    if (scenario == Scenario::prior) {
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t done = 0; done < per_class; done += kChunk) {
                const std::size_t n = std::min(kChunk, per_class - done);
                std::vector<float> onehot(n * k, 0.0f);
                for (std::size_t i = 0; i < n; ++i) onehot[i * k + c] = 1.0f;
                auto style = nets.prior().sample_style<float>(n, target, rng);
                auto images = nets.generate(LatentCode<float>{Tensor({n, k}, onehot), style, target}, Mode::eval);
                auto p = oracle.predict(images);
                predicted.insert(predicted.end(), p.begin(), p.end());
                truth.insert(truth.end(), n, static_cast<int>(c));
            }
    } else {
        const Domain source = scenario == Scenario::self ? target : other(target);
        const auto& test = data.domain(source).test;
        if (!test.labeled() || test.count == 0)
            throw std::invalid_argument("domain " + std::string(to_string(source)) + " has no labeled test images");
        std::vector<std::vector<std::size_t>> by_class(k);
        for (std::size_t i = 0; i < test.count; ++i) by_class.at(static_cast<std::size_t>(test.labels[i])).push_back(i);
        std::vector<std::size_t> order;
        for (std::size_t c = 0; c < k; ++c) {
            if (by_class[c].empty())
                throw std::invalid_argument("test split of domain " + std::string(to_string(source)) +
                                            " has no class " + std::to_string(c));
            for (std::size_t j = 0; j < per_class; ++j) order.push_back(by_class[c][j % by_class[c].size()]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += kChunk) {
            std::span<const std::size_t> idx(order.data() + begin, std::min(kChunk, order.size() - begin));
            auto batch = make_batch(test, idx, true);
            auto images = nets.transform(batch.images, target, std::nullopt, rng, Mode::eval);
            auto p = oracle.predict(images);
            predicted.insert(predicted.end(), p.begin(), p.end());
            truth.insert(truth.end(), batch.labels->begin(), batch.labels->end());
        }
    }
    return {accuracy(predicted, truth), truth.size()};
}

const EvalReport::Entry& EvalReport::at(std::string_view name) const
{
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw std::out_of_range("no evaluation entry " + std::string(name));
}

void EvalReport::write_csv(std::ostream& os) const
{
    os << "scenario,accuracy,samples\n";
    char buf[32];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%.6f", e.accuracy);
        os << e.name << ',' << buf << ',' << e.samples << '\n';
    }
}

void EvalReport::write_table(std::ostream& os) const
{
    os << "scenario  accuracy  samples\n";
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%-8s  %7.2f%%  %7zu\n", e.name.c_str(), 100.0 * e.accuracy, e.samples);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "oracle A test accuracy %.2f%%, oracle B %.2f%%\n", 100.0 * oracle_a_accuracy,
                  100.0 * oracle_b_accuracy);
    os << buf;
}

EvalReport evaluate_transfer(const NetworkSet& nets, const Oracle& oracle_a, const Oracle& oracle_b,
                             const DatasetPair& data, std::size_t per_class, std::uint64_t seed)
{
    EvalReport report;
    report.oracle_a_accuracy = oracle_a.test_accuracy;
    report.oracle_b_accuracy = oracle_b.test_accuracy;
    struct Row {
        const char* name;
        Scenario scenario;
        Domain target;
    };
    const Row rows[] = {{"P2A", Scenario::prior, Domain::A}, {"A2A", Scenario::self, Domain::A},
                        {"B2A", Scenario::cross, Domain::A}, {"P2B", Scenario::prior, Domain::B},
                        {"B2B", Scenario::self, Domain::B},  {"A2B", Scenario::cross, Domain::B}};
    std::uint64_t s = seed;
    for (const auto& r : rows) {
        const auto& oracle = r.target == Domain::A ? oracle_a : oracle_b;
        auto res = transfer_accuracy(nets, oracle, r.scenario, r.target, data, per_class, s++);
        report.entries.push_back({r.name, res.accuracy, res.samples});
    }
    return report;
}

// ------------------------------------------------------------- compression

CompressionRatio compression_ratio(const ImageDims& image, std::size_t content_dims, std::size_t content_bits_per_dim,
                                   std::size_t style_dims, std::size_t style_bits_per_dim)
{
    if (image.height == 0 || image.width == 0 || image.channels == 0 || image.bits_per_value == 0)
        throw std::invalid_argument("image dimensions must be positive");
    CompressionRatio r;
    r.image_bits = static_cast<std::uint64_t>(image.height) * image.width * image.channels * image.bits_per_value;
    r.code_bits = static_cast<std::uint64_t>(content_dims) * content_bits_per_dim +
                  static_cast<std::uint64_t>(style_dims) * style_bits_per_dim;
    if (r.code_bits == 0) throw std::domain_error("latent code occupies zero bits");
    return r;
}

// ------------------------------------------------------------------- grids

std::array<std::uint8_t, 3> RgbImage::at(std::size_t x, std::size_t y) const
{
    if (x >= width || y >= height) throw std::out_of_range("pixel outside image");
    const auto* p = pixels.data() + (y * width + x) * 3;
    return {p[0], p[1], p[2]};
}

std::uint8_t to_pixel(float v)
{
    const double p = std::round((static_cast<double>(v) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

RgbImage image_grid(const Tensor& images, const GridOptions& options)
{
    check_image_batch(images);
    if (options.rows == 0 || options.cols == 0) throw std::invalid_argument("grid needs at least one row and column");
    if (options.upscale == 0) throw std::invalid_argument("upscale must be at least 1");
    const std::size_t n = images.dim(0);
    if (n != options.rows * options.cols)
        throw std::invalid_argument("grid of " + std::to_string(options.rows) + "x" + std::to_string(options.cols) +
                                    " needs " + std::to_string(options.rows * options.cols) + " images, got " +
                                    std::to_string(n));
    const std::size_t cell = kImageSize * options.upscale;
    const std::size_t sep_x = options.separator_after_first_column && options.cols > 1 ? options.separator_width : 0;
    const std::size_t sep_y = options.separator_after_first_row && options.rows > 1 ? options.separator_width : 0;

    RgbImage out;
    out.width = options.cols * cell + sep_x;
    out.height = options.rows * cell + sep_y;
    out.pixels.assign(out.width * out.height * 3, 0);
    auto put = [&](std::size_t x, std::size_t y, std::array<std::uint8_t, 3> rgb) {
        std::copy(rgb.begin(), rgb.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>((y * out.width + x) * 3));
    };
    for (std::size_t x = cell; x < cell + sep_x; ++x)
        for (std::size_t y = 0; y < out.height; ++y) put(x, y, options.separator_color);
    for (std::size_t y = cell; y < cell + sep_y; ++y)
        for (std::size_t x = 0; x < out.width; ++x) put(x, y, options.separator_color);

    auto v = images.values();
    const std::size_t plane = kImageSize * kImageSize;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = i / options.cols, c = i % options.cols;
        const std::size_t x0 = c * cell + (c > 0 ? sep_x : 0);
        const std::size_t y0 = r * cell + (r > 0 ? sep_y : 0);
        const float* img = v.data() + i * kImageChannels * plane;
        for (std::size_t y = 0; y < cell; ++y)
            for (std::size_t x = 0; x < cell; ++x) {
                const std::size_t src = (y / options.upscale) * kImageSize + x / options.upscale;
                put(x0 + x, y0 + y, {to_pixel(img[src]), to_pixel(img[plane + src]), to_pixel(img[2 * plane + src])});
            }
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

} // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image)
{
    if (image.pixels.size() != image.width * image.height * 3) throw std::invalid_argument("RGB buffer size mismatch");
    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG encoding failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path)
{
    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file) throw std::runtime_error("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    RgbImage out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG decoding failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.pixels.resize(out.width * out.height * 3);
    for (std::size_t y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + y * out.width * 3, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace cdaae
