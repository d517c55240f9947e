#include "cli.hpp"

#include "cdaae/adapt.hpp"
#include "cdaae/config.hpp"
#include "cdaae/evaluate.hpp"
#include "cdaae/ops.hpp"
#include "cdaae/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace cdaae::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "MANIFEST";
constexpr const char* kLock = ".lock";

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::optional<std::size_t> steps;

    std::size_t styles = 10;
    std::string domain = "both";
    std::size_t transform_styles = 6;
    std::size_t inputs = 8;
    std::string from = "A";
    std::string to;
    std::string input;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool separator_column = false;
    bool separator_row = false;
    std::size_t upscale = 1;
};

Domain parse_domain(const std::string& s)
{
    if (s == "A" || s == "a") return Domain::A;
    if (s == "B" || s == "b") return Domain::B;
    throw std::invalid_argument("unknown domain '" + s + "' (expected A or B)");
}

fs::path data_root()
{
    const char* env = std::getenv("CDAAE_DATA_ROOT");
    return env && *env ? fs::path(env) : fs::current_path();
}

std::string read_text(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

ExperimentConfig config_for_training(const Options& o)
{
    ExperimentConfig cfg = o.config.empty() ? parse_config("") : parse_config(read_text(o.config));
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.steps) cfg.train.steps = *o.steps;
    cfg.adapt.train = cfg.train;
    cfg.adapt.validate();
    return cfg;
}

// Model-consuming commands take the configuration stored in the checkpoint
// unless --config overrides it.
ExperimentConfig config_for_checkpoint(const Options& o, const Checkpoint& ckpt)
{
    ExperimentConfig cfg;
    if (!o.config.empty())
        cfg = parse_config(read_text(o.config));
    else
        cfg = parse_config(checkpoint_config_text(ckpt));
    cfg.train.net = checkpoint_net_config(ckpt);
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.adapt.train = cfg.train;
    return cfg;
}

Checkpoint require_checkpoint(const Options& o)
{
    if (o.checkpoint.empty()) throw std::invalid_argument("this command needs --checkpoint");
    if (!fs::exists(o.checkpoint)) throw std::invalid_argument("checkpoint " + o.checkpoint + " does not exist");
    return read_checkpoint(o.checkpoint);
}

std::unique_ptr<NetworkSet> load_model(const Checkpoint& ckpt, const ExperimentConfig& cfg)
{
    auto nets = std::make_unique<NetworkSet>(cfg.train.net, cfg.train.seed);
    load_network(ckpt, *nets);
    return nets;
}

Checkpoint network_checkpoint(const NetworkSet& nets, const std::string& config_text)
{
    Checkpoint ckpt;
    const auto& net = nets.config();
    // Same keys as the trainer's metadata, minus optimizer and RNG state.
    const nlohmann::json meta = {
        {"kind", "adapt"},
        {"config", config_text},
        {"net", {{"width", net.width},
                 {"categories", net.prior.categories},
                 {"style_dim_a", net.prior.style_dim_a},
                 {"style_dim_b", net.prior.style_dim_b}}},
    };
    ckpt.metadata = meta.dump();
    store_tensors(ckpt, "param/", nets.parameters(ParamGroup::all));
    store_tensors(ckpt, "buffer/", nets.buffers());
    return ckpt;
}

void save_samples(const fs::path& path, const Tensor& images)
{
    check_image_batch(images);
    const std::size_t n = images.dim(0), plane = kImageSize * kImageSize;
    IdxArray arr;
    arr.dims = {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(kImageSize),
                static_cast<std::uint32_t>(kImageSize), static_cast<std::uint32_t>(kImageChannels)};
    arr.data.reserve(n * ImageSet::kImageValues);
    auto v = images.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t c = 0; c < kImageChannels; ++c)
                arr.data.push_back(to_pixel(v[(i * kImageChannels + c) * plane + p]));
    write_idx(path, arr);
}

int cmd_train(const Options& o, const fs::path& out, std::ostream& log)
{
    const auto cfg = config_for_training(o);
    const auto text = emit_config(cfg);
    write_text(out / "config.resolved", text);
    write_text(out / "seed", std::to_string(cfg.train.seed) + "\n");
    const auto data = load_data(cfg, data_root());
    RunOptions ro;
    ro.out_dir = out;
    ro.config_text = text;
    if (!o.checkpoint.empty()) ro.resume_from = fs::path(o.checkpoint);
    ro.on_step = [&](std::size_t step, const LossReport& r) {
        if (step % 100 != 0 && step != cfg.train.steps) return;
        log << "step " << step;
        for (const auto& [name, v] : r.terms()) log << ' ' << name << '=' << v;
        log << '\n';
    };
    auto result = train_run(cfg.train, data, ro);
    log << "trained " << result.steps << " steps; checkpoint " << result.final_checkpoint.string() << '\n';
    log << "content accuracy A " << content_accuracy(*load_model(read_checkpoint(result.final_checkpoint), cfg),
                                                     data.a.test)
        << '\n';
    return 0;
}

int cmd_adapt(const Options& o, const fs::path& out, std::ostream& log)
{
    const auto cfg = config_for_training(o);
    const auto text = emit_config(cfg);
    write_text(out / "config.resolved", text);
    write_text(out / "seed", std::to_string(cfg.train.seed) + "\n");
    const auto data = load_data(cfg, data_root());
    AdaptHooks hooks;
    hooks.on_epoch = [&](const AdaptEpoch& e) {
        log << "epoch " << e.epoch << " t=" << e.threshold << " |T'|=" << e.pseudo_labeled
            << " target accuracy=" << e.accuracy << '\n';
    };
    auto result = cfg.adapt.boosted ? adapt_boosted(cfg.adapt, data, hooks) : adapt_basic(cfg.adapt, data, hooks);
    std::ofstream trace(out / "trace.csv");
    write_trace_csv(trace, cfg.adapt, result);
    write_checkpoint(out / "final.bin", network_checkpoint(*result.nets, text));
    log << "source-only accuracy " << result.baseline_accuracy << ", adapted " << result.final_accuracy() << '\n';
    return 0;
}

int cmd_generate(const Options& o, const fs::path& out, std::ostream& log)
{
    const auto ckpt = require_checkpoint(o);
    const auto cfg = config_for_checkpoint(o, ckpt);
    write_text(out / "config.resolved", emit_config(cfg));
    write_text(out / "seed", std::to_string(cfg.train.seed) + "\n");
    auto nets = load_model(ckpt, cfg);
    const std::size_t k = cfg.train.net.prior.categories;
    if (o.styles == 0) throw std::invalid_argument("--styles must be positive");
    std::vector<Domain> domains;
    if (o.domain == "both")
        domains = {Domain::A, Domain::B};
    else
        domains = {parse_domain(o.domain)};
    std::mt19937_64 rng(cfg.train.seed);
    for (Domain d : domains) {
        // Row = category, column = one fixed style draw.
        const auto styles = nets->prior().sample_style<float>(o.styles, d, rng);
        const std::size_t sd = styles.dim(1);
        std::vector<float> content(k * o.styles * k, 0.0f), style(k * o.styles * sd);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < o.styles; ++c) {
                const std::size_t i = r * o.styles + c;
                content[i * k + r] = 1.0f;
                std::copy_n(styles.values().begin() + static_cast<std::ptrdiff_t>(c * sd), sd, style.begin() + static_cast<std::ptrdiff_t>(i * sd));
            }
        auto images = nets->generate(
            LatentCode<float>{Tensor({k * o.styles, k}, content), Tensor({k * o.styles, sd}, style), d}, Mode::eval);
        const std::string tag(to_string(d));
        GridOptions g;
        g.rows = k;
        g.cols = o.styles;
        write_png(out / ("generate_" + tag + ".png"), image_grid(images, g));
        save_samples(out / ("generate_" + tag + ".idx"), images);
        log << "wrote " << (out / ("generate_" + tag + ".png")).string() << " (" << k << "x" << o.styles << ")\n";
    }
    return 0;
}

int cmd_transform(const Options& o, const fs::path& out, std::ostream& log)
{
    const auto ckpt = require_checkpoint(o);
    const auto cfg = config_for_checkpoint(o, ckpt);
    write_text(out / "config.resolved", emit_config(cfg));
    write_text(out / "seed", std::to_string(cfg.train.seed) + "\n");
    auto nets = load_model(ckpt, cfg);
    const Domain from = parse_domain(o.from);
    const Domain to = o.to.empty() ? other(from) : parse_domain(o.to);
    const std::size_t styles = o.transform_styles;
    if (o.inputs == 0 || styles == 0) throw std::invalid_argument("--inputs and --styles must be positive");
    const auto data = load_data(cfg, data_root());
    const auto& test = data.domain(from).test;
    if (test.count < o.inputs)
        throw std::invalid_argument("domain " + o.from + " test split has only " + std::to_string(test.count) +
                                    " images");
    std::vector<std::size_t> idx(o.inputs);
    for (std::size_t i = 0; i < o.inputs; ++i) idx[i] = i * (test.count / o.inputs);
    auto batch = make_batch(test, idx, false);
    std::mt19937_64 rng(cfg.train.seed);
    auto content = nets->encode_content(batch.images, Mode::eval);
    // Column j reuses one style draw for every row.
    std::vector<Tensor> columns{batch.images};
    for (std::size_t j = 0; j < styles; ++j) {
        auto one = nets->prior().sample_style<float>(1, to, rng);
        std::vector<float> rep;
        for (std::size_t i = 0; i < o.inputs; ++i) rep.insert(rep.end(), one.values().begin(), one.values().end());
        columns.push_back(nets->generate(
            LatentCode<float>{content, Tensor({o.inputs, one.dim(1)}, rep), to}, Mode::eval));
    }
    // Interleave into row-major order: input, then its transforms.
    const std::size_t cols = styles + 1;
    std::vector<float> grid;
    grid.reserve(o.inputs * cols * ImageSet::kImageValues);
    for (std::size_t i = 0; i < o.inputs; ++i)
        for (const auto& col : columns) {
            auto v = col.values().subspan(i * ImageSet::kImageValues, ImageSet::kImageValues);
            grid.insert(grid.end(), v.begin(), v.end());
        }
    Tensor images({o.inputs * cols, kImageChannels, kImageSize, kImageSize}, grid);
    GridOptions g;
    g.rows = o.inputs;
    g.cols = cols;
    g.separator_after_first_column = true;
    const auto name = "transform_" + std::string(to_string(from)) + "2" + std::string(to_string(to));
    write_png(out / (name + ".png"), image_grid(images, g));
    save_samples(out / (name + ".idx"), images);
    log << "wrote " << (out / (name + ".png")).string() << " (" << o.inputs << " inputs x " << styles
        << " styles)\n";
    return 0;
}

int cmd_eval(const Options& o, const fs::path& out, std::ostream& log)
{
    const auto ckpt = require_checkpoint(o);
    const auto cfg = config_for_checkpoint(o, ckpt);
    write_text(out / "config.resolved", emit_config(cfg));
    write_text(out / "seed", std::to_string(cfg.eval.seed) + "\n");
    auto nets = load_model(ckpt, cfg);
    const auto data = load_data(cfg, data_root());
    const auto oo = cfg.oracle_options();
    auto oracle_a = train_oracle_classifier(data.a, Domain::A, oo);
    auto oracle_b = train_oracle_classifier(data.b, Domain::B, oo);
    auto report = evaluate_transfer(*nets, oracle_a, oracle_b, data, cfg.eval.per_class, cfg.eval.seed);
    std::ofstream csv(out / "eval.csv");
    report.write_csv(csv);
    std::ostringstream table;
    report.write_table(table);
    write_text(out / "eval.txt", table.str());
    log << table.str();
    return 0;
}

int cmd_grid(const Options& o, const fs::path& out, std::ostream& log)
{
    if (o.input.empty()) throw std::invalid_argument("grid needs --input");
    const auto raw = RawImages::from_idx(load_idx(o.input));
    const auto pixels = preprocess(raw, PreprocessRule::passthrough);
    Tensor images({raw.count, kImageChannels, kImageSize, kImageSize}, pixels);
    GridOptions g;
    g.cols = o.cols ? o.cols : raw.count;
    g.rows = o.rows ? o.rows : (raw.count + g.cols - 1) / g.cols;
    g.separator_after_first_column = o.separator_column;
    g.separator_after_first_row = o.separator_row;
    g.upscale = o.upscale;
    const auto path = out / (fs::path(o.input).stem().string() + ".png");
    write_png(path, image_grid(images, g));
    write_text(out / "seed", "0\n");
    log << "wrote " << path.string() << '\n';
    return 0;
}

} // namespace

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 initialisation failed");
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

void write_manifest(const fs::path& dir)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir);
        if (rel == kManifest || rel == kLock) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    std::ostringstream os;
    for (const auto& f : files)
        os << sha256_file(dir / f) << "  " << fs::file_size(dir / f) << "  " << f.generic_string() << '\n';
    write_text(dir / kManifest, os.str());
}

RunLock::RunLock(const fs::path& dir) : path_(dir / kLock)
{
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw std::runtime_error("output directory " + dir.string() + " is locked by another run (" +
                                     path_.string() + " exists)");
        throw std::runtime_error("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock()
{
    std::error_code ec;
    fs::remove(path_, ec);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Cross-domain adversarial autoencoder: training, adaptation and evaluation", "cdaae"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--config", o.config, "Config file (key = value with [sections])");
        sub->add_option("--out", o.out, "Run directory for all outputs")->required();
        sub->add_option("--seed", o.seed, "Override the configured seed");
        sub->add_option("--checkpoint", o.checkpoint,
                        needs_checkpoint ? "Model checkpoint to load" : "Checkpoint to resume from");
        sub->add_option("--steps", o.steps, "Override the configured step budget");
        sub->footer("Environment: CDAAE_DATA_ROOT sets the directory IDX paths are relative to.");
    };
    auto* train = app.add_subcommand("train", "Train the networks (supervised or semi-supervised)");
    common(train, false);
    auto* adapt = app.add_subcommand("adapt", "Domain adaptation from labeled A to unlabeled B");
    common(adapt, false);
    auto* generate = app.add_subcommand("generate", "Grid of prior samples: one row per category");
    common(generate, true);
    generate->add_option("--styles", o.styles, "Style draws (columns)");
    generate->add_option("--domain", o.domain, "A, B or both");
    auto* transform = app.add_subcommand("transform", "Cross-domain transforms of test images");
    common(transform, true);
    transform->add_option("--inputs", o.inputs, "Number of input images (rows)");
    transform->add_option("--styles", o.transform_styles, "Style draws (columns after the separator)");
    transform->add_option("--from", o.from, "Source domain of the inputs");
    transform->add_option("--to", o.to, "Target domain (default: the other one)");
    auto* eval = app.add_subcommand("eval", "Oracle-scored transfer accuracy report");
    common(eval, true);
    auto* grid = app.add_subcommand("grid", "PNG grid from stored IDX samples");
    common(grid, false);
    grid->add_option("--input", o.input, "IDX image file (N×32×32×3 or N×32×32)")->required();
    grid->add_option("--rows", o.rows, "Rows (default: derived)");
    grid->add_option("--cols", o.cols, "Columns (default: all in one row)");
    grid->add_flag("--separator-column", o.separator_column, "Red line after the first column");
    grid->add_flag("--separator-row", o.separator_row, "Red line after the first row");
    grid->add_option("--upscale", o.upscale, "Nearest-neighbour magnification");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return 2;
    }

    try {
        const fs::path dir(o.out);
        fs::create_directories(dir);
        RunLock lock(dir);
        int status = 1;
        auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "train") status = cmd_train(o, dir, out);
        else if (name == "adapt") status = cmd_adapt(o, dir, out);
        else if (name == "generate") status = cmd_generate(o, dir, out);
        else if (name == "transform") status = cmd_transform(o, dir, out);
        else if (name == "eval") status = cmd_eval(o, dir, out);
        else if (name == "grid") status = cmd_grid(o, dir, out);
        write_manifest(dir);
        return status;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << '\n';
        return 1;
    }
}

} // namespace cdaae::cli
