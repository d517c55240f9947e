#include "cdaae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cdaae {

ConfigError::ConfigError(std::size_t line, std::string key, const std::string& message)
    : std::invalid_argument("config line " + std::to_string(line) + (key.empty() ? "" : ", key '" + key + "'") +
                            ": " + message),
      line_(line), key_(std::move(key))
{
}

OracleOptions ExperimentConfig::oracle_options() const
{
    OracleOptions o;
    o.net = train.net;
    if (eval.oracle_width > 0.0) o.net.width = eval.oracle_width;
    o.steps = eval.oracle_steps;
    o.batch_size = eval.oracle_batch;
    o.seed = eval.seed;
    return o;
}

namespace {

std::string format_double(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(std::string_view s)
{
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
        throw std::invalid_argument("'" + std::string(s) + "' is not a finite number");
    return v;
}

std::uint64_t parse_uint(std::string_view s)
{
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw std::invalid_argument("'" + std::string(s) + "' is not a non-negative integer");
    return v;
}

bool parse_bool(std::string_view s)
{
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("'" + std::string(s) + "' is not true or false");
}

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Key {
    std::string section;
    std::string name;
    bool allow_empty = false;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class Access, class Check>
Key real(std::string section, std::string name, Access access, Check check, const char* requirement)
{
    return {std::move(section), std::move(name), false,
            [=](ExperimentConfig& c, std::string_view v) {
                const double x = parse_double(v);
                if (!check(x)) throw std::invalid_argument(std::string("value must be ") + requirement);
                access(c) = x;
            },
            [=](const ExperimentConfig& c) { return format_double(access(c)); }};
}

template <class Access>
Key count(std::string section, std::string name, Access access, std::uint64_t minimum)
{
    return {std::move(section), std::move(name), false,
            [=](ExperimentConfig& c, std::string_view v) {
                const auto x = parse_uint(v);
                if (x < minimum) throw std::invalid_argument("value must be at least " + std::to_string(minimum));
                access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(x);
            },
            [=](const ExperimentConfig& c) { return std::to_string(access(c)); }};
}

template <class Access>
Key text(std::string section, std::string name, Access access)
{
    return {std::move(section), std::move(name), true,
            [=](ExperimentConfig& c, std::string_view v) { access(c) = std::string(v); },
            [=](const ExperimentConfig& c) { return access(c); }};
}

bool nonneg(double x) { return x >= 0.0; }
bool positive(double x) { return x > 0.0; }
bool unit(double x) { return x >= 0.0 && x <= 1.0; }
bool unit_open(double x) { return x >= 0.0 && x < 1.0; }

#define CDAAE_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

std::vector<Key> make_keys()
{
    std::vector<Key> k;
    k.push_back({"train", "mode", false,
                 [](ExperimentConfig& c, std::string_view v) { c.train.mode = parse_train_mode(v); },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.train.mode)); }});
    k.push_back(count("train", "batch_size", CDAAE_FIELD(train.batch_size), 2));
    k.push_back(count("train", "steps", CDAAE_FIELD(train.steps), 1));
    k.push_back(real("train", "lr_model", CDAAE_FIELD(train.lr_model), positive, "positive"));
    k.push_back(real("train", "lr_disc", CDAAE_FIELD(train.lr_disc), positive, "positive"));
    k.push_back(real("train", "adam_beta1", CDAAE_FIELD(train.adam_beta1), unit_open, "in [0, 1)"));
    k.push_back(real("train", "adam_beta2", CDAAE_FIELD(train.adam_beta2), unit_open, "in [0, 1)"));
    k.push_back(count("train", "seed", CDAAE_FIELD(train.seed), 0));
    k.push_back(count("train", "checkpoint_every", CDAAE_FIELD(train.checkpoint_every), 0));
    k.push_back(count("train", "labels_per_class", CDAAE_FIELD(train.labels_per_class), 0));

    k.push_back(real("model", "width", CDAAE_FIELD(train.net.width), positive, "positive"));
    k.push_back(count("model", "categories", CDAAE_FIELD(train.net.prior.categories), 2));
    k.push_back(count("model", "style_dim_a", CDAAE_FIELD(train.net.prior.style_dim_a), 1));
    k.push_back(count("model", "style_dim_b", CDAAE_FIELD(train.net.prior.style_dim_b), 1));

    k.push_back(real("weights", "alpha1", CDAAE_FIELD(train.weights.alpha1), nonneg, ">= 0"));
    k.push_back(real("weights", "alpha2", CDAAE_FIELD(train.weights.alpha2), nonneg, ">= 0"));
    k.push_back(real("weights", "alpha3", CDAAE_FIELD(train.weights.alpha3), nonneg, ">= 0"));
    k.push_back(real("weights", "alpha4", CDAAE_FIELD(train.weights.alpha4), nonneg, ">= 0"));
    k.push_back(real("weights", "beta1", CDAAE_FIELD(train.weights.beta1), nonneg, ">= 0"));
    k.push_back(real("weights", "beta2", CDAAE_FIELD(train.weights.beta2), nonneg, ">= 0"));
    k.push_back(real("weights", "beta3", CDAAE_FIELD(train.weights.beta3), nonneg, ">= 0"));
    k.push_back(real("weights", "gamma1", CDAAE_FIELD(train.weights.gamma1), nonneg, ">= 0"));
    k.push_back(real("weights", "gamma2", CDAAE_FIELD(train.weights.gamma2), nonneg, ">= 0"));
    k.push_back(real("weights", "lambda1", CDAAE_FIELD(train.weights.lambda1), nonneg, ">= 0"));
    k.push_back(real("weights", "lambda2", CDAAE_FIELD(train.weights.lambda2), nonneg, ">= 0"));
    k.push_back(real("weights", "eta1", CDAAE_FIELD(train.weights.eta1), nonneg, ">= 0"));
    k.push_back(real("weights", "eta2", CDAAE_FIELD(train.weights.eta2), nonneg, ">= 0"));

    k.push_back(real("adapt", "t_init", CDAAE_FIELD(adapt.t_init), unit, "in [0, 1]"));
    k.push_back(real("adapt", "w", CDAAE_FIELD(adapt.w), positive, "positive"));
    k.push_back(count("adapt", "pretrain_steps", CDAAE_FIELD(adapt.pretrain_steps), 0));
    k.push_back(count("adapt", "epochs", CDAAE_FIELD(adapt.epochs), 0));
    k.push_back({"adapt", "boosted", false,
                 [](ExperimentConfig& c, std::string_view v) { c.adapt.boosted = parse_bool(v); },
                 [](const ExperimentConfig& c) { return std::string(c.adapt.boosted ? "true" : "false"); }});

    k.push_back({"data", "source", false,
                 [](ExperimentConfig& c, std::string_view v) {
                     if (v != "synth" && v != "idx") throw std::invalid_argument("source must be synth or idx");
                     c.data.source = std::string(v);
                 },
                 [](const ExperimentConfig& c) { return c.data.source; }});
    k.push_back({"data", "synth_style", false,
                 [](ExperimentConfig& c, std::string_view v) { c.data.synth_style = parse_synth_style(v); },
                 [](const ExperimentConfig& c) {
                     return std::string(c.data.synth_style == SynthStyle::digits ? "digits" : "shapes");
                 }});
    k.push_back({"data", "synth_polarity_b", false,
                 [](ExperimentConfig& c, std::string_view v) { c.data.synth_polarity_b = parse_synth_polarity(v); },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.data.synth_polarity_b)); }});
    k.push_back(count("data", "train_per_class", CDAAE_FIELD(data.train_per_class), 1));
    k.push_back(count("data", "test_per_class", CDAAE_FIELD(data.test_per_class), 1));
    k.push_back(count("data", "seed", CDAAE_FIELD(data.seed), 0));
    for (const char* d : {"a", "b"}) {
        const std::string p = std::string(d) + "_";
        auto dom = [d](auto& c) -> auto& { return d[0] == 'a' ? c.data.a : c.data.b; };
        k.push_back(text("data", p + "train_images", [dom](auto& c) -> auto& { return dom(c).train_images; }));
        k.push_back(text("data", p + "train_labels", [dom](auto& c) -> auto& { return dom(c).train_labels; }));
        k.push_back(text("data", p + "test_images", [dom](auto& c) -> auto& { return dom(c).test_images; }));
        k.push_back(text("data", p + "test_labels", [dom](auto& c) -> auto& { return dom(c).test_labels; }));
        k.push_back({"data", p + "rule", false,
                     [dom](ExperimentConfig& c, std::string_view v) { dom(c).rule = parse_preprocess_rule(v); },
                     [dom](const ExperimentConfig& c) { return std::string(to_string(dom(c).rule)); }});
    }

    k.push_back(count("eval", "oracle_steps", CDAAE_FIELD(eval.oracle_steps), 1));
    k.push_back(count("eval", "oracle_batch", CDAAE_FIELD(eval.oracle_batch), 2));
    k.push_back(real("eval", "oracle_width", CDAAE_FIELD(eval.oracle_width), nonneg, ">= 0"));
    k.push_back(count("eval", "per_class", CDAAE_FIELD(eval.per_class), 1));
    k.push_back(count("eval", "seed", CDAAE_FIELD(eval.seed), 0));
    return k;
}

#undef CDAAE_FIELD

const std::vector<Key>& keys()
{
    static const std::vector<Key> k = make_keys();
    return k;
}

const char* const kSections[] = {"train", "model", "weights", "adapt", "data", "eval"};

struct Entry {
    std::string value;
    std::size_t line;
};

} // namespace

ExperimentConfig parse_config(std::string_view text)
{
    std::map<std::string, Entry> entries; // "section.key"
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "", "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            bool known = false;
            for (const char* s : kSections) known = known || section == s;
            if (!known) throw ConfigError(line_no, "", "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "", "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(line_no, "", "missing key before '='");
        if (section.empty()) throw ConfigError(line_no, key, "key appears before any [section]");
        const Key* spec = nullptr;
        for (const auto& k : keys())
            if (k.section == section && k.name == key) spec = &k;
        if (!spec) throw ConfigError(line_no, key, "unknown key in [" + section + "]");
        if (value.empty() && !spec->allow_empty) throw ConfigError(line_no, key, "missing value");
        auto [it, fresh] = entries.emplace(section + "." + key, Entry{value, line_no});
        if (!fresh)
            throw ConfigError(line_no, key, "duplicate key (first set on line " + std::to_string(it->second.line) + ")");
    }

    ExperimentConfig cfg;
    auto apply = [&](const Key& k, const Entry& e) {
        try {
            k.set(cfg, e.value);
        } catch (const std::invalid_argument& err) {
            throw ConfigError(e.line, k.name, err.what());
        }
    };
    // The weight defaults depend on the mode, so it goes first.
    const Key* mode_key = &keys().front();
    if (auto it = entries.find("train.mode"); it != entries.end()) apply(*mode_key, it->second);
    cfg.train.weights = TrainConfig::default_weights(cfg.train.mode);
    for (const auto& k : keys()) {
        if (&k == mode_key) continue;
        if (auto it = entries.find(k.section + "." + k.name); it != entries.end()) apply(k, it->second);
    }
    cfg.adapt.train = cfg.train;
    try {
        cfg.adapt.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(line_no, "", err.what());
    }
    return cfg;
}

std::string emit_config(const ExperimentConfig& cfg)
{
    std::ostringstream os;
    std::string section;
    for (const auto& k : keys()) {
        if (k.section != section) {
            if (!section.empty()) os << '\n';
            section = k.section;
            os << '[' << section << "]\n";
        }
        os << k.name << " = " << k.get(cfg) << '\n';
    }
    return os.str();
}

ExperimentConfig load_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b)
{
    return emit_config(a) == emit_config(b);
}

DatasetPair load_data(const ExperimentConfig& cfg, const std::filesystem::path& data_root)
{
    const std::size_t k = cfg.train.net.prior.categories;
    if (cfg.data.source == "synth") {
        SynthOptions o;
        o.style = cfg.data.synth_style;
        o.polarity_b = cfg.data.synth_polarity_b;
        o.categories = k;
        o.train_per_class = cfg.data.train_per_class;
        o.test_per_class = cfg.data.test_per_class;
        o.seed = cfg.data.seed;
        return synth_pair(o);
    }
    DatasetPair pair;
    pair.categories = k;
    auto load = [&](const DataConfig::IdxDomain& d, Domain domain, DomainSplit& out) {
        const std::string tag(to_string(domain));
        if (d.train_images.empty()) throw std::invalid_argument("data: " + tag + " training images not configured");
        auto opt_path = [&](const std::string& p) -> std::optional<std::filesystem::path> {
            if (p.empty()) return std::nullopt;
            return data_root / p;
        };
        out.train = load_idx_images(data_root / d.train_images, opt_path(d.train_labels), d.rule, domain);
        if (!d.test_images.empty())
            out.test = load_idx_images(data_root / d.test_images, opt_path(d.test_labels), d.rule, domain);
        else
            out.test.domain = domain;
        out.train.check_labels(k);
        out.test.check_labels(k);
    };
    load(cfg.data.a, Domain::A, pair.a);
    load(cfg.data.b, Domain::B, pair.b);
    return pair;
}

} // namespace cdaae
