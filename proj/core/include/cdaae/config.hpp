#pragma once

#include "cdaae/adapt.hpp"
#include "cdaae/datasets.hpp"
#include "cdaae/evaluate.hpp"
#include "cdaae/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cdaae {

/// Where the two domains come from. Paths for the idx source are relative
/// to the data root.
struct DataConfig {
    std::string source = "synth"; // synth | idx
    SynthStyle synth_style = SynthStyle::digits;
    SynthPolarity synth_polarity_b = SynthPolarity::dark_on_light;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 30;
    std::uint64_t seed = 7;

    struct IdxDomain {
        std::string train_images, train_labels, test_images, test_labels;
        PreprocessRule rule = PreprocessRule::passthrough;
    };
    IdxDomain a, b;
};

struct EvalConfig {
    std::size_t oracle_steps = 600;
    std::size_t oracle_batch = 64;
    /// 0 reuses the model width.
    double oracle_width = 0.0;
    std::size_t per_class = 100;
    std::uint64_t seed = 11;
};

struct ExperimentConfig {
    TrainConfig train;
    AdaptConfig adapt; // adapt.train mirrors train
    DataConfig data;
    EvalConfig eval;

    OracleOptions oracle_options() const;
};

class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::size_t line, std::string key, const std::string& message);
    std::size_t line() const { return line_; }
    const std::string& key() const { return key_; }

private:
    std::size_t line_;
    std::string key_;
};

/// Grammar: lines of "[section]" or "key = value"; '#' starts a comment;
/// blank lines are ignored. Sections: train, model, weights, adapt, data,
/// eval. Unknown sections or keys, duplicates and out-of-range values raise
/// ConfigError naming the key and line. Missing keys take their defaults.
ExperimentConfig parse_config(std::string_view text);

/// Every resolved key in canonical order; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Builds the dataset pair described by `cfg.data`.
DatasetPair load_data(const ExperimentConfig& cfg, const std::filesystem::path& data_root);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

} // namespace cdaae
