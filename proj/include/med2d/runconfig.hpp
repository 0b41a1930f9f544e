#pragma once

#include <stdexcept>
#include <string>

#include "med2d/arch.hpp"
#include "med2d/train.hpp"

// Run configuration: a flat dotted-key surface over ModelConfig + TrainConfig.
// Files hold `key = value` lines ('#' comments); CLI --set overrides file
// values; unknown keys are hard errors. The fully resolved config is echoed
// into the run directory for provenance.

namespace med2d::cli {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    arch::ModelConfig model = arch::default_model_config();
    train::TrainConfig train;

    // set once the user pins these; schedule changes stop auto-deriving them
    bool widths_explicit = false;
    bool repeats_explicit = false;
};

RunConfig default_run_config();
RunConfig tiny_run_config();  // widths [8,12,16,24], stem 8

RunConfig preset(const std::string& name);  // "default" | "tiny"

// applies one dotted key; throws ConfigError for unknown keys or bad values
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// parses --set style "key=value"
void apply_assignment(RunConfig& cfg, const std::string& assignment);

void load_config_file(RunConfig& cfg, const std::string& path);

// canonical sorted key=value listing of every resolved setting
std::string serialize(const RunConfig& cfg);

}  // namespace med2d::cli
