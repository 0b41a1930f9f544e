#include "med2d/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace med2d::cli {

namespace {

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::array<int, 4> parse_int4(const std::string& key, const std::string& v) {
    std::array<int, 4> out{};
    std::istringstream is(v);
    std::string part;
    size_t n = 0;
    while (std::getline(is, part, ',')) {
        if (n >= 4) throw ConfigError("config: '" + key + "' expects 4 comma-separated integers");
        out[n++] = parse_int(key, part);
    }
    if (n != 4) throw ConfigError("config: '" + key + "' expects 4 comma-separated integers");
    return out;
}

void refresh_schedule(RunConfig& cfg) {
    const auto& s = cfg.model.schedule;
    cfg.model.schedule = arch::filter_schedule(s.r, s.f1, s.f2, s.depth);
    if (!cfg.widths_explicit) {
        if (cfg.model.schedule.depth < 6)
            throw ConfigError("config: schedule depth < 6 requires explicit model.stage_widths");
        cfg.model.stage_widths = {cfg.model.schedule.values[2], cfg.model.schedule.values[3],
                                  cfg.model.schedule.values[4], cfg.model.schedule.values[5]};
    }
}

void refresh_repeats(RunConfig& cfg) {
    if (!cfg.repeats_explicit) {
        const int rep = arch::default_stage_repeats(std::min(cfg.model.input_h, cfg.model.input_w));
        cfg.model.stage_repeats = {rep, rep, rep, rep};
    }
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.model = arch::tiny_model_config(32);
    cfg.widths_explicit = true;  // the preset's widths are not schedule-derived
    return cfg;
}

RunConfig preset(const std::string& name) {
    if (name == "default") return default_run_config();
    if (name == "tiny") return tiny_run_config();
    throw ConfigError("unknown preset '" + name + "' (expected default|tiny)");
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& m = cfg.model;
    auto& t = cfg.train;

    if (key == "model.input_size") {
        m.input_h = m.input_w = parse_int(key, value);
        refresh_repeats(cfg);
    } else if (key == "model.input_h") {
        m.input_h = parse_int(key, value);
        refresh_repeats(cfg);
    } else if (key == "model.input_w") {
        m.input_w = parse_int(key, value);
        refresh_repeats(cfg);
    } else if (key == "model.input_channels") {
        m.input_channels = parse_int(key, value);
    } else if (key == "model.num_classes") {
        m.num_classes = parse_int(key, value);
    } else if (key == "model.r") {
        m.schedule.r = parse_double(key, value);
        refresh_schedule(cfg);
    } else if (key == "model.f1") {
        m.schedule.f1 = parse_int(key, value);
        refresh_schedule(cfg);
    } else if (key == "model.f2") {
        m.schedule.f2 = parse_int(key, value);
        refresh_schedule(cfg);
    } else if (key == "model.depth") {
        m.schedule.depth = parse_int(key, value);
        refresh_schedule(cfg);
    } else if (key == "model.stage_widths") {
        m.stage_widths = parse_int4(key, value);
        cfg.widths_explicit = true;
    } else if (key == "model.stage_repeats") {
        m.stage_repeats = parse_int4(key, value);
        cfg.repeats_explicit = true;
    } else if (key == "model.expansion_factor") {
        m.med_block.expansion_factor = parse_int(key, value);
    } else if (key == "model.depthwise_kernel") {
        m.med_block.depthwise_kernel = parse_int(key, value);
    } else if (key == "model.reduction_divisor") {
        m.med_block.reduction_divisor = parse_int(key, value);
    } else if (key == "model.use_norm") {
        m.use_norm = parse_bool(key, value);
    } else if (key == "model.ablation.disable_expansion") {
        m.ablation.disable_expansion = parse_bool(key, value);
    } else if (key == "model.ablation.disable_reduction_gate") {
        m.ablation.disable_reduction_gate = parse_bool(key, value);
    } else if (key == "model.ablation.plain_cnn_encoder") {
        m.ablation.plain_cnn_encoder = parse_bool(key, value);
    } else if (key == "train.batch_size") {
        t.batch_size = parse_int(key, value);
    } else if (key == "train.lr") {
        t.learning_rate = static_cast<float>(parse_double(key, value));
    } else if (key == "train.epochs") {
        t.epochs = parse_int(key, value);
    } else if (key == "train.dropout") {
        t.dropout_rate = static_cast<float>(parse_double(key, value));
    } else if (key == "train.loss") {
        try {
            t.loss = train::loss_from_string(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "train.seed") {
        t.seed = parse_u64(key, value);
    } else if (key == "train.clip_norm") {
        t.clip_norm = static_cast<float>(parse_double(key, value));
    } else if (key == "train.augment.hflip") {
        t.augment.hflip = parse_bool(key, value);
    } else if (key == "train.augment.vflip") {
        t.augment.vflip = parse_bool(key, value);
    } else if (key == "train.augment.rot90") {
        t.augment.rot90 = parse_bool(key, value);
    } else if (key == "train.early_stop_train_dsc") {
        t.early_stop_train_dsc = static_cast<float>(parse_double(key, value));
    } else if (key == "train.early_stop_val_dsc") {
        t.early_stop_val_dsc = static_cast<float>(parse_double(key, value));
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

void apply_assignment(RunConfig& cfg, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("config: expected key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    auto trim = [](std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    apply_kv(cfg, key, value);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            apply_assignment(cfg, line);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::string serialize(const RunConfig& cfg) {
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    std::map<std::string, std::string> kv;

    auto num = [](auto v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    auto list4 = [&](const std::array<int, 4>& a) {
        return num(a[0]) + "," + num(a[1]) + "," + num(a[2]) + "," + num(a[3]);
    };

    kv["model.input_h"] = num(m.input_h);
    kv["model.input_w"] = num(m.input_w);
    kv["model.input_channels"] = num(m.input_channels);
    kv["model.num_classes"] = num(m.num_classes);
    kv["model.r"] = num(m.schedule.r);
    kv["model.f1"] = num(m.schedule.f1);
    kv["model.f2"] = num(m.schedule.f2);
    kv["model.depth"] = num(m.schedule.depth);
    kv["model.stage_widths"] = list4(m.stage_widths);
    kv["model.stage_repeats"] = list4(m.stage_repeats);
    kv["model.expansion_factor"] = num(m.med_block.expansion_factor);
    kv["model.depthwise_kernel"] = num(m.med_block.depthwise_kernel);
    kv["model.reduction_divisor"] = num(m.med_block.reduction_divisor);
    kv["model.use_norm"] = m.use_norm ? "true" : "false";
    kv["model.ablation.disable_expansion"] = m.ablation.disable_expansion ? "true" : "false";
    kv["model.ablation.disable_reduction_gate"] =
        m.ablation.disable_reduction_gate ? "true" : "false";
    kv["model.ablation.plain_cnn_encoder"] = m.ablation.plain_cnn_encoder ? "true" : "false";
    kv["train.batch_size"] = num(t.batch_size);
    kv["train.lr"] = num(t.learning_rate);
    kv["train.epochs"] = num(t.epochs);
    kv["train.dropout"] = num(t.dropout_rate);
    kv["train.loss"] = train::to_string(t.loss);
    kv["train.seed"] = num(t.seed);
    kv["train.clip_norm"] = num(t.clip_norm);
    kv["train.augment.hflip"] = t.augment.hflip ? "true" : "false";
    kv["train.augment.vflip"] = t.augment.vflip ? "true" : "false";
    kv["train.augment.rot90"] = t.augment.rot90 ? "true" : "false";
    kv["train.early_stop_train_dsc"] = num(t.early_stop_train_dsc);
    kv["train.early_stop_val_dsc"] = num(t.early_stop_val_dsc);

    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    return os.str();
}

}  // namespace med2d::cli
