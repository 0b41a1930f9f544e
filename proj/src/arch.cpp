#include "med2d/arch.hpp"

#include <algorithm>
#include <cmath>

namespace med2d::arch {

FilterSchedule filter_schedule(double r, int f1, int f2, int depth) {
    if (!(r > 0.0)) throw std::invalid_argument("filter_schedule: r must be > 0");
    if (f1 < 1 || f2 < 1) throw std::invalid_argument("filter_schedule: f1, f2 must be >= 1");
    if (depth < 2) throw std::invalid_argument("filter_schedule: depth must be >= 2");

    FilterSchedule s;
    s.r = r;
    s.f1 = f1;
    s.f2 = f2;
    s.depth = depth;
    s.values.resize(static_cast<size_t>(depth));
    s.values[0] = f1;
    s.values[1] = f2;
    for (int n = 2; n < depth; ++n)
        s.values[static_cast<size_t>(n)] =
            static_cast<int>(r * static_cast<double>(s.values[static_cast<size_t>(n - 1)]));
    return s;
}

int default_stage_repeats(int input_size) {
    int r = 1;
    for (int s = input_size; s > 256; s /= 2) ++r;
    return r;
}

ModelConfig default_model_config() {
    ModelConfig cfg;
    cfg.schedule = filter_schedule();
    cfg.stage_widths = {cfg.schedule.values[2], cfg.schedule.values[3], cfg.schedule.values[4],
                        cfg.schedule.values[5]};
    const int rep = default_stage_repeats(std::min(cfg.input_h, cfg.input_w));
    cfg.stage_repeats = {rep, rep, rep, rep};
    return cfg;
}

ModelConfig tiny_model_config(int input_size) {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = input_size;
    cfg.schedule = filter_schedule(1.7424, 8, 8, 11);
    cfg.stage_widths = {8, 12, 16, 24};
    cfg.stage_repeats = {1, 1, 1, 1};
    return cfg;
}

void validate_model_config(const ModelConfig& cfg) {
    if (cfg.input_h < 16 || cfg.input_w < 16 || cfg.input_h % 16 || cfg.input_w % 16)
        throw std::invalid_argument("model config: input size must be a multiple of 16, got " +
                                    std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
    if (cfg.input_channels < 1) throw std::invalid_argument("model config: input_channels >= 1");
    if (cfg.num_classes < 1) throw std::invalid_argument("model config: num_classes >= 1");
    if (cfg.schedule.values.empty())
        throw std::invalid_argument("model config: empty filter schedule");
    for (int v : cfg.schedule.values)
        if (v < 1)
            throw std::invalid_argument("model config: schedule value " + std::to_string(v) +
                                        " < 1");
    for (int wdt : cfg.stage_widths)
        if (wdt < 1) throw std::invalid_argument("model config: stage width must be >= 1");
    for (int rep : cfg.stage_repeats)
        if (rep < 1) throw std::invalid_argument("model config: stage repeats must be >= 1");
    if (cfg.med_block.expansion_factor < 1)
        throw std::invalid_argument("model config: expansion_factor must be >= 1");
    if (cfg.med_block.reduction_divisor < 1)
        throw std::invalid_argument("model config: reduction_divisor must be >= 1");
    if (cfg.med_block.depthwise_kernel < 1 || cfg.med_block.depthwise_kernel % 2 == 0)
        throw std::invalid_argument("model config: depthwise_kernel must be odd");
}

const LayerDesc& ModelPlan::layer(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return l;
    throw std::invalid_argument("unknown layer '" + name + "'");
}

namespace {

void add_conv(std::vector<LayerDesc>& out, const std::string& stage, const std::string& name,
              int k, int cin, int cout, int stride, bool use_norm, bool zero_scale = false) {
    out.push_back({stage, name, LayerDesc::Kind::conv, k, k, cin, cout, stride, true, false});
    if (use_norm)
        out.push_back(
            {stage, name + "_norm", LayerDesc::Kind::norm, 1, 1, cout, cout, 1, false, zero_scale});
}

void add_depthwise(std::vector<LayerDesc>& out, const std::string& stage, const std::string& name,
                   int k, int c, bool use_norm) {
    out.push_back({stage, name, LayerDesc::Kind::depthwise, k, k, c, c, 1, true, false});
    if (use_norm)
        out.push_back({stage, name + "_norm", LayerDesc::Kind::norm, 1, 1, c, c, 1, false, false});
}

}  // namespace

std::vector<LayerDesc> plan_med_block(const std::string& stage, const std::string& prefix,
                                      const MedBlockConfig& cfg, bool use_norm) {
    std::vector<LayerDesc> out;
    const int c = cfg.channels;
    const int e = cfg.expanded();
    add_conv(out, stage, prefix + ".expand", 1, c, e, 1, use_norm);
    add_depthwise(out, stage, prefix + ".dw", cfg.depthwise_kernel, e, use_norm);
    if (cfg.use_reduction_gate) {
        const int s = cfg.squeeze();
        out.push_back({stage, prefix + ".reduce", LayerDesc::Kind::conv, 1, 1, e, s, 1, true,
                       false});
        out.push_back({stage, prefix + ".restore", LayerDesc::Kind::conv, 1, 1, s, e, 1, true,
                       false});
    }
    // zero-scaled projection norm makes a fresh block the identity
    add_conv(out, stage, prefix + ".project", 1, e, c, 1, use_norm, true);
    return out;
}

namespace {

void plan_repeated_blocks(std::vector<LayerDesc>& out, const std::string& stage,
                          const std::string& prefix, int repeats, const MedBlockConfig& bc,
                          bool use_norm, bool plain_cnn) {
    for (int b = 0; b < repeats; ++b) {
        const std::string bp = prefix + ".block" + std::to_string(b);
        if (plain_cnn) {
            add_conv(out, stage, bp + ".conv_a", 3, bc.channels, bc.channels, 1, use_norm);
            add_conv(out, stage, bp + ".conv_b", 3, bc.channels, bc.channels, 1, use_norm);
        } else {
            auto block = plan_med_block(stage, bp, bc, use_norm);
            out.insert(out.end(), block.begin(), block.end());
        }
    }
}

}  // namespace

ModelPlan plan_model(const ModelConfig& cfg) {
    validate_model_config(cfg);
    ModelPlan plan;
    plan.cfg = cfg;
    auto& out = plan.layers;

    const int f1 = cfg.schedule.f1;
    add_conv(out, "stem", "stem", 3, cfg.input_channels, f1, 1, cfg.use_norm);

    int prev = f1;
    for (int s = 0; s < 4; ++s) {
        const std::string stage = "enc" + std::to_string(s + 1);
        const int width = cfg.stage_widths[static_cast<size_t>(s)];
        MedBlockConfig bc = cfg.med_block;
        bc.channels = width;
        if (cfg.ablation.disable_expansion) bc.use_expansion = false;
        if (cfg.ablation.disable_reduction_gate) bc.use_reduction_gate = false;

        add_conv(out, stage, stage + ".entry", 3, prev, width, 2, cfg.use_norm);
        plan_repeated_blocks(out, stage, stage, cfg.stage_repeats[static_cast<size_t>(s)], bc,
                             cfg.use_norm, cfg.ablation.plain_cnn_encoder);
        add_depthwise(out, stage, stage + ".dpath", cfg.med_block.depthwise_kernel, width,
                      cfg.use_norm);
        prev = width;
    }

    {
        MedBlockConfig bc = cfg.med_block;
        bc.channels = cfg.stage_widths[3];
        if (cfg.ablation.disable_expansion) bc.use_expansion = false;
        if (cfg.ablation.disable_reduction_gate) bc.use_reduction_gate = false;
        plan_repeated_blocks(out, "bottleneck", "bottleneck", 1, bc, cfg.use_norm,
                             cfg.ablation.plain_cnn_encoder);
    }

    const std::array<int, 4> dec_out{cfg.stage_widths[2], cfg.stage_widths[1],
                                     cfg.stage_widths[0], f1};
    prev = cfg.stage_widths[3];
    for (int s = 0; s < 4; ++s) {
        const std::string stage = "dec" + std::to_string(s + 1);
        add_conv(out, stage, stage + ".conv", 3, prev, dec_out[static_cast<size_t>(s)], 1,
                 cfg.use_norm);
        prev = dec_out[static_cast<size_t>(s)];
    }

    out.push_back({"head", "head", LayerDesc::Kind::conv, 1, 1, f1, cfg.num_classes, 1, true,
                   false});
    return plan;
}

ParamTable count_parameters(const ModelPlan& plan) {
    ParamTable t;
    for (const auto& l : plan.layers) {
        t.rows.push_back({l.stage, l.name, l.param_count()});
        t.total += l.param_count();
    }
    return t;
}

std::vector<LedgerRow> complexity_ledger(const ModelConfig& cfg) {
    struct Variant {
        const char* name;
        AblationConfig ab;
    };
    const Variant variants[] = {
        {"baseline", {}},
        {"no-expansion", {true, false, false}},
        {"no-reduction-gate", {false, true, false}},
        {"plain-cnn-encoder", {false, false, true}},
    };

    std::vector<LedgerRow> rows;
    for (const auto& v : variants) {
        ModelConfig c = cfg;
        c.ablation = v.ab;
        const ParamTable t = count_parameters(plan_model(c));
        int64_t cum = 0;
        for (const auto& r : t.rows) {
            cum += r.params;
            rows.push_back({v.name, r.stage, r.layer, r.params, cum});
        }
    }
    return rows;
}

void write_ledger_csv(std::ostream& os, const std::vector<LedgerRow>& rows) {
    os << "variant,stage,layer,param_count,cumulative_total\n";
    for (const auto& r : rows)
        os << r.variant << ',' << r.stage << ',' << r.layer << ',' << r.params << ','
           << r.cumulative << '\n';
}

}  // namespace med2d::arch
