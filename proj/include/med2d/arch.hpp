#pragma once

#include <array>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "med2d/ops.hpp"

// Med-2D SegNet: Med Block encoder with hierarchical filter scaling and a
// residual decoder.
//
// Med Block wiring (inverted bottleneck with a pooled channel gate):
//   expand 1x1 C->6C, norm, ELU
//   depthwise 7x7, norm, ELU                         -> D
//   gate: GAP(D), 1x1 6C->max(1,6C/24), ELU,
//         1x1 ->6C, sigmoid                          -> G (1x1x6C)
//   fuse: O = D (.) G  (channel broadcast multiply)
//   project 1x1 6C->C, norm                          -> C_last
//   residual: out = x + C_last
//
// Encoder stage: entry stride-2 3x3 conv block, then a chain of Med Blocks
// (C path) and one depthwise 7x7 block on the entry output (D path), fused by
// element-wise addition. Decoder stage: nearest 2x upsample, 3x3 conv block
// to the skip width (ReLU), plus the skip as residual.

namespace med2d::arch {

// --- configuration ---------------------------------------------------------------

struct MedBlockConfig {
    int channels = 0;
    int expansion_factor = 6;
    int depthwise_kernel = 7;
    int reduction_divisor = 24;
    bool use_expansion = true;
    bool use_reduction_gate = true;

    int expanded() const { return channels * (use_expansion ? expansion_factor : 1); }
    int squeeze() const { return std::max(1, expanded() / reduction_divisor); }
};

struct FilterSchedule {
    double r = 1.7424;  // 1.32^2
    int f1 = 32;
    int f2 = 24;
    int depth = 11;
    std::vector<int> values;  // F1..F_depth
};

// F_n = int(r * F_{n-1}) for n >= 3, int() truncating toward zero.
FilterSchedule filter_schedule(double r = 1.7424, int f1 = 32, int f2 = 24, int depth = 11);

struct AblationConfig {
    bool disable_expansion = false;      // expansion factor forced to 1
    bool disable_reduction_gate = false; // gate path removed, fuse becomes identity
    bool plain_cnn_encoder = false;      // Med Blocks -> two plain 3x3 conv blocks

    bool any() const { return disable_expansion || disable_reduction_gate || plain_cnn_encoder; }
};

struct ModelConfig {
    int input_h = 256, input_w = 256;
    int input_channels = 3;
    int num_classes = 1;  // output channels; 1 = binary sigmoid head, >=2 = softmax
    FilterSchedule schedule;
    std::array<int, 4> stage_widths{};   // encoder widths; default F3..F6
    std::array<int, 4> stage_repeats{};  // Med Blocks per stage
    MedBlockConfig med_block;            // channel-free template
    AblationConfig ablation;
    bool use_norm = true;
};

// repeats grow with input size: 1 per stage up to 256, +1 per further doubling
int default_stage_repeats(int input_size);

ModelConfig default_model_config();
ModelConfig tiny_model_config(int input_size = 32);  // widths [8,12,16,24]

void validate_model_config(const ModelConfig& cfg);

// --- layer plan / parameter accounting ---------------------------------------------

struct LayerDesc {
    enum class Kind { conv, depthwise, norm };

    std::string stage;  // "stem", "enc1".."enc4", "bottleneck", "dec1".."dec4", "head"
    std::string name;   // weight base name, e.g. "enc1.block0.expand"
    Kind kind = Kind::conv;
    int kh = 1, kw = 1, cin = 1, cout = 1;  // depthwise/norm use cout as C
    int stride = 1;
    bool bias = true;
    bool zero_init_scale = false;  // residual-stabilizing norm init

    int64_t param_count() const {
        switch (kind) {
            case Kind::conv:
                return static_cast<int64_t>(kh) * kw * cin * cout + (bias ? cout : 0);
            case Kind::depthwise:
                return static_cast<int64_t>(kh) * kw * cout + (bias ? cout : 0);
            case Kind::norm:
                return 2LL * cout;
        }
        return 0;
    }
};

struct ModelPlan {
    ModelConfig cfg;
    std::vector<LayerDesc> layers;

    const LayerDesc& layer(const std::string& name) const;
};

ModelPlan plan_model(const ModelConfig& cfg);

// Med Block layers only, for block-level tests and the ablation ledger.
std::vector<LayerDesc> plan_med_block(const std::string& stage, const std::string& prefix,
                                      const MedBlockConfig& cfg, bool use_norm);

struct ParamRow {
    std::string stage, layer;
    int64_t params = 0;
};

struct ParamTable {
    std::vector<ParamRow> rows;
    int64_t total = 0;
};

// Analytic per-layer counts from the plan (kernel extents + bias), never from
// allocated tensors; tests compare against the enumeration oracle.
ParamTable count_parameters(const ModelPlan& plan);

struct LedgerRow {
    std::string variant, stage, layer;
    int64_t params = 0;
    int64_t cumulative = 0;
};

// Parameter breakdown for {baseline, no-expansion, no-reduction-gate,
// plain-cnn-encoder} built from one base config.
std::vector<LedgerRow> complexity_ledger(const ModelConfig& cfg);
void write_ledger_csv(std::ostream& os, const std::vector<LedgerRow>& rows);

// --- weights -----------------------------------------------------------------------

template <typename T>
struct WeightSet {
    std::vector<std::pair<std::string, TensorT<T>>> items;  // plan order
    std::map<std::string, size_t> index;

    void add(std::string name, TensorT<T> t) {
        index.emplace(name, items.size());
        items.emplace_back(std::move(name), std::move(t));
    }

    TensorT<T>& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::invalid_argument("unknown weight '" + name + "'");
        return items[it->second].second;
    }
    const TensorT<T>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw std::invalid_argument("unknown weight '" + name + "'");
        return items[it->second].second;
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [_, t] : items) n += t.numel();
        return n;
    }
};

// He-style fan-in uniform kernels, zero biases, ones/zeros norm affine
// (zero scale where the plan marks it). Streams are keyed by (seed, name) so
// construction order cannot alter weights.
template <typename T>
WeightSet<T> init_weights(const std::vector<LayerDesc>& layers, uint64_t seed) {
    WeightSet<T> w;
    for (const auto& l : layers) {
        Rng rng(mix_seed(seed, fnv1a64(l.name)));
        switch (l.kind) {
            case LayerDesc::Kind::conv: {
                const double bound = std::sqrt(6.0 / (static_cast<double>(l.kh) * l.kw * l.cin));
                TensorT<T> k({l.kh, l.kw, l.cin, l.cout});
                for (auto& v : k.data)
                    v = static_cast<T>((rng.uniform_f64() * 2.0 - 1.0) * bound);
                w.add(l.name + ".kernel", std::move(k));
                if (l.bias) w.add(l.name + ".bias", TensorT<T>::zeros({l.cout}));
                break;
            }
            case LayerDesc::Kind::depthwise: {
                const double bound = std::sqrt(6.0 / (static_cast<double>(l.kh) * l.kw));
                TensorT<T> k({l.kh, l.kw, l.cout});
                for (auto& v : k.data)
                    v = static_cast<T>((rng.uniform_f64() * 2.0 - 1.0) * bound);
                w.add(l.name + ".kernel", std::move(k));
                if (l.bias) w.add(l.name + ".bias", TensorT<T>::zeros({l.cout}));
                break;
            }
            case LayerDesc::Kind::norm:
                w.add(l.name + ".scale", l.zero_init_scale
                                             ? TensorT<T>::zeros({l.cout})
                                             : TensorT<T>::ones({l.cout}));
                w.add(l.name + ".shift", TensorT<T>::zeros({l.cout}));
                break;
        }
    }
    return w;
}

template <typename T>
struct ModelT {
    ModelPlan plan;
    WeightSet<T> weights;
};

using Model = ModelT<float>;

template <typename T>
ModelT<T> build_model(const ModelConfig& cfg, uint64_t seed) {
    ModelT<T> m;
    m.plan = plan_model(cfg);
    m.weights = init_weights<T>(m.plan.layers, seed);
    return m;
}

// --- forward -----------------------------------------------------------------------

using WeightVars = std::map<std::string, Var>;

template <typename T>
WeightVars push_weights(TapeT<T>& tape, const WeightSet<T>& w) {
    WeightVars vars;
    for (const auto& [name, t] : w.items) vars.emplace(name, tape.leaf(t));
    return vars;
}

struct ForwardOptions {
    bool training = false;
    float dropout_rate = 0.0f;  // applied at the bottleneck in training mode
    uint64_t dropout_seed = 0;
};

struct ForwardResult {
    Var output;  // probabilities (sigmoid / channel softmax)
    Var logits;  // pre-activation head output
    std::map<std::string, Var> taps;  // stage outputs, keyed by stage id
};

namespace detail {

inline Var wvar(const WeightVars& w, const std::string& name) {
    auto it = w.find(name);
    if (it == w.end()) throw std::invalid_argument("forward: missing weight '" + name + "'");
    return it->second;
}

inline Var wvar_opt(const WeightVars& w, const std::string& name) {
    auto it = w.find(name);
    return it == w.end() ? Var{} : it->second;
}

// conv -> (norm) -> activation
template <typename T>
Var conv_block(TapeT<T>& t, const WeightVars& w, Var x, const std::string& name, int stride,
               bool use_norm, ops::Act act) {
    Var y = ops::conv2d(t, x, wvar(w, name + ".kernel"), wvar_opt(w, name + ".bias"), stride,
                        ops::Padding::same);
    if (use_norm)
        y = ops::channel_norm(t, y, wvar(w, name + "_norm.scale"), wvar(w, name + "_norm.shift"),
                              T(1e-5));
    return ops::activation(t, act, y);
}

template <typename T>
Var depthwise_block(TapeT<T>& t, const WeightVars& w, Var x, const std::string& name,
                    bool use_norm, ops::Act act) {
    Var y = ops::depthwise_conv2d(t, x, wvar(w, name + ".kernel"), wvar_opt(w, name + ".bias"));
    if (use_norm)
        y = ops::channel_norm(t, y, wvar(w, name + "_norm.scale"), wvar(w, name + "_norm.shift"),
                              T(1e-5));
    return ops::activation(t, act, y);
}

}  // namespace detail

// One Med Block; preserves spatial dims and channel count.
template <typename T>
Var med_block_forward(TapeT<T>& t, Var x, const WeightVars& w, const std::string& prefix,
                      const MedBlockConfig& cfg, bool use_norm) {
    using namespace detail;
    const auto& xs = t.value(x).shape;
    const int c = xs[xs.size() - 1];
    if (c != cfg.channels)
        throw std::invalid_argument("med_block_forward: input channels " + shape_str(xs) +
                                    " do not match configured " + std::to_string(cfg.channels));

    Var h = conv_block(t, w, x, prefix + ".expand", 1, use_norm, ops::Act::elu);
    Var d = depthwise_block(t, w, h, prefix + ".dw", use_norm, ops::Act::elu);

    Var fused = d;
    if (cfg.use_reduction_gate) {
        Var g = ops::global_avg_pool(t, d);
        g = ops::pointwise_conv(t, g, wvar(w, prefix + ".reduce.kernel"),
                                wvar_opt(w, prefix + ".reduce.bias"));
        g = ops::elu(t, g);
        g = ops::pointwise_conv(t, g, wvar(w, prefix + ".restore.kernel"),
                                wvar_opt(w, prefix + ".restore.bias"));
        g = ops::sigmoid(t, g);
        fused = ops::mul(t, d, g);
    }

    Var proj = ops::pointwise_conv(t, fused, wvar(w, prefix + ".project.kernel"),
                                   wvar_opt(w, prefix + ".project.bias"));
    if (use_norm)
        proj = ops::channel_norm(t, proj, wvar(w, prefix + ".project_norm.scale"),
                                 wvar(w, prefix + ".project_norm.shift"), T(1e-5));
    return ops::add(t, x, proj);
}

// Repeated-block chain: Med Blocks, or two plain conv blocks each under the
// plain-cnn ablation.
template <typename T>
Var repeated_blocks_forward(TapeT<T>& t, Var x, const WeightVars& w, const std::string& prefix,
                            int repeats, const MedBlockConfig& cfg, bool use_norm,
                            bool plain_cnn) {
    Var h = x;
    for (int b = 0; b < repeats; ++b) {
        const std::string bp = prefix + ".block" + std::to_string(b);
        if (plain_cnn) {
            h = detail::conv_block(t, w, h, bp + ".conv_a", 1, use_norm, ops::Act::elu);
            h = detail::conv_block(t, w, h, bp + ".conv_b", 1, use_norm, ops::Act::elu);
        } else {
            h = med_block_forward(t, h, w, bp, cfg, use_norm);
        }
    }
    return h;
}

// Entry stride-2 conv, Med Block chain (C path) + depthwise block on the entry
// output (D path), fused additively. Returns the fused map, which doubles as
// the decoder skip.
template <typename T>
Var encoder_stage_forward(TapeT<T>& t, Var x, const WeightVars& w, const std::string& stage,
                          int repeats, const MedBlockConfig& cfg, bool use_norm,
                          bool plain_cnn) {
    using namespace detail;
    Var e = conv_block(t, w, x, stage + ".entry", 2, use_norm, ops::Act::elu);
    Var c = repeated_blocks_forward(t, e, w, stage, repeats, cfg, use_norm, plain_cnn);
    Var d = depthwise_block(t, w, e, stage + ".dpath", use_norm, ops::Act::elu);
    return ops::add(t, c, d);
}

// Upsample, 3x3 conv block to the skip width (ReLU), then residual skip add.
template <typename T>
Var decoder_stage_forward(TapeT<T>& t, Var x, Var skip, const WeightVars& w,
                          const std::string& stage, bool use_norm) {
    Var u = ops::upsample2x(t, x);
    const auto& us = t.value(u).shape;
    const auto& ss = t.value(skip).shape;
    if (us[us.size() - 3] != ss[ss.size() - 3] || us[us.size() - 2] != ss[ss.size() - 2])
        throw std::invalid_argument("decoder_stage_forward: upsampled " + shape_str(us) +
                                    " does not spatially match skip " + shape_str(ss));
    Var o = detail::conv_block(t, w, u, stage + ".conv", 1, use_norm, ops::Act::relu);
    return ops::add(t, skip, o);
}

template <typename T>
ForwardResult model_forward(TapeT<T>& t, const ModelPlan& plan, const WeightVars& w, Var x,
                            const ForwardOptions& opt = {}) {
    using namespace detail;
    const ModelConfig& cfg = plan.cfg;
    const auto& xs = t.value(x).shape;
    const int xh = xs[xs.size() - 3], xw = xs[xs.size() - 2], xc = xs[xs.size() - 1];
    if (xc != cfg.input_channels)
        throw std::invalid_argument("model_forward: input channels " + shape_str(xs) +
                                    " do not match config " + std::to_string(cfg.input_channels));
    if (xh % 16 != 0 || xw % 16 != 0)
        throw std::invalid_argument("model_forward: spatial dims must be divisible by 16, got " +
                                    shape_str(xs));

    ForwardResult res;
    Var stem = conv_block(t, w, x, "stem", 1, cfg.use_norm, ops::Act::elu);
    res.taps.emplace("stem", stem);

    std::array<Var, 4> skips;
    Var h = stem;
    for (int s = 0; s < 4; ++s) {
        MedBlockConfig bc = cfg.med_block;
        bc.channels = cfg.stage_widths[static_cast<size_t>(s)];
        if (cfg.ablation.disable_expansion) bc.use_expansion = false;
        if (cfg.ablation.disable_reduction_gate) bc.use_reduction_gate = false;
        const std::string stage = "enc" + std::to_string(s + 1);
        h = encoder_stage_forward(t, h, w, stage, cfg.stage_repeats[static_cast<size_t>(s)], bc,
                                  cfg.use_norm, cfg.ablation.plain_cnn_encoder);
        skips[static_cast<size_t>(s)] = h;
        res.taps.emplace(stage, h);
    }

    {
        MedBlockConfig bc = cfg.med_block;
        bc.channels = cfg.stage_widths[3];
        if (cfg.ablation.disable_expansion) bc.use_expansion = false;
        if (cfg.ablation.disable_reduction_gate) bc.use_reduction_gate = false;
        h = repeated_blocks_forward(t, h, w, "bottleneck", 1, bc, cfg.use_norm,
                                    cfg.ablation.plain_cnn_encoder);
        if (opt.training && opt.dropout_rate > 0.0f)
            h = ops::dropout(t, h, static_cast<T>(opt.dropout_rate), opt.dropout_seed, true);
        res.taps.emplace("bottleneck", h);
    }

    // decoder consumes skips in reverse; the stem output is the final skip
    const std::array<Var, 4> dec_skips{skips[2], skips[1], skips[0], stem};
    for (int s = 0; s < 4; ++s) {
        const std::string stage = "dec" + std::to_string(s + 1);
        h = decoder_stage_forward(t, h, dec_skips[static_cast<size_t>(s)], w, stage,
                                  cfg.use_norm);
        res.taps.emplace(stage, h);
    }

    res.logits = ops::pointwise_conv(t, h, wvar(w, "head.kernel"), wvar_opt(w, "head.bias"));
    res.output = cfg.num_classes == 1 ? ops::sigmoid(t, res.logits)
                                      : ops::activation(t, ops::Act::softmax_channels, res.logits);
    return res;
}

// Convenience: push weights and run.
template <typename T>
ForwardResult model_forward(TapeT<T>& t, const ModelT<T>& m, Var x,
                            const ForwardOptions& opt = {}, WeightVars* out_wvars = nullptr) {
    WeightVars w = push_weights(t, m.weights);
    ForwardResult r = model_forward(t, m.plan, w, x, opt);
    if (out_wvars) *out_wvars = std::move(w);
    return r;
}

}  // namespace med2d::arch
