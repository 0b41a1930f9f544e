#include "med2d/train.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>

#include "med2d/losses.hpp"
#include "med2d/metrics.hpp"

namespace med2d::train {

using nlohmann::json;

LossKind loss_from_string(const std::string& s) {
    if (s == "auto") return LossKind::auto_select;
    if (s == "dice") return LossKind::dice;
    if (s == "bce") return LossKind::bce;
    if (s == "dice_plus_bce") return LossKind::dice_plus_bce;
    if (s == "ce") return LossKind::ce;
    if (s == "dice_plus_ce") return LossKind::dice_plus_ce;
    throw std::invalid_argument("unknown loss '" + s + "'");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::auto_select: return "auto";
        case LossKind::dice: return "dice";
        case LossKind::bce: return "bce";
        case LossKind::dice_plus_bce: return "dice_plus_bce";
        case LossKind::ce: return "ce";
        case LossKind::dice_plus_ce: return "dice_plus_ce";
    }
    return "?";
}

void validate_train_config(const TrainConfig& cfg) {
    // lr 0 is allowed: a no-update run is the standard way to check that the
    // loop itself injects no randomness
    if (cfg.learning_rate < 0) throw std::invalid_argument("train config: learning_rate >= 0");
    if (cfg.dropout_rate < 0 || cfg.dropout_rate >= 1)
        throw std::invalid_argument("train config: dropout_rate in [0, 1)");
    if (cfg.batch_size < 1) throw std::invalid_argument("train config: batch_size >= 1");
    if (cfg.epochs < 0) throw std::invalid_argument("train config: epochs >= 0");
    if (cfg.clip_norm < 0) throw std::invalid_argument("train config: clip_norm >= 0");
}

// --- optimizer ---------------------------------------------------------------------

AdamState make_adam_state(const arch::WeightSet<float>& weights) {
    AdamState st;
    st.m.reserve(weights.items.size());
    st.v.reserve(weights.items.size());
    for (const auto& [_, w] : weights.items) {
        st.m.push_back(Tensor::zeros(w.shape));
        st.v.push_back(Tensor::zeros(w.shape));
    }
    return st;
}

void adam_step(arch::WeightSet<float>& weights, const std::vector<Tensor>& grads, AdamState& st,
               const TrainConfig& cfg) {
    if (grads.size() != weights.items.size() || st.m.size() != weights.items.size())
        throw std::invalid_argument("adam_step: weight/gradient/moment counts differ");
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape != weights.items[i].second.shape)
            throw std::invalid_argument("adam_step: gradient shape mismatch for '" +
                                        weights.items[i].first + "'");
        if (!grads[i].all_finite())
            throw std::runtime_error("adam_step: non-finite gradient in '" +
                                     weights.items[i].first + "' (step rejected)");
    }

    const int64_t t = ++st.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (size_t i = 0; i < grads.size(); ++i) {
        Tensor& w = weights.items[i].second;
        Tensor& m = st.m[i];
        Tensor& v = st.v[i];
        for (int64_t j = 0; j < w.numel(); ++j) {
            const double g = grads[i][j];
            m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g);
            v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * g * g);
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            w[j] = static_cast<float>(w[j] - cfg.learning_rate * mh /
                                                 (std::sqrt(vh) + cfg.adam_eps));
        }
    }
}

// --- augmentation --------------------------------------------------------------------

namespace {

template <typename F>
data::SegmentationSample remap(const data::SegmentationSample& s, int oh, int ow, F src_index) {
    data::SegmentationSample out;
    out.source_id = s.source_id;
    out.image = Tensor({oh, ow, 3});
    out.mask = Tensor({oh, ow});
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            const auto [si, sj] = src_index(i, j);
            for (int c = 0; c < 3; ++c) out.image.at(i, j, c) = s.image.at(si, sj, c);
            out.mask.at(i, j) = s.mask.at(si, sj);
        }
    return out;
}

}  // namespace

data::SegmentationSample hflip(const data::SegmentationSample& s) {
    const int h = s.image.dim(0), w = s.image.dim(1);
    return remap(s, h, w, [w](int i, int j) { return std::pair{i, w - 1 - j}; });
}

data::SegmentationSample vflip(const data::SegmentationSample& s) {
    const int h = s.image.dim(0), w = s.image.dim(1);
    return remap(s, h, w, [h](int i, int j) { return std::pair{h - 1 - i, j}; });
}

data::SegmentationSample rot90(const data::SegmentationSample& s, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    const int h = s.image.dim(0), w = s.image.dim(1);
    switch (k) {
        case 0:
            return s;
        case 1:  // counter-clockwise
            return remap(s, w, h, [w](int i, int j) { return std::pair{j, w - 1 - i}; });
        case 2:
            return remap(s, h, w, [h, w](int i, int j) { return std::pair{h - 1 - i, w - 1 - j}; });
        default:
            return remap(s, w, h, [h](int i, int j) { return std::pair{h - 1 - j, i}; });
    }
}

data::SegmentationSample augment(const data::SegmentationSample& s, const AugmentFlags& flags,
                                 Rng& rng) {
    data::SegmentationSample out = s;
    if (flags.hflip && rng.bernoulli(0.5f)) out = hflip(out);
    if (flags.vflip && rng.bernoulli(0.5f)) out = vflip(out);
    if (flags.rot90 && s.image.dim(0) == s.image.dim(1)) {
        const int k = rng.uniform_int(0, 3);
        if (k) out = rot90(out, k);
    }
    return out;
}

// --- config <-> json (checkpoint metadata) ----------------------------------------------

namespace {

json to_json(const arch::ModelConfig& c) {
    return json{{"input_h", c.input_h},
                {"input_w", c.input_w},
                {"input_channels", c.input_channels},
                {"num_classes", c.num_classes},
                {"schedule",
                 {{"r", c.schedule.r}, {"f1", c.schedule.f1}, {"f2", c.schedule.f2},
                  {"depth", c.schedule.depth}}},
                {"stage_widths", c.stage_widths},
                {"stage_repeats", c.stage_repeats},
                {"med_block",
                 {{"expansion_factor", c.med_block.expansion_factor},
                  {"depthwise_kernel", c.med_block.depthwise_kernel},
                  {"reduction_divisor", c.med_block.reduction_divisor}}},
                {"ablation",
                 {{"disable_expansion", c.ablation.disable_expansion},
                  {"disable_reduction_gate", c.ablation.disable_reduction_gate},
                  {"plain_cnn_encoder", c.ablation.plain_cnn_encoder}}},
                {"use_norm", c.use_norm}};
}

arch::ModelConfig model_config_from_json(const json& j) {
    arch::ModelConfig c;
    c.input_h = j.at("input_h");
    c.input_w = j.at("input_w");
    c.input_channels = j.at("input_channels");
    c.num_classes = j.at("num_classes");
    c.schedule = arch::filter_schedule(j.at("schedule").at("r"), j.at("schedule").at("f1"),
                                       j.at("schedule").at("f2"), j.at("schedule").at("depth"));
    const auto sw = j.at("stage_widths");
    const auto sr = j.at("stage_repeats");
    for (int i = 0; i < 4; ++i) {
        c.stage_widths[static_cast<size_t>(i)] = sw.at(static_cast<size_t>(i));
        c.stage_repeats[static_cast<size_t>(i)] = sr.at(static_cast<size_t>(i));
    }
    c.med_block.expansion_factor = j.at("med_block").at("expansion_factor");
    c.med_block.depthwise_kernel = j.at("med_block").at("depthwise_kernel");
    c.med_block.reduction_divisor = j.at("med_block").at("reduction_divisor");
    c.ablation.disable_expansion = j.at("ablation").at("disable_expansion");
    c.ablation.disable_reduction_gate = j.at("ablation").at("disable_reduction_gate");
    c.ablation.plain_cnn_encoder = j.at("ablation").at("plain_cnn_encoder");
    c.use_norm = j.at("use_norm");
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"dropout_rate", c.dropout_rate},
                {"loss", to_string(c.loss)},
                {"seed", c.seed},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"augment",
                 {{"hflip", c.augment.hflip}, {"vflip", c.augment.vflip},
                  {"rot90", c.augment.rot90}}},
                {"clip_norm", c.clip_norm},
                {"early_stop_train_dsc", c.early_stop_train_dsc},
                {"early_stop_val_dsc", c.early_stop_val_dsc}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size");
    c.learning_rate = j.at("learning_rate");
    c.epochs = j.at("epochs");
    c.dropout_rate = j.at("dropout_rate");
    c.loss = loss_from_string(j.at("loss"));
    c.seed = j.at("seed");
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.adam_eps = j.at("adam_eps");
    c.augment.hflip = j.at("augment").at("hflip");
    c.augment.vflip = j.at("augment").at("vflip");
    c.augment.rot90 = j.at("augment").at("rot90");
    c.clip_norm = j.at("clip_norm");
    c.early_stop_train_dsc = j.at("early_stop_train_dsc");
    c.early_stop_val_dsc = j.at("early_stop_val_dsc");
    return c;
}

Tensor string_to_tensor(const std::string& s) {
    Tensor t({static_cast<int>(std::max<size_t>(s.size(), 1))});
    for (size_t i = 0; i < s.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<float>(
        static_cast<unsigned char>(s[i]));
    return t;
}

std::string tensor_to_string(const Tensor& t) {
    std::string s;
    s.reserve(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i)
        s.push_back(static_cast<char>(static_cast<unsigned char>(t[i])));
    return s;
}

}  // namespace

// --- checkpoints ----------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json meta;
    meta["model"] = to_json(ckpt.model_cfg);
    meta["train"] = to_json(ckpt.train_cfg);
    meta["adam_t"] = ckpt.adam.t;
    meta["epochs_done"] = ckpt.epochs_done;

    data::NamedTensors out;
    out.emplace_back("meta.config", string_to_tensor(meta.dump()));
    for (size_t i = 0; i < ckpt.weights.items.size(); ++i) {
        const auto& [name, w] = ckpt.weights.items[i];
        out.emplace_back("w." + name, w);
        out.emplace_back("adam.m." + name, ckpt.adam.m[i]);
        out.emplace_back("adam.v." + name, ckpt.adam.v[i]);
    }
    data::write_container(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const data::NamedTensors in = data::read_container(path);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : in) by_name.emplace(name, &t);

    const auto meta_it = by_name.find("meta.config");
    if (meta_it == by_name.end())
        throw std::runtime_error(path + ": not a checkpoint (missing meta.config)");
    const json meta = json::parse(tensor_to_string(*meta_it->second));

    Checkpoint ckpt;
    ckpt.model_cfg = model_config_from_json(meta.at("model"));
    ckpt.train_cfg = train_config_from_json(meta.at("train"));
    ckpt.adam.t = meta.at("adam_t");
    ckpt.epochs_done = meta.at("epochs_done");

    // rebuild in plan order so moment alignment survives the round trip
    const arch::ModelPlan plan = arch::plan_model(ckpt.model_cfg);
    ckpt.weights = arch::init_weights<float>(plan.layers, 0);
    ckpt.adam.m.clear();
    ckpt.adam.v.clear();
    for (auto& [name, w] : ckpt.weights.items) {
        for (const char* prefix : {"w.", "adam.m.", "adam.v."}) {
            const auto it = by_name.find(prefix + name);
            if (it == by_name.end())
                throw std::runtime_error(path + ": checkpoint missing tensor '" + prefix + name +
                                         "'");
            if (it->second->shape != w.shape)
                throw std::runtime_error(path + ": checkpoint shape mismatch for '" + name + "'");
        }
        w.data = by_name.at("w." + name)->data;
        ckpt.adam.m.push_back(*by_name.at("adam.m." + name));
        ckpt.adam.v.push_back(*by_name.at("adam.v." + name));
    }
    return ckpt;
}

uint64_t weight_hash(const arch::WeightSet<float>& weights) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, w] : weights.items) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(w.data.data(), w.data.size() * sizeof(float), h);
    }
    return h;
}

// --- batching ----------------------------------------------------------------------------------

int output_channels(int dataset_num_classes) {
    return dataset_num_classes == 2 ? 1 : dataset_num_classes;
}

Tensor batch_images(const std::vector<const data::SegmentationSample*>& batch) {
    const int n = static_cast<int>(batch.size());
    const int h = batch[0]->image.dim(0), w = batch[0]->image.dim(1);
    Tensor x({n, h, w, 3});
    for (int s = 0; s < n; ++s)
        std::copy(batch[static_cast<size_t>(s)]->image.data.begin(),
                  batch[static_cast<size_t>(s)]->image.data.end(),
                  x.data.begin() + static_cast<int64_t>(s) * h * w * 3);
    return x;
}

Tensor batch_targets(const std::vector<const data::SegmentationSample*>& batch, int channels) {
    const int n = static_cast<int>(batch.size());
    const int h = batch[0]->mask.dim(0), w = batch[0]->mask.dim(1);
    Tensor t = Tensor::zeros({n, h, w, channels});
    for (int s = 0; s < n; ++s)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const int label = static_cast<int>(batch[static_cast<size_t>(s)]->mask.at(i, j));
                if (channels == 1)
                    t.at(s, i, j, 0) = label != 0 ? 1.0f : 0.0f;
                else
                    t.at(s, i, j, label) = 1.0f;
            }
    return t;
}

namespace {

LossKind resolve_loss(LossKind k, int channels) {
    if (k == LossKind::auto_select)
        return channels == 1 ? LossKind::dice_plus_bce : LossKind::dice_plus_ce;
    if ((k == LossKind::bce || k == LossKind::dice_plus_bce) && channels != 1)
        throw std::invalid_argument("loss " + to_string(k) + " requires a binary head");
    if ((k == LossKind::ce || k == LossKind::dice_plus_ce) && channels < 2)
        throw std::invalid_argument("loss " + to_string(k) + " requires a multiclass head");
    return k;
}

Var compute_loss(Tape& t, Var pred, Var target, LossKind kind) {
    switch (kind) {
        case LossKind::dice: return ops::dice_loss(t, pred, target, 1.0f);
        case LossKind::bce: return ops::bce_loss(t, pred, target);
        case LossKind::ce: return ops::ce_loss(t, pred, target);
        case LossKind::dice_plus_bce:
            return ops::add(t, ops::dice_loss(t, pred, target, 1.0f), ops::bce_loss(t, pred, target));
        case LossKind::dice_plus_ce:
            return ops::add(t, ops::dice_loss(t, pred, target, 1.0f), ops::ce_loss(t, pred, target));
        case LossKind::auto_select: break;
    }
    throw std::logic_error("compute_loss: unresolved loss kind");
}

Tensor slice_sample(const Tensor& batch, int n) {
    const int h = batch.dim(1), w = batch.dim(2), k = batch.dim(3);
    Tensor out({h, w, k});
    std::copy(batch.data.begin() + static_cast<int64_t>(n) * h * w * k,
              batch.data.begin() + static_cast<int64_t>(n + 1) * h * w * k, out.data.begin());
    return out;
}

// mean foreground DSC of a prediction batch against integer masks
double batch_mean_dsc(const Tensor& probs,
                      const std::vector<const data::SegmentationSample*>& batch,
                      int dataset_classes) {
    double acc = 0;
    for (size_t s = 0; s < batch.size(); ++s) {
        const auto per_class = metrics::sample_report(slice_sample(probs, static_cast<int>(s)),
                                                      batch[s]->mask, dataset_classes);
        double m = 0;
        for (const auto& c : per_class) m += c.dice;
        acc += per_class.empty() ? 0.0 : m / static_cast<double>(per_class.size());
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace

EvalScore evaluate(const arch::Model& model, const data::Dataset& ds, LossKind loss,
                   int batch_size) {
    EvalScore score;
    if (ds.empty()) return score;
    const int channels = output_channels(ds.num_classes);
    const LossKind kind = resolve_loss(loss, channels);

    double dsc_sum = 0, loss_sum = 0;
    for (size_t start = 0; start < ds.samples.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<const data::SegmentationSample*> batch;
        for (size_t i = start; i < std::min(ds.samples.size(), start + batch_size); ++i)
            batch.push_back(&ds.samples[i]);

        Tape tape;
        arch::WeightVars wv = arch::push_weights(tape, model.weights);
        const auto fwd = arch::model_forward(tape, model.plan, wv, tape.leaf(batch_images(batch)));
        Var target = tape.leaf(batch_targets(batch, channels));
        Var l = compute_loss(tape, fwd.output, target, kind);
        loss_sum += static_cast<double>(tape.value(l)[0]) * static_cast<double>(batch.size());
        dsc_sum += batch_mean_dsc(tape.value(fwd.output), batch, ds.num_classes) *
                   static_cast<double>(batch.size());
    }
    score.loss = loss_sum / static_cast<double>(ds.samples.size());
    score.dsc = dsc_sum / static_cast<double>(ds.samples.size());
    return score;
}

TrainResult train(const arch::ModelConfig& model_cfg, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& cfg, const MetricSink& sink,
                  const Checkpoint* resume) {
    validate_train_config(cfg);
    arch::validate_model_config(model_cfg);
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");
    const int channels = output_channels(train_set.num_classes);
    if (channels != model_cfg.num_classes)
        throw std::invalid_argument("train: model has " + std::to_string(model_cfg.num_classes) +
                                    " output channels but the dataset needs " +
                                    std::to_string(channels));
    const LossKind kind = resolve_loss(cfg.loss, channels);

    arch::Model model;
    AdamState adam;
    int start_epoch = 0;
    if (resume) {
        model.plan = arch::plan_model(resume->model_cfg);
        model.weights = resume->weights;
        adam = resume->adam;
        start_epoch = resume->epochs_done;
    } else {
        model = arch::build_model<float>(model_cfg, cfg.seed);
        adam = make_adam_state(model.weights);
    }

    auto snapshot = [&](int epochs_done) {
        Checkpoint c;
        c.model_cfg = model_cfg;
        c.train_cfg = cfg;
        c.weights = model.weights;
        c.adam = adam;
        c.epochs_done = epochs_done;
        return c;
    };

    TrainResult result;
    result.best_val_dsc = -1.0;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<size_t> order(train_set.samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        double loss_sum = 0, dsc_sum = 0;
        int64_t seen = 0;
        int step = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size), ++step) {
            // shuffling decides batch composition; within a batch samples go in
            // dataset order so the loss is independent of the shuffle permutation
            std::vector<size_t> members(
                order.begin() + static_cast<int64_t>(start),
                order.begin() +
                    static_cast<int64_t>(std::min(order.size(), start + cfg.batch_size)));
            std::sort(members.begin(), members.end());

            std::vector<data::SegmentationSample> augmented;
            std::vector<const data::SegmentationSample*> batch;
            for (size_t idx : members) {
                const auto& s = train_set.samples[idx];
                if (cfg.augment.any()) {
                    Rng arng(mix_seed(mix_seed(cfg.seed, 0xa06u),
                                      (static_cast<uint64_t>(epoch) << 32) ^ idx));
                    augmented.push_back(augment(s, cfg.augment, arng));
                } else {
                    augmented.push_back(s);
                }
            }
            for (const auto& s : augmented) batch.push_back(&s);

            Tape tape;
            arch::WeightVars wv = arch::push_weights(tape, model.weights);
            arch::ForwardOptions opt;
            opt.training = true;
            opt.dropout_rate = cfg.dropout_rate;
            opt.dropout_seed = mix_seed(mix_seed(cfg.seed, 0xd201u),
                                        (static_cast<uint64_t>(epoch) << 24) ^
                                            static_cast<uint64_t>(step));
            const auto fwd = arch::model_forward(tape, model.plan, wv, tape.leaf(batch_images(batch)), opt);
            Var target = tape.leaf(batch_targets(batch, channels));
            Var loss = compute_loss(tape, fwd.output, target, kind);

            const double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));

            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(model.weights.items.size());
            for (const auto& [name, _] : model.weights.items) {
                const Tensor* g = tape.grad_if(wv.at(name));
                grads.push_back(g ? *g : Tensor::zeros(model.weights.at(name).shape));
            }

            if (cfg.clip_norm > 0) {
                double sq = 0;
                for (const auto& g : grads)
                    for (float v : g.data) sq += static_cast<double>(v) * v;
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    const float scale = static_cast<float>(cfg.clip_norm / norm);
                    for (auto& g : grads)
                        for (auto& v : g.data) v *= scale;
                }
            }

            adam_step(model.weights, grads, adam, cfg);

            loss_sum += loss_value * static_cast<double>(batch.size());
            dsc_sum += batch_mean_dsc(tape.value(fwd.output), batch, train_set.num_classes) *
                       static_cast<double>(batch.size());
            seen += static_cast<int64_t>(batch.size());
        }

        const auto t1 = std::chrono::steady_clock::now();
        MetricRecord train_rec;
        train_rec.epoch = epoch;
        train_rec.split = "train";
        train_rec.loss = loss_sum / static_cast<double>(seen);
        train_rec.dsc = dsc_sum / static_cast<double>(seen);
        train_rec.lr = cfg.learning_rate;
        train_rec.wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

        const EvalScore val = evaluate(model, val_set, kind, cfg.batch_size);
        const auto t2 = std::chrono::steady_clock::now();
        MetricRecord val_rec;
        val_rec.epoch = epoch;
        val_rec.split = "val";
        val_rec.loss = val.loss;
        val_rec.dsc = val.dsc;
        val_rec.lr = cfg.learning_rate;
        val_rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t2 - t1).count();

        result.records.push_back(train_rec);
        result.records.push_back(val_rec);
        if (sink) {
            sink(train_rec);
            sink(val_rec);
        }
        result.epochs_run = epoch - start_epoch + 1;

        if (!val_set.empty() && val.dsc > result.best_val_dsc) {
            result.best_val_dsc = val.dsc;
            result.best = snapshot(epoch + 1);
        }

        if (cfg.early_stop_train_dsc > 0 && cfg.early_stop_val_dsc > 0 &&
            train_rec.dsc >= cfg.early_stop_train_dsc && val.dsc >= cfg.early_stop_val_dsc)
            break;
    }

    result.last = snapshot(start_epoch + result.epochs_run);
    if (result.best_val_dsc < 0) result.best = result.last;  // no validation data
    return result;
}

}  // namespace med2d::train
