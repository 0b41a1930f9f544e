// med2d: one binary for every workflow of the segmentation engine —
// architecture inspection, synthetic data, training, evaluation, zero-shot
// matrices, ablations, prediction, and gradient verification.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "med2d/eval.hpp"
#include "med2d/grad_check.hpp"
#include "med2d/losses.hpp"
#include "med2d/runconfig.hpp"

namespace fs = std::filesystem;
using namespace med2d;

namespace {

constexpr double kReferenceParamsM = 2.07e6;  // published parameter budget

struct ConfigOpts {
    std::string config_file;
    std::string preset_name = "default";
    std::vector<std::string> sets;
    int epochs = -1;
    double lr = -1;
    int batch = -1;
    long long seed = -1;
    int input_size = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "dotted-key config file");
        cmd->add_option("--preset", preset_name, "config preset: default|tiny")
            ->check(CLI::IsMember({"default", "tiny"}));
        cmd->add_option("--set", sets, "override: key=value (repeatable)");
        cmd->add_option("--epochs", epochs, "override train.epochs");
        cmd->add_option("--lr", lr, "override train.lr");
        cmd->add_option("--batch", batch, "override train.batch_size");
        cmd->add_option("--seed", seed, "override train.seed");
        cmd->add_option("--input-size", input_size, "override model.input_size");
    }

    cli::RunConfig resolve() const {
        cli::RunConfig cfg = cli::preset(preset_name);
        if (!config_file.empty()) cli::load_config_file(cfg, config_file);
        for (const auto& s : sets) cli::apply_assignment(cfg, s);
        if (input_size >= 0) cli::apply_kv(cfg, "model.input_size", std::to_string(input_size));
        if (epochs >= 0) cfg.train.epochs = epochs;
        if (lr >= 0) cfg.train.learning_rate = static_cast<float>(lr);
        if (batch >= 0) cfg.train.batch_size = batch;
        if (seed >= 0) cfg.train.seed = static_cast<uint64_t>(seed);
        return cfg;
    }
};

void prepare_out_dir(const std::string& out) {
    fs::create_directories(fs::path(out) / "checkpoints");
    fs::create_directories(fs::path(out) / "reports");
}

void write_resolved_config(const cli::RunConfig& cfg, const std::string& out) {
    std::ofstream f(fs::path(out) / "config.resolved");
    f << cli::serialize(cfg);
}

int dataset_classes(const arch::ModelConfig& m) { return m.num_classes == 1 ? 2 : m.num_classes; }

data::Dataset load_data(const std::string& dir, const arch::ModelConfig& m) {
    return data::load_dataset(dir, dataset_classes(m), m.input_h, m.input_w);
}

nlohmann::json record_json(const train::MetricRecord& r) {
    return nlohmann::json{{"epoch", r.epoch}, {"split", r.split},     {"loss", r.loss},
                          {"dsc", r.dsc},     {"lr", r.lr},           {"wall_ms", r.wall_ms}};
}

void write_mask_pgm(const std::string& path, const Tensor& labels, int num_classes) {
    data::ImageU8 img;
    img.h = labels.dim(0);
    img.w = labels.dim(1);
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(img.h) * img.w);
    for (int64_t i = 0; i < labels.numel(); ++i) {
        const int v = static_cast<int>(labels[i]);
        img.pixels[static_cast<size_t>(i)] =
            num_classes == 2 ? (v ? 255 : 0) : static_cast<uint8_t>(v);
    }
    data::write_pnm(path, img);
}

// ---------------------------------------------------------------- schedule --

int cmd_schedule(double r, int f1, int f2, int depth) {
    const arch::FilterSchedule s = arch::filter_schedule(r, f1, f2, depth);
    for (int n = 0; n < s.depth; ++n)
        std::cout << n + 1 << ' ' << s.values[static_cast<size_t>(n)] << '\n';
    return 0;
}

// ----------------------------------------------------------------- summary --

int cmd_summary(const ConfigOpts& opts, const std::string& ablate, const std::string& out) {
    cli::RunConfig cfg = opts.resolve();
    if (ablate == "no-expansion") cfg.model.ablation.disable_expansion = true;
    else if (ablate == "no-reduction-gate") cfg.model.ablation.disable_reduction_gate = true;
    else if (ablate == "plain-cnn-encoder") cfg.model.ablation.plain_cnn_encoder = true;
    else if (!ablate.empty()) throw cli::ConfigError("unknown --ablate variant '" + ablate + "'");

    const arch::ModelPlan plan = arch::plan_model(cfg.model);
    const arch::ParamTable table = arch::count_parameters(plan);

    std::cout << std::left << std::setw(12) << "stage" << std::setw(36) << "layer"
              << "params\n";
    for (const auto& row : table.rows)
        std::cout << std::left << std::setw(12) << row.stage << std::setw(36) << row.layer
                  << row.params << '\n';

    const auto weights = arch::init_weights<float>(plan.layers, 0);
    std::cout << "total parameters: " << table.total
              << " (enumerated: " << weights.total_elements() << ")\n";
    const double dev = 100.0 * (static_cast<double>(table.total) - kReferenceParamsM) /
                       kReferenceParamsM;
    std::cout << "deviation from 2.07M reference: " << std::showpos << std::fixed
              << std::setprecision(1) << dev << "%\n"
              << std::noshowpos;

    if (!out.empty()) {
        prepare_out_dir(out);
        write_resolved_config(cfg, out);
        std::ofstream csv(fs::path(out) / "reports" / "complexity.csv");
        arch::write_ledger_csv(csv, arch::complexity_ledger(cfg.model));
        std::cout << "complexity ledger: " << (fs::path(out) / "reports" / "complexity.csv").string()
                  << '\n';
    } else {
        arch::write_ledger_csv(std::cout, arch::complexity_ledger(cfg.model));
    }
    return 0;
}

// ------------------------------------------------------------------- synth --

int cmd_synth(const std::string& kind, int n, int size, uint64_t seed,
              const data::ShiftParams& shift, const std::string& out) {
    data::synth_corpus(data::synth_kind_from_string(kind), n, size, seed, shift, out);
    std::ofstream meta(fs::path(out) / "synth.params");
    meta << "kind = " << kind << "\nn = " << n << "\nsize = " << size << "\nseed = " << seed
         << "\nshift.brightness = " << shift.brightness
         << "\nshift.contrast_scale = " << shift.contrast_scale
         << "\nshift.noise_scale = " << shift.noise_scale
         << "\nshift.shape_scale = " << shift.shape_scale << '\n';
    std::cout << "wrote " << n << " " << kind << " samples to " << out << '\n';
    return 0;
}

// ------------------------------------------------------------------- train --

int cmd_train(const ConfigOpts& opts, const std::string& data_dir, const std::string& out,
              const std::string& resume_path) {
    cli::RunConfig cfg = opts.resolve();

    train::Checkpoint resume;
    const bool resuming = !resume_path.empty();
    if (resuming) {
        resume = train::load_checkpoint(resume_path);
        cfg.model = resume.model_cfg;  // the run must continue the original model
        const int target_epochs = std::max(cfg.train.epochs, resume.train_cfg.epochs);
        cfg.train = resume.train_cfg;
        cfg.train.epochs = target_epochs;
    }

    prepare_out_dir(out);
    write_resolved_config(cfg, out);

    const data::Dataset ds = load_data(data_dir, cfg.model);
    const data::SplitResult sp = data::split(ds, {cfg.train.seed});
    std::cout << "dataset: " << ds.size() << " samples -> " << sp.train.size() << "/"
              << sp.val.size() << "/" << sp.test.size() << " train/val/test\n";

    std::ofstream stream(fs::path(out) / "metrics.jsonl");
    const auto sink = [&stream](const train::MetricRecord& r) {
        const auto j = record_json(r);
        stream << j.dump() << '\n';
        stream.flush();
        std::cout << j.dump() << '\n';
    };

    const train::TrainResult result = train::train(cfg.model, sp.train, sp.val, cfg.train, sink,
                                                   resuming ? &resume : nullptr);

    train::save_checkpoint((fs::path(out) / "checkpoints" / "best.m2sn").string(), result.best);
    train::save_checkpoint((fs::path(out) / "checkpoints" / "last.m2sn").string(), result.last);
    std::cout << "best validation DSC: " << result.best_val_dsc << "\n"
              << "checkpoints: " << (fs::path(out) / "checkpoints").string() << '\n';
    return 0;
}

// -------------------------------------------------------------------- eval --

int cmd_eval(const std::string& data_dir, const std::string& ckpt_path, const std::string& out,
             const std::string& split_name, std::string dataset_id, const std::string& modality) {
    const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
    arch::Model model{arch::plan_model(ckpt.model_cfg), ckpt.weights};

    const data::Dataset ds = load_data(data_dir, ckpt.model_cfg);
    data::Dataset chosen = ds;
    if (split_name != "all") {
        const data::SplitResult sp = data::split(ds, {ckpt.train_cfg.seed});
        if (split_name == "train") chosen = sp.train;
        else if (split_name == "val") chosen = sp.val;
        else if (split_name == "test") chosen = sp.test;
        else throw cli::ConfigError("unknown --split '" + split_name + "'");
    }
    if (dataset_id.empty()) dataset_id = fs::path(data_dir).filename().string();

    metrics::DatasetReport rep = eval::evaluate_dataset(
        model, chosen, dataset_id, fs::path(ckpt_path).filename().string(),
        ckpt.train_cfg.batch_size);
    rep.modality = modality;

    std::cout << "modality,dataset,image_size,dsc\n"
              << rep.modality << ',' << rep.dataset_id << ',' << rep.image_h << " x " << rep.image_w
              << ',' << std::fixed << std::setprecision(4) << rep.mean_dsc << '\n';

    if (!out.empty()) {
        prepare_out_dir(out);
        std::ofstream csv(fs::path(out) / "reports" / "eval_table1.csv");
        metrics::write_table_csv(csv, {rep});
        std::ofstream jsonl(fs::path(out) / "reports" / "eval.jsonl");
        metrics::write_report_jsonl(jsonl, {rep});
    }
    return 0;
}

// ------------------------------------------------------------------ predict --

int cmd_predict(const std::string& image_path, const std::string& ckpt_path,
                const std::string& out, const std::string& gradcam_layer, int gradcam_class) {
    const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
    arch::Model model{arch::plan_model(ckpt.model_cfg), ckpt.weights};
    const auto& mc = ckpt.model_cfg;

    data::SegmentationSample sample;
    sample.source_id = fs::path(image_path).stem().string();
    Tensor img({1, 1, 3});
    {
        const data::ImageU8 raw = data::read_pnm(image_path);
        Tensor t({raw.h, raw.w, 3});
        for (int i = 0; i < raw.h; ++i)
            for (int j = 0; j < raw.w; ++j)
                for (int c = 0; c < 3; ++c)
                    t.at(i, j, c) =
                        raw.pixels[(static_cast<size_t>(i) * raw.w + j) * raw.channels +
                                   static_cast<size_t>(raw.channels == 3 ? c : 0)] /
                        255.0f;
        img = data::resize_bilinear(t, mc.input_h, mc.input_w);
    }
    sample.image = img;
    sample.mask = Tensor::zeros({mc.input_h, mc.input_w});

    fs::create_directories(out);
    Tape tape;
    const auto fwd = arch::model_forward(tape, model, tape.leaf(img));
    const Tensor labels = metrics::hard_prediction(tape.value(fwd.output));
    const std::string mask_path = (fs::path(out) / (sample.source_id + "_mask.pgm")).string();
    write_mask_pgm(mask_path, labels, dataset_classes(mc));
    std::cout << "prediction: " << mask_path << '\n';

    if (!gradcam_layer.empty()) {
        const Tensor heat = eval::grad_cam(model, sample, gradcam_layer, gradcam_class);
        data::ImageU8 h8;
        h8.h = heat.dim(0);
        h8.w = heat.dim(1);
        h8.channels = 1;
        h8.pixels.resize(static_cast<size_t>(h8.h) * h8.w);
        for (int64_t i = 0; i < heat.numel(); ++i)
            h8.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(heat[i] * 255.0f));
        const std::string heat_path =
            (fs::path(out) / (sample.source_id + "_cam_" + gradcam_layer + ".pgm")).string();
        data::write_pnm(heat_path, h8);
        std::cout << "saliency: " << heat_path << '\n';
    }
    return 0;
}

// -------------------------------------------------------------------- xeval --

int cmd_xeval(const std::string& ckpt_path, const std::string& train_corpus_id,
              const std::vector<std::string>& test_dirs, const std::string& out) {
    const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);

    std::vector<std::pair<std::string, data::Dataset>> corpora;
    for (const auto& dir : test_dirs)
        corpora.emplace_back(fs::path(dir).filename().string(), load_data(dir, ckpt.model_cfg));

    const auto rows =
        eval::cross_dataset_eval(ckpt, train_corpus_id, corpora, ckpt.train_cfg.batch_size);

    eval::write_xeval_csv(std::cout, rows);
    if (!out.empty()) {
        prepare_out_dir(out);
        std::ofstream csv(fs::path(out) / "reports" / "xeval_table3.csv");
        eval::write_xeval_csv(csv, rows);
    }
    return 0;
}

// ------------------------------------------------------------------- ablate --

int cmd_ablate(const ConfigOpts& opts, const std::string& data_dir, const std::string& out) {
    const cli::RunConfig base = opts.resolve();
    prepare_out_dir(out);
    write_resolved_config(base, out);

    const data::Dataset ds = load_data(data_dir, base.model);
    const data::SplitResult sp = data::split(ds, {base.train.seed});

    struct Variant {
        const char* name;
        arch::AblationConfig ab;
    };
    const Variant variants[] = {
        {"baseline", {}},
        {"no-expansion", {true, false, false}},
        {"no-reduction-gate", {false, true, false}},
        {"plain-cnn-encoder", {false, false, true}},
    };

    std::ofstream csv(fs::path(out) / "reports" / "ablation.csv");
    csv << "variant,params,train_dsc,val_dsc,diverged\n";
    std::cout << "variant,params,train_dsc,val_dsc,diverged\n";
    for (const auto& v : variants) {
        arch::ModelConfig mc = base.model;
        mc.ablation = v.ab;
        const int64_t params = arch::count_parameters(arch::plan_model(mc)).total;

        double train_dsc = 0, val_dsc = 0;
        bool diverged = false;
        try {
            const auto result = train::train(mc, sp.train, sp.val, base.train);
            for (auto it = result.records.rbegin(); it != result.records.rend(); ++it)
                if (it->split == "train") {
                    train_dsc = it->dsc;
                    break;
                }
            val_dsc = result.best_val_dsc;
            train::save_checkpoint(
                (fs::path(out) / "checkpoints" / (std::string(v.name) + ".m2sn")).string(),
                result.best);
        } catch (const std::runtime_error&) {
            diverged = true;
        }
        csv << v.name << ',' << params << ',' << train_dsc << ',' << val_dsc << ','
            << (diverged ? "yes" : "no") << '\n';
        std::cout << v.name << ',' << params << ',' << train_dsc << ',' << val_dsc << ','
                  << (diverged ? "yes" : "no") << std::endl;
    }
    std::cout << "ablation report: " << (fs::path(out) / "reports" / "ablation.csv").string()
              << '\n';
    return 0;
}

// ----------------------------------------------------------------- gradcheck --

int cmd_gradcheck(bool quick) {
    using ops::Padding;
    int failures = 0;
    const auto report = [&](const std::string& name, const GradCheckReport& r, double tol) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(28) << name
                  << " max_rel_err=" << std::scientific << std::setprecision(2) << r.max_rel_err
                  << "  tol=" << tol << std::defaultfloat << '\n';
        failures += r.pass ? 0 : 1;
    };
    const auto sumsq = [](Tape64& t, Var y) { return ops::sum(t, ops::mul(t, y, y)); };

    report("conv2d",
           grad_check_many(
               [&](Tape64& t, const std::vector<Var>& v) {
                   return sumsq(t, ops::conv2d(t, v[0], v[1], v[2], 1, Padding::same));
               },
               {random_uniform<double>({5, 4, 2}, -1, 1, 1), random_uniform<double>({3, 3, 2, 3}, -1, 1, 2),
                random_uniform<double>({3}, -1, 1, 3)},
               1e-5, 1e-4),
           1e-4);
    report("conv2d_stride2",
           grad_check_many(
               [&](Tape64& t, const std::vector<Var>& v) {
                   return sumsq(t, ops::conv2d(t, v[0], v[1], v[2], 2, Padding::same));
               },
               {random_uniform<double>({6, 6, 2}, -1, 1, 4), random_uniform<double>({3, 3, 2, 2}, -1, 1, 5),
                random_uniform<double>({2}, -1, 1, 6)},
               1e-5, 1e-4),
           1e-4);
    report("depthwise_conv2d",
           grad_check_many(
               [&](Tape64& t, const std::vector<Var>& v) {
                   return sumsq(t, ops::depthwise_conv2d(t, v[0], v[1], v[2]));
               },
               {random_uniform<double>({6, 6, 3}, -1, 1, 7), random_uniform<double>({5, 5, 3}, -1, 1, 8),
                random_uniform<double>({3}, -1, 1, 9)},
               1e-5, 1e-4),
           1e-4);
    report("global_avg_pool",
           grad_check(
               [&](Tape64& t, Var v) { return sumsq(t, ops::global_avg_pool(t, v)); },
               random_uniform<double>({4, 5, 3}, -1, 1, 10), 1e-5, 1e-4),
           1e-4);
    report("upsample2x",
           grad_check([&](Tape64& t, Var v) { return sumsq(t, ops::upsample2x(t, v)); },
                      random_uniform<double>({3, 4, 2}, -1, 1, 11), 1e-5, 1e-4),
           1e-4);

    {
        Tensor64 x = random_uniform<double>({4, 4, 2}, 0.1, 1.0, 12);
        for (int64_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
        for (auto [name, act] : {std::pair{"relu", ops::Act::relu}, {"elu", ops::Act::elu},
                                 {"sigmoid", ops::Act::sigmoid}})
            report(name,
                   grad_check(
                       [&, act = act](Tape64& t, Var v) {
                           return sumsq(t, ops::activation(t, act, v));
                       },
                       x, 1e-5, 1e-4),
                   1e-4);
        const Tensor64 coeff = random_uniform<double>({3, 3, 4}, -1, 1, 13);
        report("softmax_channels",
               grad_check(
                   [&](Tape64& t, Var v) {
                       Var y = ops::activation(t, ops::Act::softmax_channels, v);
                       return ops::sum(t, ops::mul(t, y, t.leaf(coeff)));
                   },
                   random_uniform<double>({3, 3, 4}, -1, 1, 14), 1e-5, 1e-4),
               1e-4);
    }

    report("channel_norm",
           grad_check_many(
               [&](Tape64& t, const std::vector<Var>& v) {
                   return sumsq(t, ops::channel_norm(t, v[0], v[1], v[2], 1e-5));
               },
               {random_uniform<double>({5, 4, 3}, -1, 1, 15), random_uniform<double>({3}, 0.5, 1.5, 16),
                random_uniform<double>({3}, -1, 1, 17)},
               1e-6, 1e-4),
           1e-4);
    report("dropout",
           grad_check(
               [&](Tape64& t, Var v) { return sumsq(t, ops::dropout(t, v, 0.4, 99, true)); },
               random_uniform<double>({6, 6, 2}, -1, 1, 18), 1e-5, 1e-4),
           1e-4);

    {
        Tensor64 pred = random_uniform<double>({4, 4, 2}, 0.1, 0.9, 19);
        Tensor64 target({4, 4, 2});
        Rng rng(20);
        for (auto& v : target.data) v = rng.bernoulli(0.5f) ? 1.0 : 0.0;
        report("dice_loss",
               grad_check_many(
                   [&](Tape64& t, const std::vector<Var>& v) {
                       return ops::dice_loss(t, v[0], v[1], 1.0);
                   },
                   {pred, target}, 1e-6, 1e-4),
               1e-4);
        report("bce_loss",
               grad_check_many(
                   [&](Tape64& t, const std::vector<Var>& v) { return ops::bce_loss(t, v[0], v[1]); },
                   {pred, target}, 1e-6, 1e-4),
               1e-4);
    }

    {
        arch::MedBlockConfig bc;
        bc.channels = 4;
        auto weights = arch::init_weights<double>(arch::plan_med_block("s", "b", bc, true), 21);
        for (auto& v : weights.at("b.project_norm.scale").data) v = 0.8;
        std::vector<Tensor64> inputs;
        inputs.push_back(random_uniform<double>({8, 8, 4}, -1, 1, 22));
        for (const auto& [_, w] : weights.items) inputs.push_back(w);
        report("med_block",
               grad_check_many(
                   [&](Tape64& t, const std::vector<Var>& v) {
                       arch::WeightVars wv;
                       for (size_t i = 0; i < weights.items.size(); ++i)
                           wv.emplace(weights.items[i].first, v[i + 1]);
                       return sumsq(t, arch::med_block_forward(t, v[0], wv, "b", bc, true));
                   },
                   inputs, 1e-5, 1e-4, quick ? 20 : 60, 23),
               1e-4);
    }

    if (!quick) {
        // full tiny model at 32x32x3 with a random-coefficient readout
        const arch::ModelConfig mc = arch::tiny_model_config(32);
        const auto model = arch::build_model<double>(mc, 24);
        const Tensor64 coeff = random_uniform<double>({32, 32, 1}, -1, 1, 25);
        std::vector<Tensor64> inputs;
        inputs.push_back(random_uniform<double>({32, 32, 3}, 0, 1, 26));
        for (const auto& [_, w] : model.weights.items) inputs.push_back(w);
        report("full_tiny_model",
               grad_check_many(
                   [&](Tape64& t, const std::vector<Var>& v) {
                       arch::WeightVars wv;
                       for (size_t i = 0; i < model.weights.items.size(); ++i)
                           wv.emplace(model.weights.items[i].first, v[i + 1]);
                       const auto fwd = arch::model_forward(t, model.plan, wv, v[0]);
                       return ops::sum(t, ops::mul(t, fwd.output, t.leaf(coeff)));
                   },
                   inputs, 1e-5, 1e-3, 2, 27),
               1e-3);
    }

    std::cout << (failures == 0 ? "gradient checks passed" : "gradient checks FAILED") << '\n';
    if (failures) throw std::runtime_error(std::to_string(failures) + " gradient checks failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"med2d: Med-2D SegNet segmentation engine"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads,
                   "cap kernel worker threads (default: MED2D_THREADS or all cores)");

    // schedule
    double r = 1.7424;
    int f1 = 32, f2 = 24, depth = 11;
    auto* c_sched = app.add_subcommand("schedule", "print the hierarchical filter schedule");
    c_sched->add_option("--r", r, "scaling factor");
    c_sched->add_option("--f1", f1, "first seed width");
    c_sched->add_option("--f2", f2, "second seed width");
    c_sched->add_option("--depth", depth, "schedule length");

    // summary
    ConfigOpts sum_opts;
    std::string sum_ablate, sum_out;
    auto* c_sum = app.add_subcommand("summary", "per-layer parameter table and complexity ledger");
    sum_opts.attach(c_sum);
    c_sum->add_option("--ablate", sum_ablate,
                      "apply one ablation: no-expansion|no-reduction-gate|plain-cnn-encoder");
    c_sum->add_option("--out", sum_out, "run directory for the ledger CSV");

    // synth
    std::string sy_kind = "ellipses", sy_out;
    int sy_n = 64, sy_size = 128;
    uint64_t sy_seed = 0;
    data::ShiftParams sy_shift;
    auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
    c_synth->add_option("--kind", sy_kind, "ellipses|blobs|vessels");
    c_synth->add_option("--n", sy_n, "sample count");
    c_synth->add_option("--size", sy_size, "image size (multiple of 16)");
    c_synth->add_option("--seed", sy_seed, "generator seed");
    c_synth->add_option("--shift-brightness", sy_shift.brightness, "additive intensity delta");
    c_synth->add_option("--shift-contrast", sy_shift.contrast_scale, "contrast scale");
    c_synth->add_option("--shift-noise", sy_shift.noise_scale, "noise scale");
    c_synth->add_option("--shift-shape", sy_shift.shape_scale, "structure size scale");
    c_synth->add_option("--out", sy_out, "output directory")->required();

    // train
    ConfigOpts tr_opts;
    std::string tr_data, tr_out, tr_resume;
    auto* c_train = app.add_subcommand("train", "train a model on a dataset directory");
    tr_opts.attach(c_train);
    c_train->add_option("--data", tr_data, "dataset root (images/, masks/)")->required();
    c_train->add_option("--out", tr_out, "run directory")->required();
    c_train->add_option("--resume", tr_resume, "checkpoint to continue from");

    // eval
    std::string ev_data, ev_ckpt, ev_out, ev_split = "test", ev_id, ev_modality = "synthetic";
    auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    c_eval->add_option("--data", ev_data)->required();
    c_eval->add_option("--checkpoint", ev_ckpt)->required();
    c_eval->add_option("--out", ev_out, "run directory for reports");
    c_eval->add_option("--split", ev_split, "train|val|test|all");
    c_eval->add_option("--dataset-id", ev_id, "name used in reports");
    c_eval->add_option("--modality", ev_modality, "modality column value");

    // predict
    std::string pr_image, pr_ckpt, pr_out = ".", pr_cam_layer;
    int pr_cam_class = -1;
    auto* c_pred = app.add_subcommand("predict", "segment one image, optionally with Grad-CAM");
    c_pred->add_option("--image", pr_image, "PPM/PGM image")->required();
    c_pred->add_option("--checkpoint", pr_ckpt)->required();
    c_pred->add_option("--out", pr_out, "output directory");
    c_pred->add_option("--gradcam-layer", pr_cam_layer, "also write a saliency map for this stage");
    c_pred->add_option("--gradcam-class", pr_cam_class, "target class (-1 = foreground score)");

    // xeval
    std::string xe_ckpt, xe_train_id = "train-corpus", xe_out;
    std::vector<std::string> xe_dirs;
    auto* c_xeval = app.add_subcommand("xeval", "zero-shot evaluation across corpora");
    c_xeval->add_option("--checkpoint", xe_ckpt)->required();
    c_xeval->add_option("--train-corpus", xe_train_id, "id of the corpus the model was trained on");
    c_xeval->add_option("--test-corpora", xe_dirs, "dataset directories")
        ->required()
        ->delimiter(',');
    c_xeval->add_option("--out", xe_out, "run directory for the table CSV");

    // ablate
    ConfigOpts ab_opts;
    std::string ab_data, ab_out;
    auto* c_ablate = app.add_subcommand("ablate", "train + evaluate the four ablation variants");
    ab_opts.attach(c_ablate);
    c_ablate->add_option("--data", ab_data)->required();
    c_ablate->add_option("--out", ab_out)->required();

    // gradcheck
    bool gc_quick = false;
    auto* c_gc = app.add_subcommand("gradcheck", "finite-difference checks of every backward rule");
    c_gc->add_flag("--quick", gc_quick, "skip the full-model check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (threads > 0) kernels::set_threads(threads);

        if (*c_sched) return cmd_schedule(r, f1, f2, depth);
        if (*c_sum) return cmd_summary(sum_opts, sum_ablate, sum_out);
        if (*c_synth) return cmd_synth(sy_kind, sy_n, sy_size, sy_seed, sy_shift, sy_out);
        if (*c_train) return cmd_train(tr_opts, tr_data, tr_out, tr_resume);
        if (*c_eval) return cmd_eval(ev_data, ev_ckpt, ev_out, ev_split, ev_id, ev_modality);
        if (*c_pred) return cmd_predict(pr_image, pr_ckpt, pr_out, pr_cam_layer, pr_cam_class);
        if (*c_xeval) return cmd_xeval(xe_ckpt, xe_train_id, xe_dirs, xe_out);
        if (*c_ablate) return cmd_ablate(ab_opts, ab_data, ab_out);
        if (*c_gc) return cmd_gradcheck(gc_quick);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
