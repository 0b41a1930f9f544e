// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
//
// Paper-scale benchmark results are out of reach at desk scale, so acceptance
// is property-based plus desk-scale surrogates: gradient correctness, the
// Med Block contract, the filter schedule, parameter accounting, synthetic
// overfit learning, the zero-shot harness, ablations, metric identities,
// format fidelity, determinism, and Grad-CAM behavior.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "med2d/eval.hpp"
#include "med2d/grad_check.hpp"
#include "med2d/losses.hpp"
#include "med2d/train.hpp"

namespace fs = std::filesystem;
using namespace med2d;

namespace {

struct Criterion {
    std::string name;
    std::function<void(std::ostream&)> body;  // throws on failure
};

int g_failures = 0;

void run_criterion(int index, const Criterion& c) {
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream detail;
    bool pass = true;
    std::string error;
    try {
        c.body(detail);
    } catch (const std::exception& e) {
        pass = false;
        error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] C%d %s (%.1fs)%s%s\n", pass ? "PASS" : "FAIL", index, c.name.c_str(), secs,
                detail.str().empty() ? "" : (" " + detail.str()).c_str(),
                error.empty() ? "" : ("  -- " + error).c_str());
    std::fflush(stdout);
    g_failures += pass ? 0 : 1;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("med2d_accept_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

data::Dataset make_corpus(data::SynthKind kind, int n, int size, uint64_t seed,
                          const data::ShiftParams& shift = {}) {
    data::Dataset ds;
    ds.num_classes = 2;
    for (int i = 0; i < n; ++i) {
        auto s = data::synth_sample(kind, size, mix_seed(seed, static_cast<uint64_t>(i)), shift);
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%04d", i);
        s.source_id = buf;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// --- C1: gradient correctness -------------------------------------------------------

void c1_gradients(std::ostream& detail) {
    using ops::Padding;
    const auto sumsq = [](Tape64& t, Var y) { return ops::sum(t, ops::mul(t, y, y)); };
    double worst_primitive = 0;

    const auto check = [&](const char* name, const GradCheckReport& r, double tol) {
        require(r.pass, std::string(name) + " failed: max_rel_err " + std::to_string(r.max_rel_err));
        if (tol <= 1e-4) worst_primitive = std::max(worst_primitive, r.max_rel_err);
    };

    check("conv2d",
          grad_check_many(
              [&](Tape64& t, const std::vector<Var>& v) {
                  return sumsq(t, ops::conv2d(t, v[0], v[1], v[2], 1, Padding::same));
              },
              {random_uniform<double>({6, 5, 3}, -1, 1, 1), random_uniform<double>({3, 3, 3, 4}, -1, 1, 2),
               random_uniform<double>({4}, -1, 1, 3)},
              1e-5, 1e-4),
          1e-4);
    check("conv2d_stride2_valid",
          grad_check_many(
              [&](Tape64& t, const std::vector<Var>& v) {
                  return sumsq(t, ops::conv2d(t, v[0], v[1], v[2], 2, Padding::valid));
              },
              {random_uniform<double>({7, 7, 2}, -1, 1, 4), random_uniform<double>({3, 3, 2, 2}, -1, 1, 5),
               random_uniform<double>({2}, -1, 1, 6)},
              1e-5, 1e-4),
          1e-4);
    check("depthwise_7x7",
          grad_check_many(
              [&](Tape64& t, const std::vector<Var>& v) {
                  return sumsq(t, ops::depthwise_conv2d(t, v[0], v[1], v[2]));
              },
              {random_uniform<double>({8, 8, 2}, -1, 1, 7), random_uniform<double>({7, 7, 2}, -1, 1, 8),
               random_uniform<double>({2}, -1, 1, 9)},
              1e-5, 1e-4),
          1e-4);
    check("gap", grad_check([&](Tape64& t, Var v) { return sumsq(t, ops::global_avg_pool(t, v)); },
                            random_uniform<double>({5, 6, 3}, -1, 1, 10), 1e-5, 1e-4),
          1e-4);
    check("upsample2x",
          grad_check([&](Tape64& t, Var v) { return sumsq(t, ops::upsample2x(t, v)); },
                     random_uniform<double>({4, 3, 2}, -1, 1, 11), 1e-5, 1e-4),
          1e-4);

    Tensor64 acts = random_uniform<double>({5, 5, 2}, 0.15, 1.0, 12);
    for (int64_t i = 0; i < acts.numel(); i += 2) acts[i] = -acts[i];
    for (auto [name, act] : {std::pair{"relu", ops::Act::relu}, {"elu", ops::Act::elu},
                             {"sigmoid", ops::Act::sigmoid}})
        check(name,
              grad_check(
                  [&, act = act](Tape64& t, Var v) { return sumsq(t, ops::activation(t, act, v)); },
                  acts, 1e-5, 1e-4),
              1e-4);
    {
        const Tensor64 coeff = random_uniform<double>({4, 4, 5}, -1, 1, 13);
        check("softmax_channels",
              grad_check(
                  [&](Tape64& t, Var v) {
                      Var y = ops::activation(t, ops::Act::softmax_channels, v);
                      return ops::sum(t, ops::mul(t, y, t.leaf(coeff)));
                  },
                  random_uniform<double>({4, 4, 5}, -1, 1, 14), 1e-5, 1e-4),
              1e-4);
    }
    check("channel_norm",
          grad_check_many(
              [&](Tape64& t, const std::vector<Var>& v) {
                  return sumsq(t, ops::channel_norm(t, v[0], v[1], v[2], 1e-5));
              },
              {random_uniform<double>({6, 5, 3}, -1, 1, 15), random_uniform<double>({3}, 0.5, 1.5, 16),
               random_uniform<double>({3}, -1, 1, 17)},
              1e-6, 1e-4),
          1e-4);
    check("dropout",
          grad_check([&](Tape64& t, Var v) { return sumsq(t, ops::dropout(t, v, 0.3, 5, true)); },
                     random_uniform<double>({6, 6, 2}, -1, 1, 18), 1e-5, 1e-4),
          1e-4);
    check("elementwise_broadcast",
          grad_check_many(
              [&](Tape64& t, const std::vector<Var>& v) {
                  return sumsq(t, ops::mul(t, v[0], v[1]));
              },
              {random_uniform<double>({4, 4, 3}, -1, 1, 19), random_uniform<double>({1, 1, 3}, -1, 1, 20)},
              1e-5, 1e-4),
          1e-4);
    {
        Tensor64 pred = random_uniform<double>({5, 5, 2}, 0.1, 0.9, 21);
        Tensor64 target({5, 5, 2});
        Rng rng(22);
        for (auto& v : target.data) v = rng.bernoulli(0.5f) ? 1.0 : 0.0;
        check("dice_loss",
              grad_check_many(
                  [&](Tape64& t, const std::vector<Var>& v) {
                      return ops::dice_loss(t, v[0], v[1], 1.0);
                  },
                  {pred, target}, 1e-6, 1e-4),
              1e-4);
        check("bce_loss",
              grad_check_many(
                  [&](Tape64& t, const std::vector<Var>& v) { return ops::bce_loss(t, v[0], v[1]); },
                  {pred, target}, 1e-6, 1e-4),
              1e-4);
        Tensor64 probs({3, 3, 3});
        Rng rng2(23);
        for (int i = 0; i < 9; ++i) {
            double tot = 0;
            for (int c = 0; c < 3; ++c) {
                probs[i * 3 + c] = 0.1 + rng2.uniform_f64();
                tot += probs[i * 3 + c];
            }
            for (int c = 0; c < 3; ++c) probs[i * 3 + c] /= tot;
        }
        Tensor64 onehot = Tensor64::zeros({3, 3, 3});
        for (int i = 0; i < 9; ++i) onehot[i * 3 + rng2.uniform_int(0, 2)] = 1.0;
        check("ce_loss",
              grad_check_many(
                  [&](Tape64& t, const std::vector<Var>& v) { return ops::ce_loss(t, v[0], v[1]); },
                  {probs, onehot}, 1e-6, 1e-4),
              1e-4);
    }

    // full tiny model: 32x32x3 input, widths [8,12,16,24], f64, tol 1e-3,
    // random-coefficient readout, sampled coordinates across input + weights
    const arch::ModelConfig mc = arch::tiny_model_config(32);
    const auto model = arch::build_model<double>(mc, 24);
    const Tensor64 coeff = random_uniform<double>({32, 32, 1}, -1, 1, 25);
    std::vector<Tensor64> inputs;
    inputs.push_back(random_uniform<double>({32, 32, 3}, 0, 1, 26));
    for (const auto& [_, w] : model.weights.items) inputs.push_back(w);
    const auto full = grad_check_many(
        [&](Tape64& t, const std::vector<Var>& v) {
            arch::WeightVars wv;
            for (size_t i = 0; i < model.weights.items.size(); ++i)
                wv.emplace(model.weights.items[i].first, v[i + 1]);
            const auto fwd = arch::model_forward(t, model.plan, wv, v[0]);
            return ops::sum(t, ops::mul(t, fwd.output, t.leaf(coeff)));
        },
        inputs, 1e-5, 1e-3, 2, 27);
    require(full.pass, "full tiny model failed: max_rel_err " + std::to_string(full.max_rel_err));

    detail << "primitives worst " << std::scientific << worst_primitive << ", full model "
           << full.max_rel_err;
}

// --- C2: Med Block contract ----------------------------------------------------------

void c2_med_block(std::ostream& detail) {
    int combos = 0;
    for (int c = 1; c <= 16; ++c) {
        arch::MedBlockConfig cfg;
        cfg.channels = c;
        const auto layers = arch::plan_med_block("s", "b", cfg, true);
        auto weights = arch::init_weights<float>(layers, static_cast<uint64_t>(c));

        // exact internal widths: expanded 6C, squeeze max(1, 6C/24)
        require(weights.at("b.expand.kernel").shape == Shape{1, 1, c, 6 * c},
                "expand width wrong at C=" + std::to_string(c));
        const int squeeze = std::max(1, 6 * c / 24);
        require(weights.at("b.reduce.kernel").shape == Shape{1, 1, 6 * c, squeeze},
                "squeeze width wrong at C=" + std::to_string(c));
        require(weights.at("b.restore.kernel").shape == Shape{1, 1, squeeze, 6 * c},
                "restore width wrong at C=" + std::to_string(c));

        auto zero = weights;
        for (auto& [_, w] : zero.items) std::fill(w.data.begin(), w.data.end(), 0.0f);

        for (int h : {4, 8, 16})
            for (int w : {4, 8, 16}) {
                const Tensor x = random_uniform<float>(
                    {h, w, c}, -1.0f, 1.0f, mix_seed(77, static_cast<uint64_t>(c * 100 + h + w)));
                Tape t;
                arch::WeightVars wv = arch::push_weights(t, weights);
                Var y = arch::med_block_forward(t, t.leaf(x), wv, "b", cfg, true);
                require(t.value(y).shape == x.shape,
                        "shape not preserved at C=" + std::to_string(c));

                Tape tz;
                arch::WeightVars wvz = arch::push_weights(tz, zero);
                Var yz = arch::med_block_forward(tz, tz.leaf(x), wvz, "b", cfg, true);
                require(tz.value(yz).data == x.data,
                        "zero-weight block not identity at C=" + std::to_string(c));
                ++combos;
            }
    }
    detail << combos << " (C,H,W) combinations";
}

// --- C3: filter schedule ----------------------------------------------------------------

void c3_schedule(std::ostream& detail) {
    const std::vector<int> expected{32, 24, 41, 71, 123, 214, 372, 648, 1129, 1967, 3427};
    const arch::FilterSchedule s = arch::filter_schedule();
    require(s.values == expected, "default schedule mismatch");
    detail << "[32..3427] exact";
}

// --- C4: parameter accounting --------------------------------------------------------------

void c4_parameters(std::ostream& detail) {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        arch::ModelConfig cfg = arch::tiny_model_config(32);
        cfg.input_channels = rng.uniform_int(1, 4);
        cfg.num_classes = rng.uniform_int(1, 7);
        for (auto& w : cfg.stage_widths) w = rng.uniform_int(1, 24);
        for (auto& r : cfg.stage_repeats) r = rng.uniform_int(1, 3);
        cfg.med_block.expansion_factor = rng.uniform_int(1, 8);
        cfg.med_block.reduction_divisor = rng.uniform_int(1, 30);
        cfg.med_block.depthwise_kernel = 1 + 2 * rng.uniform_int(0, 4);
        cfg.use_norm = rng.bernoulli(0.7f);
        cfg.ablation.disable_expansion = rng.bernoulli(0.2f);
        cfg.ablation.disable_reduction_gate = rng.bernoulli(0.2f);
        cfg.ablation.plain_cnn_encoder = rng.bernoulli(0.2f);

        const arch::ModelPlan plan = arch::plan_model(cfg);
        const int64_t analytic = arch::count_parameters(plan).total;
        // enumeration oracle: sum of actual weight-tensor element counts
        const auto weights = arch::init_weights<float>(plan.layers, 1 + trial);
        int64_t enumerated = 0;
        for (const auto& [_, w] : weights.items) enumerated += w.numel();
        require(analytic == enumerated, "analytic != enumerated on trial " + std::to_string(trial));
    }

    const arch::ModelConfig def = arch::default_model_config();
    const int64_t total = arch::count_parameters(arch::plan_model(def)).total;
    const double dev = 100.0 * (static_cast<double>(total) - 2.07e6) / 2.07e6;
    detail << "default 256x256 model: " << total << " params, " << std::showpos << std::fixed
           << std::setprecision(1) << dev << "% vs 2.07M reference" << std::noshowpos;
    require(std::abs(dev) < 50.0, "deviation from 2.07M exceeds 50%");
}

// --- C5: desk-scale learning -----------------------------------------------------------------

void c5_learning(std::ostream& detail) {
    // thresholds frozen after the oracle run: all five seeds reached
    // train DSC >= 0.95 and val DSC >= 0.80 within 4 epochs
    const data::Dataset corpus = make_corpus(data::SynthKind::ellipses, 64, 128, 7);
    int passed = 0;
    std::ostringstream per_seed;
    for (uint64_t seed = 0; seed <= 4; ++seed) {
        const data::SplitResult sp = data::split(corpus, {seed});
        arch::ModelConfig mc = arch::tiny_model_config(128);
        train::TrainConfig tc;
        tc.epochs = 500;
        tc.seed = seed;
        tc.early_stop_train_dsc = 0.95f;
        tc.early_stop_val_dsc = 0.80f;

        double train_dsc = 0, val_dsc = 0;
        const auto result = train::train(mc, sp.train, sp.val, tc);
        for (auto it = result.records.rbegin(); it != result.records.rend(); ++it) {
            if (val_dsc == 0 && it->split == "val") val_dsc = it->dsc;
            if (train_dsc == 0 && it->split == "train") train_dsc = it->dsc;
            if (train_dsc != 0 && val_dsc != 0) break;
        }
        const bool ok = train_dsc >= 0.95 && val_dsc >= 0.80 && result.epochs_run <= 500;
        passed += ok;
        per_seed << " s" << seed << (ok ? "+" : "-") << "(" << result.epochs_run << "ep,"
                 << std::fixed << std::setprecision(3) << train_dsc << "/" << val_dsc << ")";
    }
    detail << passed << "/5 seeds" << per_seed.str();
    require(passed >= 4, "fewer than 4 of 5 seeds reached the thresholds");
}

// --- C6: zero-shot harness ----------------------------------------------------------------------

void c6_zero_shot(std::ostream& detail) {
    TempDir tmp;
    const data::Dataset family_a = make_corpus(data::SynthKind::ellipses, 48, 64, 11);
    data::ShiftParams shift;
    shift.brightness = 0.12f;
    shift.contrast_scale = 0.7f;
    shift.noise_scale = 2.0f;
    shift.shape_scale = 1.25f;
    const data::Dataset family_b = make_corpus(data::SynthKind::ellipses, 24, 64, 12, shift);

    const data::SplitResult sp = data::split(family_a, {3});
    arch::ModelConfig mc = arch::tiny_model_config(64);
    train::TrainConfig tc;
    tc.epochs = 12;
    tc.seed = 3;
    const auto result = train::train(mc, sp.train, sp.val, tc);

    const fs::path ckpt_path = tmp.path / "a.m2sn";
    train::save_checkpoint(ckpt_path.string(), result.best);
    const auto bytes_before = slurp(ckpt_path);

    const auto rows = eval::cross_dataset_eval(result.best, "familyA",
                                               {{"A-test", sp.test}, {"B-shifted", family_b}});
    require(rows.size() == 2, "expected 2 rows");

    // no weight mutation: serialized checkpoint bytes identical before/after
    const fs::path ckpt_after = tmp.path / "a_after.m2sn";
    train::save_checkpoint(ckpt_after.string(), result.best);
    require(slurp(ckpt_path) == slurp(ckpt_after), "checkpoint bytes changed");
    require(bytes_before == slurp(ckpt_path), "checkpoint file mutated");

    // Table-3 shape
    std::ostringstream csv;
    eval::write_xeval_csv(csv, rows);
    std::istringstream is(csv.str());
    std::string header;
    std::getline(is, header);
    require(header == "train_data,test_data,method,dsc", "CSV header mismatch");
    int data_rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        ++data_rows;
        require(std::count(line.begin(), line.end(), ',') == 3, "CSV row shape mismatch");
    }
    require(data_rows == 2, "CSV row count mismatch");

    detail << "DSC(A-test) " << std::fixed << std::setprecision(4) << rows[0].dsc
           << " >= DSC(B-shifted) " << rows[1].dsc;
    require(rows[0].dsc >= rows[1].dsc, "zero-shot ordering violated");
}

// --- C7: ablation matrix ----------------------------------------------------------------------

void c7_ablation(std::ostream& detail) {
    TempDir tmp;
    const data::Dataset corpus = make_corpus(data::SynthKind::ellipses, 32, 64, 21);
    const data::SplitResult sp = data::split(corpus, {5});

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

    std::ofstream csv(tmp.path / "ablation.csv");
    csv << "variant,params,train_dsc,val_dsc,diverged\n";
    int64_t baseline_params = 0;
    std::map<std::string, int64_t> params_by_variant;
    std::ostringstream note;
    for (const auto& v : variants) {
        arch::ModelConfig mc = arch::tiny_model_config(64);
        mc.ablation = v.ab;
        const int64_t params = arch::count_parameters(arch::plan_model(mc)).total;
        params_by_variant[v.name] = params;
        if (std::string(v.name) == "baseline") baseline_params = params;

        train::TrainConfig tc;
        tc.epochs = 6;
        tc.seed = 1;
        bool diverged = false;
        double train_dsc = 0, val_dsc = 0;
        try {
            const auto result = train::train(mc, sp.train, sp.val, tc);
            for (auto it = result.records.rbegin(); it != result.records.rend(); ++it)
                if (it->split == "train") {
                    train_dsc = it->dsc;
                    break;
                }
            val_dsc = result.best_val_dsc;
        } catch (const std::runtime_error&) {
            diverged = true;
        }
        csv << v.name << ',' << params << ',' << train_dsc << ',' << val_dsc << ','
            << (diverged ? "yes" : "no") << '\n';
        note << " " << v.name << "=" << params;
        require(!diverged, std::string(v.name) + " diverged");
    }
    csv.close();
    require(fs::file_size(tmp.path / "ablation.csv") > 0, "CSV missing");
    require(params_by_variant["no-expansion"] < baseline_params,
            "no-expansion must shrink the model");
    require(params_by_variant["no-reduction-gate"] < baseline_params,
            "no-reduction-gate must shrink the model");
    detail << "params:" << note.str();
}

// --- C8: metric identities -----------------------------------------------------------------------

void c8_metrics(std::ostream& detail) {
    auto mask_from_bits = [](uint64_t bits) {
        Tensor m({3, 3});
        for (int i = 0; i < 9; ++i) m[i] = (bits >> i) & 1 ? 1.0f : 0.0f;
        return m;
    };
    const auto check_identity = [](const Tensor& a, const Tensor& b) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (int64_t i = 0; i < a.numel(); ++i) {
            const bool pa = a[i] != 0.0f, pb = b[i] != 0.0f;
            tp += pa && pb;
            fp += pa && !pb;
            fn += !pa && pb;
        }
        const double dsc = metrics::dice_metric(a, b, 1);
        const double iou = metrics::iou_metric(a, b, 1);
        const double dsc_exact = 2 * tp + fp + fn == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
        const double iou_exact = tp + fp + fn == 0 ? 1.0 : double(tp) / double(tp + fp + fn);
        require(dsc == dsc_exact, "dice != exact integer ratio");
        require(iou == iou_exact, "iou != exact integer ratio");
        require(std::abs(dsc - 2.0 * iou / (1.0 + iou)) <= 4e-16, "dice/iou identity violated");
    };

    for (uint64_t pa = 0; pa < 512; ++pa)
        for (uint64_t pb = 0; pb < 512; ++pb) check_identity(mask_from_bits(pa), mask_from_bits(pb));

    Rng rng(808);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor a({8, 8}), b({8, 8});
        for (auto& v : a.data) v = rng.bernoulli(0.4f) ? 1.0f : 0.0f;
        for (auto& v : b.data) v = rng.bernoulli(0.4f) ? 1.0f : 0.0f;
        check_identity(a, b);
    }

    // multiclass report equals a confusion-matrix oracle
    const int K = 4;
    Tensor target({12, 12});
    for (auto& v : target.data) v = static_cast<float>(rng.uniform_int(0, K - 1));
    Tensor probs({12, 12, K});
    for (auto& v : probs.data) v = rng.uniform();
    const auto per_class = metrics::sample_report(probs, target, K);

    Tensor pred({12, 12});
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            int best = 0;
            for (int c = 1; c < K; ++c)
                if (probs.at(i, j, c) > probs.at(i, j, best)) best = c;
            pred.at(i, j) = static_cast<float>(best);
        }
    for (int c = 1; c < K; ++c) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (int64_t i = 0; i < pred.numel(); ++i) {
            const bool p = static_cast<int>(pred[i]) == c;
            const bool t = static_cast<int>(target[i]) == c;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
        const double dice = 2 * tp + fp + fn == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
        require(per_class[static_cast<size_t>(c - 1)].dice == dice,
                "multiclass report != confusion oracle");
    }
    detail << "262144 exhaustive + 1000 random identities";
}

// --- C9: format fidelity --------------------------------------------------------------------------

void c9_formats(std::ostream& detail) {
    TempDir tmp;

    // container round trip, 1000 random tensors
    Rng rng(909);
    data::NamedTensors tensors;
    for (int i = 0; i < 1000; ++i) {
        Shape s(static_cast<size_t>(rng.uniform_int(1, 4)));
        for (auto& d : s) d = rng.uniform_int(1, 5);
        Tensor t(s);
        for (auto& v : t.data) v = rng.uniform(-1e6f, 1e6f);
        tensors.emplace_back("t" + std::to_string(i), std::move(t));
    }
    const std::string cpath = (tmp.path / "round.m2sn").string();
    data::write_container(cpath, tensors);
    const auto back = data::read_container(cpath);
    require(back.size() == tensors.size(), "container count mismatch");
    for (size_t i = 0; i < back.size(); ++i) {
        require(back[i].first == tensors[i].first, "container name mismatch");
        require(back[i].second.shape == tensors[i].second.shape, "container shape mismatch");
        require(back[i].second.data == tensors[i].second.data, "container payload not bitwise");
    }

    // checkpoint save/load reproduces predictions bitwise
    const data::Dataset corpus = make_corpus(data::SynthKind::blobs, 12, 32, 31);
    const data::SplitResult sp = data::split(corpus, {6});
    arch::ModelConfig mc = arch::tiny_model_config(32);
    train::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    const auto result = train::train(mc, sp.train, sp.val, tc);
    const std::string kpath = (tmp.path / "ck.m2sn").string();
    train::save_checkpoint(kpath, result.last);
    const auto loaded = train::load_checkpoint(kpath);

    const Tensor x = random_uniform<float>({32, 32, 3}, 0.0f, 1.0f, 41);
    arch::Model m1{arch::plan_model(mc), result.last.weights};
    arch::Model m2{arch::plan_model(loaded.model_cfg), loaded.weights};
    Tape t1, t2;
    const auto o1 = arch::model_forward(t1, m1, t1.leaf(x));
    const auto o2 = arch::model_forward(t2, m2, t2.leaf(x));
    require(t1.value(o1.output).data == t2.value(o2.output).data,
            "checkpoint round trip changed predictions");

    // PGM/PPM round trip
    for (int channels : {1, 3}) {
        data::ImageU8 img;
        img.h = 21;
        img.w = 17;
        img.channels = channels;
        img.pixels.resize(static_cast<size_t>(21 * 17 * channels));
        for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
        const std::string p = (tmp.path / (channels == 1 ? "x.pgm" : "x.ppm")).string();
        data::write_pnm(p, img);
        const auto r = data::read_pnm(p);
        require(r.pixels == img.pixels && r.h == img.h && r.w == img.w, "PNM round trip lossy");
    }
    detail << "container, checkpoint, PNM all bitwise";
}

// --- C10: determinism -------------------------------------------------------------------------------

void c10_determinism(std::ostream& detail) {
    const int saved_threads = kernels::threads();
    kernels::set_threads(1);

    const data::Dataset corpus = make_corpus(data::SynthKind::ellipses, 16, 32, 51);
    const data::SplitResult sp = data::split(corpus, {8});
    arch::ModelConfig mc = arch::tiny_model_config(32);
    train::TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.seed = 13;
    tc.learning_rate = 0.002f;

    // identical metric streams across two runs (wall_ms is wall clock and
    // excluded from the comparison)
    const auto run1 = train::train(mc, sp.train, sp.val, tc);
    const auto run2 = train::train(mc, sp.train, sp.val, tc);
    require(run1.records.size() == run2.records.size(), "record counts differ");
    for (size_t i = 0; i < run1.records.size(); ++i) {
        require(run1.records[i].loss == run2.records[i].loss, "loss stream not bitwise identical");
        require(run1.records[i].dsc == run2.records[i].dsc, "dsc stream not bitwise identical");
        require(run1.records[i].epoch == run2.records[i].epoch &&
                    run1.records[i].split == run2.records[i].split,
                "stream structure differs");
    }
    require(train::weight_hash(run1.last.weights) == train::weight_hash(run2.last.weights),
            "final weights differ");

    // resume-from-checkpoint equals the uninterrupted run
    train::TrainConfig tc_half = tc;
    tc_half.epochs = 2;
    const auto half = train::train(mc, sp.train, sp.val, tc_half);
    const auto rest = train::train(mc, sp.train, sp.val, tc, {}, &half.last);
    require(train::weight_hash(rest.last.weights) == train::weight_hash(run1.last.weights),
            "resumed weights differ from uninterrupted");
    for (size_t i = 0; i < rest.records.size(); ++i) {
        require(rest.records[i].loss == run1.records[i + 4].loss, "resumed loss stream differs");
        require(rest.records[i].dsc == run1.records[i + 4].dsc, "resumed dsc stream differs");
    }

    kernels::set_threads(saved_threads);
    detail << "two runs + resume, " << run1.records.size() << " records bitwise";
}

// --- C11: Grad-CAM ------------------------------------------------------------------------------------

void c11_grad_cam(std::ostream& detail) {
    arch::ModelConfig mc = arch::tiny_model_config(32);
    auto model = arch::build_model<float>(mc, 61);
    const auto sample = data::synth_sample(data::SynthKind::ellipses, 32, 62, {});

    for (const char* layer : {"stem", "enc2", "enc4", "bottleneck", "dec4"}) {
        const Tensor heat = eval::grad_cam(model, sample, layer);
        require(heat.shape == Shape{32, 32}, "heatmap shape wrong");
        for (float v : heat.data) require(v >= 0.0f && v <= 1.0f, "heatmap out of [0,1]");
    }

    // analytic single-channel case: head reads channel 0 of the dec4 tap
    {
        auto& hk = model.weights.at("head.kernel");
        std::fill(hk.data.begin(), hk.data.end(), 0.0f);
        hk.at(0, 0, 0, 0) = 1.0f;
        std::fill(model.weights.at("head.bias").data.begin(),
                  model.weights.at("head.bias").data.end(), 0.0f);

        const Tensor heat = eval::grad_cam(model, sample, "dec4");
        Tape t;
        const auto fwd = arch::model_forward(t, model, t.leaf(sample.image));
        const Tensor& tap = t.value(fwd.taps.at("dec4"));
        float mx = 0.0f, mn = std::numeric_limits<float>::max();
        Tensor ref({32, 32});
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                ref.at(i, j) = std::max(0.0f, tap.at(i, j, 0));
                mx = std::max(mx, ref.at(i, j));
                mn = std::min(mn, ref.at(i, j));
            }
        require(mx > 0.0f, "degenerate analytic case");
        for (auto& v : ref.data) v = (v - mn) / (mx - mn);
        for (int64_t i = 0; i < heat.numel(); ++i)
            require(std::abs(heat[i] - ref[i]) <= 1e-4f,
                    "analytic single-channel heatmap mismatch");
    }

    // all-zero activations stay all-zero
    {
        auto zero_model = model;
        for (auto& [_, w] : zero_model.weights.items)
            std::fill(w.data.begin(), w.data.end(), 0.0f);
        const Tensor heat = eval::grad_cam(zero_model, sample, "enc2");
        for (float v : heat.data) require(v == 0.0f, "all-zero case produced nonzero map");
    }
    detail << "range, analytic, degenerate cases";
}

}  // namespace

int main() {
    // the learning criterion is budgeted for 4 CPU threads; cap there
    kernels::set_threads(std::min(4, kernels::threads()));
    std::printf("acceptance suite: %d worker threads\n", kernels::threads());

    const Criterion criteria[] = {
        {"gradient correctness (primitives 1e-4, full tiny model 1e-3, f64)", c1_gradients},
        {"Med Block contract (shape, identity, 6C / max(1,6C/24) widths)", c2_med_block},
        {"filter schedule defaults [32,24,41,71,123,214,372,648,1129,1967,3427]", c3_schedule},
        {"parameter accounting == enumeration oracle; default model within 50% of 2.07M",
         c4_parameters},
        {"desk-scale learning: 64 ellipses @128, train DSC>=0.95, val DSC>=0.80, 4/5 seeds",
         c5_learning},
        {"zero-shot harness: no weight mutation, Table-3 CSV, DSC(A)>=DSC(B-shifted)",
         c6_zero_shot},
        {"ablation matrix: 4 variants, parameter ordering, no divergence, CSV", c7_ablation},
        {"metric identities: DSC == 2 IoU/(1+IoU); multiclass == confusion oracle", c8_metrics},
        {"format fidelity: container, checkpoint, PGM/PPM bitwise round trips", c9_formats},
        {"determinism: single-thread bitwise metric streams; resume == uninterrupted",
         c10_determinism},
        {"Grad-CAM: range/shape, analytic single-channel case, all-zero map", c11_grad_cam},
    };

    const auto t0 = std::chrono::steady_clock::now();
    int index = 1;
    for (const auto& c : criteria) run_criterion(index++, c);
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::printf("%d/11 criteria passed (%.1fs total)\n", 11 - g_failures, total);
    return g_failures == 0 ? 0 : 1;
}
