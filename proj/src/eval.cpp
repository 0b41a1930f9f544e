#include "med2d/eval.hpp"

#include <algorithm>
#include <chrono>

#include "med2d/losses.hpp"

namespace med2d::eval {

metrics::DatasetReport evaluate_dataset(const arch::Model& model, const data::Dataset& ds,
                                        const std::string& dataset_id,
                                        const std::string& checkpoint_id, int batch_size) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<metrics::ClassMetrics>> per_sample;

    for (size_t start = 0; start < ds.samples.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<const data::SegmentationSample*> batch;
        for (size_t i = start; i < std::min(ds.samples.size(), start + batch_size); ++i)
            batch.push_back(&ds.samples[i]);

        Tape tape;
        arch::WeightVars wv = arch::push_weights(tape, model.weights);
        const auto fwd =
            arch::model_forward(tape, model.plan, wv, tape.leaf(train::batch_images(batch)));
        const Tensor& probs = tape.value(fwd.output);
        const int h = probs.dim(1), w = probs.dim(2), k = probs.dim(3);
        for (size_t s = 0; s < batch.size(); ++s) {
            Tensor p({h, w, k});
            std::copy(probs.data.begin() + static_cast<int64_t>(s) * h * w * k,
                      probs.data.begin() + static_cast<int64_t>(s + 1) * h * w * k,
                      p.data.begin());
            per_sample.push_back(metrics::sample_report(p, batch[s]->mask, ds.num_classes));
        }
    }

    metrics::DatasetReport rep = metrics::aggregate_reports(per_sample, ds.num_classes);
    rep.dataset_id = dataset_id;
    rep.checkpoint_id = checkpoint_id;
    if (!ds.samples.empty()) {
        rep.image_h = ds.samples[0].image.dim(0);
        rep.image_w = ds.samples[0].image.dim(1);
    }
    rep.wall_ms = static_cast<double>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count());
    return rep;
}

std::vector<XEvalRow> cross_dataset_eval(
    const train::Checkpoint& ckpt, const std::string& train_corpus_id,
    const std::vector<std::pair<std::string, data::Dataset>>& test_corpora, int batch_size) {
    arch::Model model;
    model.plan = arch::plan_model(ckpt.model_cfg);
    model.weights = ckpt.weights;

    for (const auto& [id, ds] : test_corpora)
        if (train::output_channels(ds.num_classes) != ckpt.model_cfg.num_classes)
            throw std::invalid_argument("cross_dataset_eval: corpus '" + id + "' needs " +
                                        std::to_string(train::output_channels(ds.num_classes)) +
                                        " output channels, checkpoint has " +
                                        std::to_string(ckpt.model_cfg.num_classes));

    const uint64_t hash_before = train::weight_hash(model.weights);
    std::vector<XEvalRow> rows;
    for (const auto& [id, ds] : test_corpora) {
        const auto rep = evaluate_dataset(model, ds, id, train_corpus_id, batch_size);
        rows.push_back({train_corpus_id, id, "med2d-segnet", rep.mean_dsc});
    }
    if (train::weight_hash(model.weights) != hash_before)
        throw std::logic_error("cross_dataset_eval: weights changed during evaluation");
    return rows;
}

void write_xeval_csv(std::ostream& os, const std::vector<XEvalRow>& rows) {
    os << "train_data,test_data,method,dsc\n";
    for (const auto& r : rows)
        os << r.train_data << ',' << r.test_data << ',' << r.method << ',' << r.dsc << '\n';
}

std::vector<std::string> grad_cam_layers() {
    return {"stem", "enc1", "enc2", "enc3", "enc4", "bottleneck", "dec1", "dec2", "dec3", "dec4"};
}

Tensor grad_cam(const arch::Model& model, const data::SegmentationSample& sample,
                const std::string& layer, int target_class) {
    const auto known = grad_cam_layers();
    if (std::find(known.begin(), known.end(), layer) == known.end())
        throw std::invalid_argument("grad_cam: unknown layer '" + layer + "'");
    const int k = model.plan.cfg.num_classes;
    if (target_class >= k)
        throw std::invalid_argument("grad_cam: class " + std::to_string(target_class) +
                                    " out of range");

    Tape tape;
    arch::WeightVars wv = arch::push_weights(tape, model.weights);
    const auto fwd = arch::model_forward(tape, model.plan, wv, tape.leaf(sample.image));
    const Var tap = fwd.taps.at(layer);

    // target score: sum of the chosen logit channels over all pixels.
    // Binary heads have one foreground channel; multiclass foreground is 1..K-1.
    int c0 = 0, c1 = k;
    if (target_class >= 0) {
        c0 = target_class;
        c1 = target_class + 1;
    } else if (k >= 2) {
        c0 = 1;
    }
    Var score = ops::sum_channels(tape, fwd.logits, c0, c1);
    tape.backward(score);

    const Tensor& act = tape.value(tap);
    const Tensor* grad = tape.grad_if(tap);
    const int h = act.dim(0), w = act.dim(1), c = act.dim(2);

    // channel weights: GAP of d(score)/d(activation)
    std::vector<double> wc(static_cast<size_t>(c), 0.0);
    if (grad) {
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int ch = 0; ch < c; ++ch) wc[static_cast<size_t>(ch)] += grad->at(i, j, ch);
        for (auto& v : wc) v /= static_cast<double>(h) * w;
    }

    Tensor map({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0;
            for (int ch = 0; ch < c; ++ch) acc += wc[static_cast<size_t>(ch)] * act.at(i, j, ch);
            map.at(i, j) = acc > 0 ? static_cast<float>(acc) : 0.0f;
        }

    Tensor full = data::resize_bilinear(map, sample.image.dim(0), sample.image.dim(1));

    float mx = 0.0f, mn = std::numeric_limits<float>::max();
    for (float v : full.data) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (mx > 0.0f) {
        const float range = mx - mn;
        for (auto& v : full.data) v = range > 0 ? (v - mn) / range : 1.0f;
    }
    return full;  // all-zero map stays all-zero
}

}  // namespace med2d::eval
