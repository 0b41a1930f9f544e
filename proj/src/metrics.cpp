#include "med2d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>

namespace med2d::metrics {

namespace {

struct Counts {
    int64_t tp = 0, fp = 0, fn = 0;
};

Counts class_counts(const Tensor& pred, const Tensor& target, int class_id) {
    if (pred.shape != target.shape)
        throw std::invalid_argument("metric: mask shapes differ: " + shape_str(pred.shape) +
                                    " vs " + shape_str(target.shape));
    Counts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = static_cast<int>(pred[i]) == class_id;
        const bool t = static_cast<int>(target[i]) == class_id;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
    }
    return c;
}

}  // namespace

double dice_metric(const Tensor& pred_mask, const Tensor& target_mask, int class_id) {
    const Counts c = class_counts(pred_mask, target_mask, class_id);
    const int64_t denom = 2 * c.tp + c.fp + c.fn;  // |A| + |B|
    if (denom == 0) return 1.0;                    // both empty
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou_metric(const Tensor& pred_mask, const Tensor& target_mask, int class_id) {
    const Counts c = class_counts(pred_mask, target_mask, class_id);
    const int64_t denom = c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

Tensor hard_prediction(const Tensor& pred_probs, float threshold) {
    if (pred_probs.rank() != 3)
        throw std::invalid_argument("hard_prediction: expected H x W x K probabilities, got " +
                                    shape_str(pred_probs.shape));
    const int h = pred_probs.dim(0), w = pred_probs.dim(1), k = pred_probs.dim(2);
    Tensor out({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (k == 1) {
                out.at(i, j) = pred_probs.at(i, j, 0) > threshold ? 1.0f : 0.0f;
            } else {
                int best = 0;
                for (int c = 1; c < k; ++c)
                    if (pred_probs.at(i, j, c) > pred_probs.at(i, j, best)) best = c;
                out.at(i, j) = static_cast<float>(best);
            }
        }
    return out;
}

std::vector<ClassMetrics> sample_report(const Tensor& pred_probs, const Tensor& target_mask,
                                        int num_classes, float threshold) {
    const Tensor pred = hard_prediction(pred_probs, threshold);
    std::vector<ClassMetrics> out;
    for (int c = 1; c < num_classes; ++c) {
        const Counts cc = class_counts(pred, target_mask, c);
        ClassMetrics m;
        m.class_id = c;
        m.empty_empty = cc.tp + cc.fp + cc.fn == 0;
        m.dice = 2 * cc.tp + cc.fp + cc.fn == 0
                     ? 1.0
                     : 2.0 * cc.tp / static_cast<double>(2 * cc.tp + cc.fp + cc.fn);
        m.iou = cc.tp + cc.fp + cc.fn == 0
                    ? 1.0
                    : static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fp + cc.fn);
        if (cc.tp + cc.fp == 0)
            m.precision = cc.fn == 0 ? 1.0 : 0.0;  // nothing predicted
        else
            m.precision = static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fp);
        if (cc.tp + cc.fn == 0)
            m.recall = cc.fp == 0 ? 1.0 : 0.0;  // nothing to find
        else
            m.recall = static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fn);
        out.push_back(m);
    }
    return out;
}

DatasetReport aggregate_reports(const std::vector<std::vector<ClassMetrics>>& per_sample,
                                int num_classes) {
    DatasetReport r;
    r.num_classes = num_classes;
    r.sample_count = static_cast<int>(per_sample.size());
    const int fg = num_classes - 1;
    r.class_dsc.assign(static_cast<size_t>(fg), 0.0);
    r.class_iou.assign(static_cast<size_t>(fg), 0.0);
    r.class_precision.assign(static_cast<size_t>(fg), 0.0);
    r.class_recall.assign(static_cast<size_t>(fg), 0.0);
    r.empty_empty_count.assign(static_cast<size_t>(fg), 0);
    if (per_sample.empty() || fg == 0) return r;

    for (const auto& sample : per_sample)
        for (int c = 0; c < fg; ++c) {
            r.class_dsc[static_cast<size_t>(c)] += sample[static_cast<size_t>(c)].dice;
            r.class_iou[static_cast<size_t>(c)] += sample[static_cast<size_t>(c)].iou;
            r.class_precision[static_cast<size_t>(c)] += sample[static_cast<size_t>(c)].precision;
            r.class_recall[static_cast<size_t>(c)] += sample[static_cast<size_t>(c)].recall;
            r.empty_empty_count[static_cast<size_t>(c)] +=
                sample[static_cast<size_t>(c)].empty_empty ? 1 : 0;
        }
    const double n = static_cast<double>(per_sample.size());
    for (int c = 0; c < fg; ++c) {
        r.class_dsc[static_cast<size_t>(c)] /= n;
        r.class_iou[static_cast<size_t>(c)] /= n;
        r.class_precision[static_cast<size_t>(c)] /= n;
        r.class_recall[static_cast<size_t>(c)] /= n;
        r.mean_dsc += r.class_dsc[static_cast<size_t>(c)];
        r.mean_iou += r.class_iou[static_cast<size_t>(c)];
        r.mean_precision += r.class_precision[static_cast<size_t>(c)];
        r.mean_recall += r.class_recall[static_cast<size_t>(c)];
    }
    r.mean_dsc /= fg;
    r.mean_iou /= fg;
    r.mean_precision /= fg;
    r.mean_recall /= fg;
    return r;
}

void write_report_jsonl(std::ostream& os, const std::vector<DatasetReport>& rows) {
    for (const auto& r : rows) {
        nlohmann::json j;
        j["dataset"] = r.dataset_id;
        j["checkpoint"] = r.checkpoint_id;
        j["modality"] = r.modality;
        j["image_size"] = std::to_string(r.image_h) + "x" + std::to_string(r.image_w);
        j["num_classes"] = r.num_classes;
        j["samples"] = r.sample_count;
        j["dsc"] = r.mean_dsc;
        j["iou"] = r.mean_iou;
        j["precision"] = r.mean_precision;
        j["recall"] = r.mean_recall;
        j["class_dsc"] = r.class_dsc;
        j["class_iou"] = r.class_iou;
        j["empty_empty_count"] = r.empty_empty_count;
        j["wall_ms"] = r.wall_ms;
        os << j.dump() << '\n';
    }
}

void write_table_csv(std::ostream& os, const std::vector<DatasetReport>& rows) {
    os << "modality,dataset,image_size,dsc\n";
    for (const auto& r : rows)
        os << r.modality << ',' << r.dataset_id << ',' << r.image_h << " x " << r.image_w << ','
           << std::fixed << std::setprecision(4) << r.mean_dsc << '\n';
}

void emit_scatter(std::ostream& os, std::vector<ScatterRow> rows) {
    for (const auto& r : rows) {
        if (!(r.params_m > 0))
            throw std::invalid_argument("emit_scatter: params must be > 0 for " + r.model);
        if (r.dsc < 0 || r.dsc > 1)
            throw std::invalid_argument("emit_scatter: dsc out of [0,1] for " + r.model);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ScatterRow& a, const ScatterRow& b) { return a.params_m < b.params_m; });
    os << "model,params_m,dsc\n";
    for (const auto& r : rows) {
        os << r.model << ',';
        // trim trailing zeros so 2.07 stays "2.07"
        std::ostringstream p, d;
        p << r.params_m;
        d << r.dsc;
        os << p.str() << ',' << d.str() << '\n';
    }
}

}  // namespace med2d::metrics
