#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "med2d/tensor.hpp"

// Segmentation metrics and report emission. Aggregation is arithmetic mean
// over samples first, then over foreground classes (class 0 is background and
// excluded from reports). A class absent from both prediction and target
// scores 1.0 and is flagged.

namespace med2d::metrics {

// Overlap of hard label maps for one class: 2|A n B| / (|A| + |B|),
// both-empty convention 1.0.
double dice_metric(const Tensor& pred_mask, const Tensor& target_mask, int class_id);
double iou_metric(const Tensor& pred_mask, const Tensor& target_mask, int class_id);

// argmax (K >= 2) or thresholded sigmoid channel (K == 1) -> H x W label map
Tensor hard_prediction(const Tensor& pred_probs, float threshold = 0.5f);

struct ClassMetrics {
    int class_id = 0;
    double dice = 0, iou = 0, precision = 0, recall = 0;
    bool empty_empty = false;
};

// Per-class metrics of one sample against its ground-truth label map.
// num_classes counts labels (binary = 2); foreground classes are 1..K-1.
std::vector<ClassMetrics> sample_report(const Tensor& pred_probs, const Tensor& target_mask,
                                        int num_classes, float threshold = 0.5f);

struct DatasetReport {
    std::string dataset_id;
    std::string checkpoint_id;
    std::string modality = "synthetic";
    int image_h = 0, image_w = 0;
    int num_classes = 2;
    int sample_count = 0;
    std::vector<double> class_dsc, class_iou, class_precision, class_recall;  // per fg class
    std::vector<int> empty_empty_count;                                       // per fg class
    double mean_dsc = 0, mean_iou = 0, mean_precision = 0, mean_recall = 0;
    double wall_ms = 0;
};

// mean over samples per class, then mean over classes
DatasetReport aggregate_reports(const std::vector<std::vector<ClassMetrics>>& per_sample,
                                int num_classes);

void write_report_jsonl(std::ostream& os, const std::vector<DatasetReport>& rows);
void write_table_csv(std::ostream& os, const std::vector<DatasetReport>& rows);

struct ScatterRow {
    std::string model;
    double params_m = 0;
    double dsc = 0;
};

// CSV "model,params_m,dsc" sorted by params ascending.
void emit_scatter(std::ostream& os, std::vector<ScatterRow> rows);

}  // namespace med2d::metrics
