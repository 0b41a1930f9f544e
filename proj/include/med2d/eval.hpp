#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "med2d/metrics.hpp"
#include "med2d/train.hpp"

// Dataset-level evaluation, the zero-shot cross-dataset harness, and Grad-CAM
// saliency maps.

namespace med2d::eval {

// Full metrics report for one dataset (inference mode, deterministic
// source-id order).
metrics::DatasetReport evaluate_dataset(const arch::Model& model, const data::Dataset& ds,
                                        const std::string& dataset_id,
                                        const std::string& checkpoint_id, int batch_size = 8);

struct XEvalRow {
    std::string train_data, test_data, method;
    double dsc = 0;
};

// Evaluates a trained checkpoint on each test corpus without any weight
// update (the weight hash is asserted identical before and after).
std::vector<XEvalRow> cross_dataset_eval(
    const train::Checkpoint& ckpt, const std::string& train_corpus_id,
    const std::vector<std::pair<std::string, data::Dataset>>& test_corpora, int batch_size = 8);

void write_xeval_csv(std::ostream& os, const std::vector<XEvalRow>& rows);

// Grad-CAM over a stage activation: channel weights are the spatially pooled
// gradients of the target score, the map is the ReLU of the weighted channel
// sum, bilinearly upsampled to the input size and min-max normalized
// (an all-zero map stays all-zero). target_class -1 = total foreground score.
Tensor grad_cam(const arch::Model& model, const data::SegmentationSample& sample,
                const std::string& layer, int target_class = -1);

std::vector<std::string> grad_cam_layers();

}  // namespace med2d::eval
