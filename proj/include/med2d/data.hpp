#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "med2d/tensor.hpp"

// Dataset layout, PNM codecs, deterministic splitting, synthetic corpus
// generation, and the binary tensor container used for checkpoints.
//
// On-disk layout: <root>/images/<id>.(pgm|ppm) paired with
// <root>/masks/<id>.pgm by stem.

namespace med2d::data {

// --- 8-bit image I/O (binary P5/P6) ------------------------------------------

struct ImageU8 {
    int h = 0, w = 0, channels = 0;  // channels 1 or 3, interleaved rows
    std::vector<uint8_t> pixels;
};

ImageU8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageU8& img);  // P5 or P6 by channel count

// --- tensor container ---------------------------------------------------------
//
// magic "M2SN" | version u32=1 | tensor_count u32 | per tensor:
// name_len u32, name bytes, rank u8, dims u64 each, payload f32 LE.
// All integers little-endian. No checksum: corruption detection is out of
// scope for this format.

enum class ContainerErrorKind { io, bad_magic, version_mismatch, truncated, duplicate_name };

class ContainerError : public std::runtime_error {
public:
    ContainerError(ContainerErrorKind k, const std::string& msg)
        : std::runtime_error(msg), kind(k) {}
    ContainerErrorKind kind;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_container(const std::string& path, const NamedTensors& tensors);
NamedTensors read_container(const std::string& path);

// --- datasets ------------------------------------------------------------------

struct SegmentationSample {
    Tensor image;           // H x W x 3 in [0,1]
    Tensor mask;            // H x W integer class ids in [0, num_classes)
    std::string source_id;  // file stem
};

struct Dataset {
    std::vector<SegmentationSample> samples;
    int num_classes = 2;  // label count; 2 = binary {0,1}

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Loads all image/mask pairs under root, resized to target_h x target_w
// (bilinear images, nearest masks). Binary masks with raw values {0,255}
// collapse to {0,1}. Orphan files and out-of-range labels are errors.
Dataset load_dataset(const std::string& root, int num_classes, int target_h, int target_w);

struct SplitDescriptor {
    uint64_t seed = 0;
    double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
};

struct SplitResult {
    Dataset train, val, test;
};

// Deterministic, disjoint, exhaustive partition keyed on (seed, sorted ids);
// floor-based val/test sizes, remainder to train.
SplitResult split(const Dataset& ds, const SplitDescriptor& desc);

// --- synthetic corpora -----------------------------------------------------------

enum class SynthKind { ellipses, blobs, vessels };

SynthKind synth_kind_from_string(const std::string& s);
std::string to_string(SynthKind k);

// Appearance/shape perturbation producing a distinct corpus family for
// zero-shot evaluation. Neutral defaults leave the generator unchanged.
struct ShiftParams {
    float brightness = 0.0f;     // additive intensity delta
    float contrast_scale = 1.0f; // scales foreground/background separation
    float noise_scale = 1.0f;    // scales pixel noise sigma
    float shape_scale = 1.0f;    // scales structure size

    bool neutral() const {
        return brightness == 0.0f && contrast_scale == 1.0f && noise_scale == 1.0f &&
               shape_scale == 1.0f;
    }
};

SegmentationSample synth_sample(SynthKind kind, int size, uint64_t sample_seed,
                                const ShiftParams& shift);

// Writes n generated samples to out_dir in the standard dataset layout.
// Byte-identical for identical (kind, n, size, seed, shift).
void synth_corpus(SynthKind kind, int n, int size, uint64_t seed, const ShiftParams& shift,
                  const std::string& out_dir);

// --- resizing ---------------------------------------------------------------------

Tensor resize_bilinear(const Tensor& img, int H, int W);      // rank 2 or 3
Tensor resize_nearest_mask(const Tensor& mask, int H, int W); // rank 2, label-preserving

}  // namespace med2d::data
