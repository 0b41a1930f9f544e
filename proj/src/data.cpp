#include "med2d/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "med2d/kernels.hpp"

namespace fs = std::filesystem;

namespace med2d::data {

// --- PNM -----------------------------------------------------------------------

namespace {

// skips whitespace and '#' comment lines between header tokens
int next_header_int(std::istream& in, const std::string& path) {
    for (;;) {
        int c = in.get();
        if (c == EOF) throw std::runtime_error(path + ": truncated PNM header");
        if (std::isspace(c)) continue;
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        in.unget();
        int v;
        if (!(in >> v)) throw std::runtime_error(path + ": malformed PNM header");
        return v;
    }
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    int channels;
    if (m0 == 'P' && m1 == '5') channels = 1;
    else if (m0 == 'P' && m1 == '6') channels = 3;
    else throw std::runtime_error(path + ": not a binary PGM/PPM (P5/P6) file");

    ImageU8 img;
    img.channels = channels;
    img.w = next_header_int(in, path);
    img.h = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (img.w < 1 || img.h < 1) throw std::runtime_error(path + ": bad dimensions");
    if (maxval < 1 || maxval > 255)
        throw std::runtime_error(path + ": only 8-bit PNM supported, maxval=" +
                                 std::to_string(maxval));
    in.get();  // single whitespace byte before raster

    const size_t n = static_cast<size_t>(img.w) * img.h * channels;
    img.pixels.resize(n);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw std::runtime_error(path + ": truncated PNM raster");
    if (maxval != 255)
        for (auto& p : img.pixels)
            p = static_cast<uint8_t>(p * 255 / maxval);
    return img;
}

void write_pnm(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument(path + ": PNM writer needs 1 or 3 channels");
    if (img.pixels.size() != static_cast<size_t>(img.w) * img.h * img.channels)
        throw std::invalid_argument(path + ": pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

// --- tensor container ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', '2', 'S', 'N'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& path;
    std::ifstream in;
    explicit Reader(const std::string& p) : path(p), in(p, std::ios::binary) {
        if (!in) throw ContainerError(ContainerErrorKind::io, path + ": cannot open");
    }
    void bytes(void* dst, size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n)
            throw ContainerError(ContainerErrorKind::truncated, path + ": truncated container");
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    uint64_t u64() {
        uint64_t v = 0;
        uint8_t b[8];
        bytes(b, 8);
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
};

}  // namespace

void write_container(const std::string& path, const NamedTensors& tensors) {
    std::set<std::string> seen;
    for (const auto& [name, t] : tensors)
        if (!seen.insert(name).second)
            throw ContainerError(ContainerErrorKind::duplicate_name,
                                 path + ": duplicate tensor name '" + name + "'");

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf.append(name);
        buf.push_back(static_cast<char>(t.rank()));
        for (int d : t.shape) put_u64(buf, static_cast<uint64_t>(d));
        for (float v : t.data) put_u32(buf, std::bit_cast<uint32_t>(v));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContainerError(ContainerErrorKind::io, path + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw ContainerError(ContainerErrorKind::io, path + ": write failed");
}

NamedTensors read_container(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ContainerError(ContainerErrorKind::bad_magic, path + ": bad container magic");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw ContainerError(ContainerErrorKind::version_mismatch,
                             path + ": unsupported container version " + std::to_string(version));
    const uint32_t count = r.u32();

    NamedTensors out;
    out.reserve(count);
    std::set<std::string> seen;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        if (!seen.insert(name).second)
            throw ContainerError(ContainerErrorKind::duplicate_name,
                                 path + ": duplicate tensor name '" + name + "'");
        uint8_t rank;
        r.bytes(&rank, 1);
        if (rank < 1 || rank > 4)
            throw ContainerError(ContainerErrorKind::truncated,
                                 path + ": bad rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u64());
        validate_shape(shape);
        Tensor t(shape);
        for (auto& v : t.data) v = std::bit_cast<float>(r.u32());
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

// --- dataset loading ----------------------------------------------------------------

namespace {

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t({img.h, img.w, 3});
    const float inv = 1.0f / 255.0f;
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j)
            for (int c = 0; c < 3; ++c) {
                const int sc = img.channels == 3 ? c : 0;
                t.at(i, j, c) = img.pixels[(static_cast<size_t>(i) * img.w + j) * img.channels +
                                           static_cast<size_t>(sc)] *
                                inv;
            }
    return t;
}

Tensor mask_to_tensor(const ImageU8& img, int num_classes, const std::string& path) {
    if (img.channels != 1) throw std::runtime_error(path + ": mask must be single-channel");
    Tensor m({img.h, img.w});
    bool only_0_255 = true;
    for (uint8_t p : img.pixels)
        if (p != 0 && p != 255) {
            only_0_255 = false;
            break;
        }
    const bool collapse = num_classes == 2 && only_0_255;
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            int v = img.pixels[static_cast<size_t>(i) * img.w + j];
            if (collapse) v = v == 255 ? 1 : 0;
            if (v >= num_classes)
                throw std::runtime_error(path + ": mask value " + std::to_string(v) +
                                         " >= num_classes " + std::to_string(num_classes));
            m.at(i, j) = static_cast<float>(v);
        }
    return m;
}

}  // namespace

Tensor resize_bilinear(const Tensor& img, int H, int W) {
    if (img.rank() != 2 && img.rank() != 3)
        throw std::invalid_argument("resize_bilinear: expected rank 2 or 3");
    const int h = img.dim(0), w = img.dim(1);
    const int c = img.rank() == 3 ? img.dim(2) : 1;
    if (h == H && w == W) return img;
    Tensor out(img.rank() == 3 ? Shape{H, W, c} : Shape{H, W});
    kernels::resize_bilinear(img.ptr(), h, w, c, out.ptr(), H, W);
    return out;
}

Tensor resize_nearest_mask(const Tensor& mask, int H, int W) {
    if (mask.rank() != 2) throw std::invalid_argument("resize_nearest_mask: expected rank 2");
    const int h = mask.dim(0), w = mask.dim(1);
    if (h == H && w == W) return mask;
    Tensor out({H, W});
    kernels::resize_nearest(mask.ptr(), h, w, 1, out.ptr(), H, W);
    return out;
}

Dataset load_dataset(const std::string& root, int num_classes, int target_h, int target_w) {
    if (num_classes < 2) throw std::invalid_argument("load_dataset: num_classes must be >= 2");
    const fs::path images = fs::path(root) / "images";
    const fs::path masks = fs::path(root) / "masks";

    auto collect = [](const fs::path& dir, const char* what) {
        std::map<std::string, fs::path> out;
        if (!fs::exists(dir)) return out;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            const std::string ext = e.path().extension().string();
            if (ext == ".pgm" || ext == ".ppm") {
                out[e.path().stem().string()] = e.path();
            } else if (ext == ".png") {
                throw std::runtime_error(e.path().string() +
                                         ": PNG support is not built into this binary");
            } else {
                throw std::runtime_error(e.path().string() + std::string(": unsupported ") +
                                         what + " format");
            }
        }
        return out;
    };

    const auto image_files = collect(images, "image");
    const auto mask_files = collect(masks, "mask");

    for (const auto& [id, p] : image_files)
        if (!mask_files.count(id))
            throw std::runtime_error(p.string() + ": image has no matching mask");
    for (const auto& [id, p] : mask_files)
        if (!image_files.count(id))
            throw std::runtime_error(p.string() + ": mask has no matching image");

    Dataset ds;
    ds.num_classes = num_classes;
    for (const auto& [id, ipath] : image_files) {
        SegmentationSample s;
        s.source_id = id;
        s.image = resize_bilinear(image_to_tensor(read_pnm(ipath.string())), target_h, target_w);
        s.mask = resize_nearest_mask(
            mask_to_tensor(read_pnm(mask_files.at(id).string()), num_classes,
                           mask_files.at(id).string()),
            target_h, target_w);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// --- splitting --------------------------------------------------------------------

SplitResult split(const Dataset& ds, const SplitDescriptor& desc) {
    if (std::abs(desc.train_frac + desc.val_frac + desc.test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");

    std::vector<size_t> order(ds.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return ds.samples[a].source_id < ds.samples[b].source_id;
    });

    Rng rng(mix_seed(desc.seed, 0x73706c6974ULL));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_u64() % i]);

    const size_t n = order.size();
    const size_t n_val = static_cast<size_t>(std::floor(desc.val_frac * static_cast<double>(n)));
    const size_t n_test = static_cast<size_t>(std::floor(desc.test_frac * static_cast<double>(n)));
    const size_t n_train = n - n_val - n_test;

    SplitResult r;
    r.train.num_classes = r.val.num_classes = r.test.num_classes = ds.num_classes;
    for (size_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[order[i]];
        if (i < n_train) r.train.samples.push_back(s);
        else if (i < n_train + n_val) r.val.samples.push_back(s);
        else r.test.samples.push_back(s);
    }
    return r;
}

// --- synthetic corpora ---------------------------------------------------------------

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "ellipses") return SynthKind::ellipses;
    if (s == "blobs") return SynthKind::blobs;
    if (s == "vessels") return SynthKind::vessels;
    throw std::invalid_argument("unknown synthetic corpus kind '" + s + "'");
}

std::string to_string(SynthKind k) {
    switch (k) {
        case SynthKind::ellipses: return "ellipses";
        case SynthKind::blobs: return "blobs";
        case SynthKind::vessels: return "vessels";
    }
    return "?";
}

namespace {

struct Field {
    int size;
    std::vector<float> gray;  // pre-tint intensity
    std::vector<uint8_t> mask;

    explicit Field(int s) : size(s), gray(static_cast<size_t>(s) * s, 0.0f),
                            mask(static_cast<size_t>(s) * s, 0) {}

    float fg_fraction() const {
        size_t c = 0;
        for (uint8_t m : mask) c += m;
        return static_cast<float>(c) / static_cast<float>(mask.size());
    }
};

void paint_background(Field& f, Rng& rng, const ShiftParams& shift) {
    const int S = f.size;
    const float base = rng.uniform(0.25f, 0.40f);
    // low-frequency texture: three random sinusoids
    float fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
        fx[k] = rng.uniform(1.0f, 4.0f) * 6.2831853f / static_cast<float>(S);
        fy[k] = rng.uniform(1.0f, 4.0f) * 6.2831853f / static_cast<float>(S);
        ph[k] = rng.uniform(0.0f, 6.2831853f);
    }
    const float noise_sigma = 0.02f * shift.noise_scale;
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
            float v = base;
            for (int k = 0; k < 3; ++k)
                v += 0.018f * std::sin(fx[k] * static_cast<float>(j) +
                                       fy[k] * static_cast<float>(i) + ph[k]);
            v += noise_sigma * rng.normal();
            f.gray[static_cast<size_t>(i) * S + j] = v;
        }
}

void paint_ellipses(Field& f, Rng& rng, const ShiftParams& shift) {
    const int S = f.size;
    const int count = rng.uniform_int(1, 3);
    const float delta = rng.uniform(0.22f, 0.32f) * shift.contrast_scale;
    for (int e = 0; e < count; ++e) {
        const float cx = rng.uniform(0.25f, 0.75f) * S;
        const float cy = rng.uniform(0.25f, 0.75f) * S;
        const float a = rng.uniform(0.10f, 0.20f) * S * shift.shape_scale;
        const float b = a * rng.uniform(0.55f, 1.0f);
        const float th = rng.uniform(0.0f, 3.14159265f);
        const float ct = std::cos(th), st = std::sin(th);
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const float dx = static_cast<float>(j) - cx, dy = static_cast<float>(i) - cy;
                const float u = (ct * dx + st * dy) / a;
                const float v = (-st * dx + ct * dy) / b;
                if (u * u + v * v <= 1.0f) {
                    f.mask[static_cast<size_t>(i) * S + j] = 1;
                    f.gray[static_cast<size_t>(i) * S + j] += delta;
                }
            }
    }
}

void paint_blobs(Field& f, Rng& rng, const ShiftParams& shift) {
    const int S = f.size;
    const int count = rng.uniform_int(3, 6);
    const float delta = rng.uniform(0.24f, 0.32f) * shift.contrast_scale;
    std::vector<float> field(static_cast<size_t>(S) * S, 0.0f);
    for (int b = 0; b < count; ++b) {
        const float cx = rng.uniform(0.15f, 0.85f) * S;
        const float cy = rng.uniform(0.15f, 0.85f) * S;
        const float sigma = rng.uniform(0.06f, 0.12f) * S * shift.shape_scale;
        const float amp = rng.uniform(0.75f, 1.0f);
        const float inv2s2 = 1.0f / (2.0f * sigma * sigma);
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const float dx = static_cast<float>(j) - cx, dy = static_cast<float>(i) - cy;
                field[static_cast<size_t>(i) * S + j] += amp * std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
    }
    for (size_t i = 0; i < field.size(); ++i)
        if (field[i] > 0.62f) {
            f.mask[i] = 1;
            f.gray[i] += delta;
        }
}

void paint_vessels(Field& f, Rng& rng, const ShiftParams& shift) {
    const int S = f.size;
    const int count = rng.uniform_int(2, 4);
    const float delta = rng.uniform(0.22f, 0.30f) * shift.contrast_scale;
    std::vector<uint8_t> curve(static_cast<size_t>(S) * S, 0);
    for (int k = 0; k < count; ++k) {
        const bool horizontal = rng.bernoulli(0.5f);
        float pos = rng.uniform(0.15f, 0.85f) * S;
        float vel = rng.uniform(-0.6f, 0.6f);
        const int radius = rng.uniform_int(1, static_cast<int>(std::max(
                                                  1.0f, 3.0f * shift.shape_scale)));
        for (int t = 0; t < S; ++t) {
            vel = 0.9f * vel + 0.28f * (rng.uniform() - 0.5f);
            pos += vel;
            if (pos < 2.0f) { pos = 2.0f; vel = std::abs(vel); }
            if (pos > S - 3.0f) { pos = S - 3.0f; vel = -std::abs(vel); }
            const int a = horizontal ? static_cast<int>(pos) : t;
            const int b = horizontal ? t : static_cast<int>(pos);
            for (int di = -radius; di <= radius; ++di)
                for (int dj = -radius; dj <= radius; ++dj) {
                    if (di * di + dj * dj > radius * radius) continue;
                    const int ii = a + di, jj = b + dj;
                    if (ii >= 0 && ii < S && jj >= 0 && jj < S)
                        curve[static_cast<size_t>(ii) * S + jj] = 1;
                }
        }
    }
    for (size_t i = 0; i < curve.size(); ++i)
        if (curve[i]) {
            f.mask[i] = 1;
            f.gray[i] += delta;
        }
}

}  // namespace

SegmentationSample synth_sample(SynthKind kind, int size, uint64_t sample_seed,
                                const ShiftParams& shift) {
    // resample until the foreground fraction is comfortably inside [0.01, 0.6]
    for (int attempt = 0;; ++attempt) {
        Rng rng(mix_seed(sample_seed, static_cast<uint64_t>(attempt)));
        Field f(size);
        paint_background(f, rng, shift);
        switch (kind) {
            case SynthKind::ellipses: paint_ellipses(f, rng, shift); break;
            case SynthKind::blobs: paint_blobs(f, rng, shift); break;
            case SynthKind::vessels: paint_vessels(f, rng, shift); break;
        }
        const float frac = f.fg_fraction();
        if ((frac < 0.02f || frac > 0.55f) && attempt < 32) continue;

        SegmentationSample s;
        s.image = Tensor({size, size, 3});
        s.mask = Tensor({size, size});
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                const float g = f.gray[static_cast<size_t>(i) * size + j] + shift.brightness;
                // mild fixed per-channel tint
                const float tint[3] = {0.012f, 0.0f, -0.012f};
                for (int c = 0; c < 3; ++c)
                    s.image.at(i, j, c) = std::clamp(g + tint[c], 0.0f, 1.0f);
                s.mask.at(i, j) = static_cast<float>(f.mask[static_cast<size_t>(i) * size + j]);
            }
        return s;
    }
}

void synth_corpus(SynthKind kind, int n, int size, uint64_t seed, const ShiftParams& shift,
                  const std::string& out_dir) {
    if (n < 1) throw std::invalid_argument("synth_corpus: n must be >= 1");
    if (size < 16 || size % 16 != 0)
        throw std::invalid_argument("synth_corpus: size must be a positive multiple of 16");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    for (int idx = 0; idx < n; ++idx) {
        const SegmentationSample s =
            synth_sample(kind, size, mix_seed(seed, static_cast<uint64_t>(idx)), shift);
        char name[16];
        std::snprintf(name, sizeof(name), "%04d", idx);

        ImageU8 img;
        img.h = img.w = size;
        img.channels = 3;
        img.pixels.resize(static_cast<size_t>(size) * size * 3);
        for (int64_t i = 0; i < s.image.numel(); ++i)
            img.pixels[static_cast<size_t>(i)] =
                static_cast<uint8_t>(std::lround(std::clamp(s.image[i], 0.0f, 1.0f) * 255.0f));

        ImageU8 msk;
        msk.h = msk.w = size;
        msk.channels = 1;
        msk.pixels.resize(static_cast<size_t>(size) * size);
        for (int64_t i = 0; i < s.mask.numel(); ++i)
            msk.pixels[static_cast<size_t>(i)] = s.mask[i] != 0.0f ? 255 : 0;

        write_pnm((fs::path(out_dir) / "images" / (std::string(name) + ".ppm")).string(), img);
        write_pnm((fs::path(out_dir) / "masks" / (std::string(name) + ".pgm")).string(), msk);
    }
}

}  // namespace med2d::data
