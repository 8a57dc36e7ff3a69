#include "stein/dataset.hpp"

#include <algorithm>
#include <filesystem>

namespace stein::harness {

namespace fs = std::filesystem;

void BitemporalSample::validate() const {
    const Shape expect{3, height, width};
    if (t1.shape() != expect || t2.shape() != expect)
        throw DataError("sample '" + id + "': frame shapes " + shape_str(t1.shape()) + "/" +
                        shape_str(t2.shape()) + " do not match " + shape_str(expect));
    if (static_cast<int64_t>(label.size()) != static_cast<int64_t>(height) * width)
        throw DataError("sample '" + id + "': label size mismatch");
    for (uint8_t v : label)
        if (v > 1) throw DataError("sample '" + id + "': label is not binary");
}

Tensor image_to_tensor(const ImageU8& img) {
    const int h = img.height, w = img.width;
    std::vector<double> d(static_cast<size_t>(3) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const uint8_t v = img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);
                d[(static_cast<size_t>(c) * h + y) * w + x] = v / 255.0;
            }
    return Tensor::from_data({3, h, w}, std::move(d));
}

ImageU8 tensor_to_image(const Tensor& chw) {
    if (chw.shape().size() != 3 || chw.dim(0) != 3)
        throw ShapeError("tensor_to_image: expected 3xHxW, got " + shape_str(chw.shape()));
    const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(3) * h * w);
    const auto& d = chw.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = d[(static_cast<size_t>(c) * h + y) * w + x];
                v = std::min(std::max(v, 0.0), 1.0);
                img.pixels[(static_cast<size_t>(y) * w + x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

ImageU8 label_to_image(const std::vector<uint8_t>& label, int h, int w) {
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = label[i] ? 255 : 0;
    return img;
}

std::vector<BitemporalSample> load_dataset(const std::string& root) {
    const fs::path a_dir = fs::path(root) / "A";
    const fs::path b_dir = fs::path(root) / "B";
    const fs::path l_dir = fs::path(root) / "label";
    for (const auto& dir : {a_dir, b_dir, l_dir})
        if (!fs::is_directory(dir))
            throw DataError("dataset root '" + root + "' lacks directory '" +
                            dir.filename().string() + "'");

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(a_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());

    // Counterparts must exist in both directions.
    for (const auto& dir : {b_dir, l_dir}) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
            const std::string n = entry.path().filename().string();
            if (!std::binary_search(names.begin(), names.end(), n))
                throw DataError("orphan file '" + (dir / n).string() +
                                "' has no counterpart in A/");
        }
    }

    std::vector<BitemporalSample> samples;
    samples.reserve(names.size());
    for (const auto& name : names) {
        for (const auto& dir : {b_dir, l_dir})
            if (!fs::exists(dir / name))
                throw DataError("orphan file '" + (a_dir / name).string() +
                                "' has no counterpart in " + dir.filename().string() + "/");
        const ImageU8 a = read_png((a_dir / name).string());
        const ImageU8 b = read_png((b_dir / name).string());
        const ImageU8 l = read_png((l_dir / name).string());
        if (a.width != b.width || a.height != b.height || a.width != l.width ||
            a.height != l.height)
            throw DataError("sample '" + name + "': frame/label dimensions disagree");

        BitemporalSample s;
        s.width = a.width;
        s.height = a.height;
        s.id = name;
        s.t1 = image_to_tensor(a);
        s.t2 = image_to_tensor(b);
        s.label.resize(static_cast<size_t>(a.width) * a.height);
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                // gray value (first channel for RGB labels), threshold 128
                const uint8_t v = l.at(y, x, 0);
                s.label[static_cast<size_t>(y) * a.width + x] = v >= 128 ? 1 : 0;
            }
        s.validate();
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_dataset(const std::string& root, const std::vector<BitemporalSample>& samples) {
    const fs::path base(root);
    fs::create_directories(base / "A");
    fs::create_directories(base / "B");
    fs::create_directories(base / "label");
    for (const auto& s : samples) {
        const std::string name = s.id + ".png";
        write_png((base / "A" / name).string(), tensor_to_image(s.t1));
        write_png((base / "B" / name).string(), tensor_to_image(s.t2));
        write_png((base / "label" / name).string(), label_to_image(s.label, s.height, s.width));
    }
}

namespace {

// (y, x) source coordinates for output pixel (oy, ox) under rotation by
// rot * 90 degrees counterclockwise followed by optional horizontal flip.
inline void dihedral_src(int k, int n, int oy, int ox, int& sy, int& sx) {
    const int rot = k % 4;
    const bool flip = k >= 4;
    if (flip) ox = n - 1 - ox;
    switch (rot) {
        case 0: sy = oy; sx = ox; break;
        case 1: sy = ox; sx = n - 1 - oy; break;
        case 2: sy = n - 1 - oy; sx = n - 1 - ox; break;
        default: sy = n - 1 - ox; sx = oy; break;
    }
}

Tensor transform_chw(const Tensor& t, int k) {
    const int c = static_cast<int>(t.dim(0)), h = static_cast<int>(t.dim(1)),
              w = static_cast<int>(t.dim(2));
    std::vector<double> out(t.data().size());
    const auto& d = t.data();
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < h; ++oy)
            for (int ox = 0; ox < w; ++ox) {
                int sy, sx;
                dihedral_src(k, h, oy, ox, sy, sx);
                out[(static_cast<size_t>(ch) * h + oy) * w + ox] =
                    d[(static_cast<size_t>(ch) * h + sy) * w + sx];
            }
    return Tensor::from_data(t.shape(), std::move(out));
}

}  // namespace

BitemporalSample apply_dihedral(const BitemporalSample& s, int k) {
    if (k < 0 || k > 7) throw UsageError("apply_dihedral: k must be in 0..7");
    if (k % 4 != 0 && s.height != s.width)
        throw ConfigError("apply_dihedral: rotation of a non-square " +
                          std::to_string(s.height) + "x" + std::to_string(s.width) + " sample");
    BitemporalSample out;
    out.height = s.height;
    out.width = s.width;
    out.id = s.id;
    out.t1 = transform_chw(s.t1, k);
    out.t2 = transform_chw(s.t2, k);
    out.label.resize(s.label.size());
    for (int oy = 0; oy < s.height; ++oy)
        for (int ox = 0; ox < s.width; ++ox) {
            int sy, sx;
            dihedral_src(k, s.height, oy, ox, sy, sx);
            out.label[static_cast<size_t>(oy) * s.width + ox] =
                s.label[static_cast<size_t>(sy) * s.width + sx];
        }
    return out;
}

BitemporalSample augment(const BitemporalSample& s, uint64_t seed) {
    Rng rng(seed);
    return apply_dihedral(s, static_cast<int>(rng.uniform_u64(8)));
}

}  // namespace stein::harness
