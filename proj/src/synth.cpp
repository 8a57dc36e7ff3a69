#include "stein/synth.hpp"

#include <cmath>

namespace stein::harness {

void SynthSpec::validate() const {
    if (size < 32 || size % 32 != 0)
        throw ConfigError("SynthSpec: size " + std::to_string(size) +
                          " must be a positive multiple of 32");
    if (count < 0) throw ConfigError("SynthSpec: count must be non-negative");
    if (min_changes < 0 || max_changes < min_changes)
        throw ConfigError("SynthSpec: invalid change-count range");
    if (illumination < 0.0) throw ConfigError("SynthSpec: illumination amplitude must be >= 0");
    if (max_offset < 0) throw ConfigError("SynthSpec: max_offset must be >= 0");
    if (base_shapes < 0 || distractors < 0)
        throw ConfigError("SynthSpec: shape counts must be >= 0");
}

bool SynthShape::covers(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    if (!ellipse) return std::fabs(dx) <= rx && std::fabs(dy) <= ry;
    const double nx = dx / rx, ny = dy / ry;
    return nx * nx + ny * ny <= 1.0;
}

namespace {

struct Canvas {
    int size;
    std::vector<double> px;  // 3 planes, CHW

    explicit Canvas(int n) : size(n), px(static_cast<size_t>(3) * n * n, 0.0) {}
    double& at(int c, int y, int x) { return px[(static_cast<size_t>(c) * size + y) * size + x]; }
};

void paint(Canvas& img, const SynthShape& s) {
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.ry)) - 1);
    const int y1 = std::min(img.size - 1, static_cast<int>(std::ceil(s.cy + s.ry)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.rx)) - 1);
    const int x1 = std::min(img.size - 1, static_cast<int>(std::ceil(s.cx + s.rx)) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (s.covers(x, y))
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c];
}

bool boxes_overlap(const SynthShape& a, const SynthShape& b, double margin) {
    return std::fabs(a.cx - b.cx) <= a.rx + b.rx + margin &&
           std::fabs(a.cy - b.cy) <= a.ry + b.ry + margin;
}

SynthShape random_shape(Rng& rng, int size, const double bg[3]) {
    SynthShape s;
    s.ellipse = rng.uniform_u64(2) == 0;
    s.cx = rng.uniform_real(0.15, 0.85) * size;
    s.cy = rng.uniform_real(0.15, 0.85) * size;
    s.rx = rng.uniform_real(0.06, 0.16) * size;
    s.ry = rng.uniform_real(0.06, 0.16) * size;
    for (int c = 0; c < 3; ++c) {
        const double delta = rng.uniform_real(0.25, 0.45);
        const double sign = rng.uniform_u64(2) == 0 ? 1.0 : -1.0;
        s.color[c] = std::min(std::max(bg[c] + sign * delta, 0.0), 1.0);
    }
    return s;
}

// Rejection-samples a shape whose padded bounding box avoids `avoid`;
// shrinks on repeated failure and gives up after that (fewer shapes is fine).
bool place_clear_shape(Rng& rng, int size, const double bg[3],
                       const std::vector<SynthShape>& avoid, SynthShape& out) {
    for (int shrink = 0; shrink < 5; ++shrink) {
        for (int attempt = 0; attempt < 40; ++attempt) {
            SynthShape s = random_shape(rng, size, bg);
            s.rx *= std::pow(0.75, shrink);
            s.ry *= std::pow(0.75, shrink);
            if (s.rx < 2.0 || s.ry < 2.0) break;
            bool clear = true;
            for (const auto& other : avoid)
                if (boxes_overlap(s, other, 1.0)) {
                    clear = false;
                    break;
                }
            if (clear) {
                out = s;
                return true;
            }
        }
    }
    return false;
}

}  // namespace

std::vector<SynthSample> synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<SynthSample> out;
    out.reserve(spec.count);
    const int n = spec.size;

    for (int index = 0; index < spec.count; ++index) {
        Rng rng(spec.seed * 1000003ULL + static_cast<uint64_t>(index) * 7919ULL + 1ULL);
        SynthSample item;
        SceneDescription& scene = item.scene;

        // textured background: base color plus a few low-frequency waves
        double bg[3];
        for (int c = 0; c < 3; ++c) bg[c] = rng.uniform_real(0.25, 0.55);
        struct Wave {
            double fx, fy, phase, amp;
            int channel;
        };
        std::vector<Wave> waves;
        const int wave_count = 3;
        for (int k = 0; k < wave_count; ++k) {
            Wave w;
            w.fx = rng.uniform_real(0.5, 3.0) * 2.0 * M_PI / n;
            w.fy = rng.uniform_real(0.5, 3.0) * 2.0 * M_PI / n;
            w.phase = rng.uniform_real(0.0, 2.0 * M_PI);
            w.amp = rng.uniform_real(0.02, 0.06);
            w.channel = static_cast<int>(rng.uniform_u64(3));
            waves.push_back(w);
        }

        Canvas base(n);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = bg[c];
                    for (const auto& w : waves)
                        if (w.channel == c) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
                    base.at(c, y, x) = std::min(std::max(v, 0.0), 1.0);
                }

        // static scene objects (may overlap each other)
        for (int k = 0; k < spec.base_shapes; ++k) {
            SynthShape s = random_shape(rng, n, bg);
            s.role = ShapeRole::kBase;
            scene.shapes.push_back(s);
        }

        // change shapes: disjoint from everything so the label is exactly
        // the union of their masks
        const int change_count = spec.min_changes == spec.max_changes
                                     ? spec.min_changes
                                     : spec.min_changes +
                                           static_cast<int>(rng.uniform_u64(
                                               spec.max_changes - spec.min_changes + 1));
        for (int k = 0; k < change_count; ++k) {
            SynthShape s;
            if (!place_clear_shape(rng, n, bg, scene.shapes, s)) continue;
            s.role = rng.uniform_u64(2) == 0 ? ShapeRole::kRemoved : ShapeRole::kAdded;
            scene.shapes.push_back(s);
        }

        // distractors: in both frames; must stay clear of change shapes
        {
            std::vector<SynthShape> change_only;
            for (const auto& s : scene.shapes)
                if (s.role == ShapeRole::kRemoved || s.role == ShapeRole::kAdded)
                    change_only.push_back(s);
            for (int k = 0; k < spec.distractors; ++k) {
                SynthShape s;
                if (!place_clear_shape(rng, n, bg, change_only, s)) continue;
                s.role = ShapeRole::kDistractor;
                scene.shapes.push_back(s);
            }
        }

        scene.illum = 1.0 + rng.uniform_real(-1.0, 1.0) * spec.illumination;
        scene.dx = spec.max_offset > 0 ? rng.uniform_int(-spec.max_offset, spec.max_offset) : 0;
        scene.dy = spec.max_offset > 0 ? rng.uniform_int(-spec.max_offset, spec.max_offset) : 0;

        // rasterize both frames: base scene, role shapes, then distractors
        Canvas f1 = base, f2 = base;
        for (const auto& s : scene.shapes) {
            if (s.role == ShapeRole::kBase) {
                paint(f1, s);
                paint(f2, s);
            }
        }
        for (const auto& s : scene.shapes) {
            if (s.role == ShapeRole::kRemoved) paint(f1, s);
            if (s.role == ShapeRole::kAdded) paint(f2, s);
        }
        for (const auto& s : scene.shapes) {
            if (s.role == ShapeRole::kDistractor) {
                paint(f1, s);
                paint(f2, s);
            }
        }

        // label: union of change-shape masks
        std::vector<uint8_t> label(static_cast<size_t>(n) * n, 0);
        for (const auto& s : scene.shapes) {
            if (s.role != ShapeRole::kRemoved && s.role != ShapeRole::kAdded) continue;
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    if (s.covers(x, y)) label[static_cast<size_t>(y) * n + x] = 1;
        }

        // frame-2 perturbations: brightness scale, then translation with
        // edge replication
        Canvas f2p(n);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    int sy = std::min(std::max(y - scene.dy, 0), n - 1);
                    int sx = std::min(std::max(x - scene.dx, 0), n - 1);
                    const double v = f2.at(c, sy, sx) * scene.illum;
                    f2p.at(c, y, x) = std::min(std::max(v, 0.0), 1.0);
                }

        BitemporalSample& s = item.sample;
        s.height = n;
        s.width = n;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth-%05d", index);
        s.id = buf;
        s.t1 = Tensor::from_data({3, n, n}, std::move(f1.px));
        s.t2 = Tensor::from_data({3, n, n}, std::move(f2p.px));
        s.label = std::move(label);
        s.validate();
        out.push_back(std::move(item));
    }
    return out;
}

std::vector<BitemporalSample> synth_dataset(const SynthSpec& spec) {
    std::vector<BitemporalSample> samples;
    for (auto& item : synth_generate(spec)) samples.push_back(std::move(item.sample));
    return samples;
}

}  // namespace stein::harness
