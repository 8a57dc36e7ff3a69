#pragma once

#include "stein/dataset.hpp"

namespace stein::harness {

/// Synthetic bi-temporal scene generator. Labelled change comes from shapes
/// added to or removed from the scene; illumination scaling, a small global
/// translation of the second frame and distractor objects present in both
/// frames perturb appearance without touching the label.
struct SynthSpec {
    uint64_t seed = 7;
    int count = 120;
    int size = 64;          // square, multiple of 32
    int min_changes = 1;    // shapes added or removed
    int max_changes = 4;
    int base_shapes = 3;    // static scene objects
    double illumination = 0.08;
    int max_offset = 1;     // registration error, pixels
    int distractors = 2;

    void validate() const;
};

enum class ShapeRole { kBase, kRemoved, kAdded, kDistractor };

struct SynthShape {
    bool ellipse = false;
    double cx = 0, cy = 0;   // center, pixel units (x = column, y = row)
    double rx = 1, ry = 1;   // half extents
    double color[3] = {0, 0, 0};
    ShapeRole role = ShapeRole::kBase;

    bool covers(double x, double y) const;
};

struct SceneDescription {
    std::vector<SynthShape> shapes;
    int dx = 0, dy = 0;   // frame-2 translation
    double illum = 1.0;   // frame-2 brightness factor
};

struct SynthSample {
    BitemporalSample sample;
    SceneDescription scene;
};

std::vector<SynthSample> synth_generate(const SynthSpec& spec);

/// Convenience wrapper that drops the scene metadata.
std::vector<BitemporalSample> synth_dataset(const SynthSpec& spec);

}  // namespace stein::harness
