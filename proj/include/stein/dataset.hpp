#pragma once

#include <string>
#include <vector>

#include "stein/png_io.hpp"
#include "stein/tensor.hpp"

namespace stein::harness {

/// Co-registered image pair with a binary change label.
struct BitemporalSample {
    Tensor t1;                   // 3 x H x W, values in [0, 1]
    Tensor t2;                   // 3 x H x W
    std::vector<uint8_t> label;  // H*W, strictly {0, 1}
    int height = 0;
    int width = 0;
    std::string id;

    void validate() const;
};

Tensor image_to_tensor(const ImageU8& img);           // 3 x H x W in [0, 1]
ImageU8 tensor_to_image(const Tensor& chw);           // rounds to 8-bit RGB
ImageU8 label_to_image(const std::vector<uint8_t>& label, int h, int w);  // 0/255 gray

/// Loads the standard change-detection layout root/{A,B,label}/<name>.png.
/// Pairs are matched by filename; images scale to [0,1]; labels binarize at
/// 128. A missing counterpart raises an ingestion error naming the orphan.
std::vector<BitemporalSample> load_dataset(const std::string& root);

/// Writes samples in the same layout (creates A/, B/, label/).
void save_dataset(const std::string& root, const std::vector<BitemporalSample>& samples);

/// The 8 dihedral transforms of a square sample: k = rotations + 4 * flip,
/// applied identically to both frames and the label.
BitemporalSample apply_dihedral(const BitemporalSample& s, int k);

/// Uniform seeded draw from the 8 dihedral transforms.
BitemporalSample augment(const BitemporalSample& s, uint64_t seed);

}  // namespace stein::harness
