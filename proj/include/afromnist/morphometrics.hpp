#pragma once

#include <array>
#include <ostream>
#include <vector>

#include "afromnist/idx.hpp"
#include "afromnist/image.hpp"

namespace afromnist {

// Scalar shape descriptors of one glyph image.
struct MorphometricRecord {
    double thickness = 0;  // mean stroke diameter, pixels
    double slant = 0;      // shear coefficient, mu11/mu02, y up
    double width = 0;      // foreground bounding box, pixels
    double height = 0;
    double length = 0;     // skeleton path length, pixels
    double area = 0;       // foreground fraction of the frame
};

// Zhang-Suen two-subiteration thinning to fixpoint; deletions within a
// subiteration are applied simultaneously, so the result is scan-order
// independent.
BinaryMask skeletonize(const BinaryMask& mask);

// Exact Euclidean distance from each foreground pixel to the nearest
// background pixel, with the frame boundary treated as background;
// background pixels map to 0.
std::vector<double> distance_transform(const BinaryMask& mask);

// Binarizes at 0.5, then measures; throws on blank images.
MorphometricRecord measure(const GrayImage& img);

// Pixelwise mean per label over the dataset; all 10 labels must be present.
std::array<GrayImage, 10> class_mean_images(const IdxDataset& ds);

// CSV: index,label,thickness,slant,width,height,length,area (6 significant
// digits, header row).
void write_morph_csv(const std::vector<MorphometricRecord>& records,
                     const std::vector<std::uint8_t>& labels, std::ostream& out);

// Single P5 graymap tiling the ten class means left to right.
void write_montage(const std::array<GrayImage, 10>& means, std::ostream& out);

}  // namespace afromnist
