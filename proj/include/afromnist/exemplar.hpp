#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afromnist/image.hpp"

namespace afromnist {

struct ExemplarClass {
    int label = 0;
    std::string glyph_name;
    GrayImage image;  // 28x28, normalized
};

// Exactly ten classes, labels 0..9, sorted, each exemplar 28x28 and
// non-blank at threshold 0.5.
struct ExemplarSet {
    std::vector<ExemplarClass> classes;
};

// MNIST framing convention: crop the tight >0.5 bounding box, scale the
// larger extent to 20 pixels (aspect preserved, bilinear), then paste into a
// 28x28 canvas with the intensity-weighted center of mass at (13.5,13.5)
// rounded to the nearest integer offset.
GrayImage normalize_exemplar(const GrayImage& img);

// Manifest CSV: header "label,glyph_name,file"; file paths relative to
// `directory`. Every label 0..9 exactly once.
ExemplarSet load_exemplar_set(const std::filesystem::path& directory,
                              const std::filesystem::path& labels_manifest);

}  // namespace afromnist
