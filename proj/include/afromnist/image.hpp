#pragma once

#include <cstdint>
#include <vector>

namespace afromnist {

// Row-major grayscale image with intensities in [0,1]. Every public
// operation returns values clamped back into that range.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int h, int w, double fill = 0.0);

    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return pixels.size(); }
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> on;  // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int h, int w);

    std::uint8_t& at(int r, int c) { return on[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return on[static_cast<std::size_t>(r) * width + c]; }
    std::size_t count() const;
};

// Symmetric normalized 1-D kernel of 2*radius+1 weights summing to 1.
struct Kernel1D {
    int radius = 0;
    std::vector<double> weights;
};

// Truncated at radius ceil(3*sigma), renormalized to unit sum.
Kernel1D gaussian_kernel(double sigma);

// Horizontal then vertical pass with the same kernel, zero padding at the
// borders, output clamped to [0,1].
GrayImage convolve_separable(const GrayImage& img, const Kernel1D& k);

// Same separable convolution on an unconstrained real field (no clamping);
// used for smoothing signed displacement fields.
std::vector<double> convolve_separable_field(int height, int width,
                                             const std::vector<double>& field,
                                             const Kernel1D& k);

// Bilinear interpolation at (x,y) = (column,row); coordinates outside
// [0,W-1]x[0,H-1] contribute background 0.
double bilinear_sample(const GrayImage& img, double x, double y);

// mask pixel true iff intensity > threshold; threshold must lie in (0,1).
BinaryMask binarize(const GrayImage& img, double threshold);

// Shared 8-bit quantization rule: round(v*255), half away from zero, after
// clamping v to [0,1].
std::uint8_t quantize_u8(double v);

}  // namespace afromnist
