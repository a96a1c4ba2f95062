#include "afromnist/image.hpp"

#include <algorithm>
#include <cmath>

#include "afromnist/error.hpp"

namespace afromnist {

GrayImage::GrayImage(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

BinaryMask::BinaryMask(int h, int w)
    : height(h), width(w), on(static_cast<std::size_t>(h) * w, 0) {}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto v : on) n += v;
    return n;
}

std::uint8_t quantize_u8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

Kernel1D gaussian_kernel(double sigma) {
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw InvalidParameter("gaussian_kernel: sigma must be finite and > 0, got " +
                               std::to_string(sigma));
    Kernel1D k;
    k.radius = static_cast<int>(std::ceil(3.0 * sigma));
    k.weights.resize(2 * static_cast<std::size_t>(k.radius) + 1);
    double sum = 0.0;
    for (int i = -k.radius; i <= k.radius; ++i) {
        double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k.weights[static_cast<std::size_t>(i + k.radius)] = w;
        sum += w;
    }
    for (auto& w : k.weights) w /= sum;
    return k;
}

std::vector<double> convolve_separable_field(int height, int width,
                                             const std::vector<double>& field,
                                             const Kernel1D& k) {
    const int r = k.radius;
    std::vector<double> tmp(field.size(), 0.0);
    std::vector<double> out(field.size(), 0.0);
    // horizontal pass
    for (int row = 0; row < height; ++row) {
        const double* src = field.data() + static_cast<std::size_t>(row) * width;
        double* dst = tmp.data() + static_cast<std::size_t>(row) * width;
        for (int col = 0; col < width; ++col) {
            double acc = 0.0;
            const int lo = std::max(-r, -col);
            const int hi = std::min(r, width - 1 - col);
            for (int i = lo; i <= hi; ++i) acc += k.weights[static_cast<std::size_t>(i + r)] * src[col + i];
            dst[col] = acc;
        }
    }
    // vertical pass
    for (int col = 0; col < width; ++col) {
        for (int row = 0; row < height; ++row) {
            double acc = 0.0;
            const int lo = std::max(-r, -row);
            const int hi = std::min(r, height - 1 - row);
            for (int i = lo; i <= hi; ++i)
                acc += k.weights[static_cast<std::size_t>(i + r)] *
                       tmp[static_cast<std::size_t>(row + i) * width + col];
            out[static_cast<std::size_t>(row) * width + col] = acc;
        }
    }
    return out;
}

GrayImage convolve_separable(const GrayImage& img, const Kernel1D& k) {
    GrayImage out(img.height, img.width);
    out.pixels = convolve_separable_field(img.height, img.width, img.pixels, k);
    for (auto& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
    return out;
}

double bilinear_sample(const GrayImage& img, double x, double y) {
    const double x0f = std::floor(x);
    const double y0f = std::floor(y);
    const int x0 = static_cast<int>(x0f);
    const int y0 = static_cast<int>(y0f);
    const double fx = x - x0f;
    const double fy = y - y0f;

    auto px = [&](int r, int c) -> double {
        if (r < 0 || r >= img.height || c < 0 || c >= img.width) return 0.0;
        return img.at(r, c);
    };
    const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
    const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

BinaryMask binarize(const GrayImage& img, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidParameter("binarize: threshold must lie in (0,1), got " +
                               std::to_string(threshold));
    BinaryMask m(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        m.on[i] = img.pixels[i] > threshold ? 1 : 0;
    return m;
}

}  // namespace afromnist
