#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afromnist/exemplar.hpp"
#include "afromnist/image.hpp"
#include "afromnist/rng.hpp"

namespace afromnist {

enum class Split : std::uint64_t { train = 0, test = 1 };

enum class CorruptionKind { gaussian_noise, blur, brightness, salt_pepper };

// severity is the std for gaussian_noise/blur, an additive offset in [-1,1]
// for brightness, and the total flip probability in [0,1] for salt_pepper.
struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    double severity = 0.0;
};

void validate(const CorruptionSpec& spec);
CorruptionSpec parse_corruption(const std::string& text);  // "kind:severity"
std::string to_string(const CorruptionSpec& spec);

struct DeformParams {
    double alpha = 8.0;      // displacement scale, pixels
    double gamma_lo = 2.0;   // field smoothing std range, pixels
    double gamma_hi = 2.5;
    std::vector<CorruptionSpec> corruptions;
    std::uint64_t master_seed = 0;
};

void validate(const DeformParams& params);

// Smoothed random displacement field pair: dx drawn fully then dy, entries
// uniform in [-1,1] row-major, each smoothed with gaussian_kernel(gamma) and
// scaled by alpha.
struct DisplacementFields {
    std::vector<double> dx, dy;
};

DisplacementFields displacement_fields(int height, int width, double alpha, double gamma,
                                       Rng& rng);

// output(r,c) = bilinear_sample(img, c + dx[r,c], r + dy[r,c])
GrayImage elastic_deform(const GrayImage& img, double alpha, double gamma, Rng& rng);

GrayImage apply_corruption(const GrayImage& img, const CorruptionSpec& spec, Rng& rng);

// Deterministic per (master_seed, split, exemplar label, index): dedicated
// stream, gamma sampled uniformly from [gamma_lo, gamma_hi], elastic
// deformation, then corruptions in listed order.
GrayImage synthesize_example(const ExemplarClass& exemplar, const DeformParams& params,
                             Split split, std::uint64_t index);

}  // namespace afromnist
