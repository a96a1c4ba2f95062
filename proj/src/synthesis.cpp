#include "afromnist/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "afromnist/error.hpp"

namespace afromnist {

void validate(const CorruptionSpec& spec) {
    switch (spec.kind) {
        case CorruptionKind::gaussian_noise:
        case CorruptionKind::blur:
            if (!(spec.severity >= 0.0) || !std::isfinite(spec.severity))
                throw InvalidParameter("corruption severity must be >= 0, got " +
                                       std::to_string(spec.severity));
            return;
        case CorruptionKind::brightness:
            if (!(spec.severity >= -1.0 && spec.severity <= 1.0))
                throw InvalidParameter("brightness severity must lie in [-1,1], got " +
                                       std::to_string(spec.severity));
            return;
        case CorruptionKind::salt_pepper:
            if (!(spec.severity >= 0.0 && spec.severity <= 1.0))
                throw InvalidParameter("salt_pepper severity must lie in [0,1], got " +
                                       std::to_string(spec.severity));
            return;
    }
    throw InvalidParameter("unknown corruption kind");
}

CorruptionSpec parse_corruption(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw InvalidParameter("corruption must be KIND:SEVERITY, got \"" + text + "\"");
    const std::string kind = text.substr(0, colon);
    CorruptionSpec spec;
    if (kind == "gaussian_noise")
        spec.kind = CorruptionKind::gaussian_noise;
    else if (kind == "blur")
        spec.kind = CorruptionKind::blur;
    else if (kind == "brightness")
        spec.kind = CorruptionKind::brightness;
    else if (kind == "salt_pepper")
        spec.kind = CorruptionKind::salt_pepper;
    else
        throw InvalidParameter("unknown corruption kind \"" + kind + "\"");
    try {
        std::size_t used = 0;
        spec.severity = std::stod(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw InvalidParameter("bad corruption severity in \"" + text + "\"");
    }
    validate(spec);
    return spec;
}

std::string to_string(const CorruptionSpec& spec) {
    const char* name = "";
    switch (spec.kind) {
        case CorruptionKind::gaussian_noise: name = "gaussian_noise"; break;
        case CorruptionKind::blur: name = "blur"; break;
        case CorruptionKind::brightness: name = "brightness"; break;
        case CorruptionKind::salt_pepper: name = "salt_pepper"; break;
    }
    char sev[48];
    std::snprintf(sev, sizeof sev, "%g", spec.severity);
    return std::string(name) + ":" + sev;
}

void validate(const DeformParams& params) {
    if (!(params.alpha >= 0.0) || !std::isfinite(params.alpha))
        throw InvalidParameter("alpha must be >= 0, got " + std::to_string(params.alpha));
    if (!(params.gamma_lo > 0.0) || !(params.gamma_hi >= params.gamma_lo) ||
        !std::isfinite(params.gamma_hi))
        throw InvalidParameter("gamma range must satisfy 0 < lo <= hi, got [" +
                               std::to_string(params.gamma_lo) + ", " +
                               std::to_string(params.gamma_hi) + "]");
    for (const auto& c : params.corruptions) validate(c);
}

DisplacementFields displacement_fields(int height, int width, double alpha, double gamma,
                                       Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    DisplacementFields f;
    f.dx.resize(n);
    f.dy.resize(n);
    for (auto& v : f.dx) v = rng.uniform_signed();
    for (auto& v : f.dy) v = rng.uniform_signed();
    const Kernel1D k = gaussian_kernel(gamma);
    f.dx = convolve_separable_field(height, width, f.dx, k);
    f.dy = convolve_separable_field(height, width, f.dy, k);
    for (auto& v : f.dx) v *= alpha;
    for (auto& v : f.dy) v *= alpha;
    return f;
}

GrayImage elastic_deform(const GrayImage& img, double alpha, double gamma, Rng& rng) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw InvalidParameter("elastic_deform: alpha must be >= 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw InvalidParameter("elastic_deform: gamma must be > 0");

    const DisplacementFields f = displacement_fields(img.height, img.width, alpha, gamma, rng);
    GrayImage out(img.height, img.width);
    std::size_t i = 0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c, ++i)
            out.pixels[i] =
                std::clamp(bilinear_sample(img, c + f.dx[i], r + f.dy[i]), 0.0, 1.0);
    return out;
}

GrayImage apply_corruption(const GrayImage& img, const CorruptionSpec& spec, Rng& rng) {
    validate(spec);
    if (spec.severity == 0.0) return img;

    GrayImage out = img;
    switch (spec.kind) {
        case CorruptionKind::gaussian_noise:
            for (auto& v : out.pixels)
                v = std::clamp(v + spec.severity * rng.normal(), 0.0, 1.0);
            return out;
        case CorruptionKind::blur:
            return convolve_separable(img, gaussian_kernel(spec.severity));
        case CorruptionKind::brightness:
            for (auto& v : out.pixels) v = std::clamp(v + spec.severity, 0.0, 1.0);
            return out;
        case CorruptionKind::salt_pepper:
            for (auto& v : out.pixels) {
                const double u = rng.uniform();
                if (u < spec.severity / 2.0)
                    v = 1.0;
                else if (u < spec.severity)
                    v = 0.0;
            }
            return out;
    }
    throw InvalidParameter("unknown corruption kind");
}

GrayImage synthesize_example(const ExemplarClass& exemplar, const DeformParams& params,
                             Split split, std::uint64_t index) {
    validate(params);
    Rng rng(derive_stream(params.master_seed,
                          {static_cast<std::uint64_t>(split),
                           static_cast<std::uint64_t>(exemplar.label), index}));
    const double gamma = rng.uniform(params.gamma_lo, params.gamma_hi);
    GrayImage out = elastic_deform(exemplar.image, params.alpha, gamma, rng);
    for (const auto& c : params.corruptions) out = apply_corruption(out, c, rng);
    return out;
}

}  // namespace afromnist
