#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>

#include "afromnist/image.hpp"

namespace afromnist {

// Parses binary (P5) or ASCII (P2) portable graymaps. Header comments are
// allowed, maxval up to 65535 (two-byte big-endian samples above 255).
// Intensities are scaled by 1/maxval. ParseError messages name the bad
// header field and byte offset.
GrayImage parse_pgm(std::span<const std::uint8_t> bytes);

GrayImage load_pgm(const std::filesystem::path& path);

// P5 at maxval 255, quantize_u8 applied per pixel.
void write_pgm(const GrayImage& img, std::ostream& out);

void save_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace afromnist
