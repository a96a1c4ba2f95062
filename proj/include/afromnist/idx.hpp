#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

namespace afromnist {

// MNIST-layout dataset: 8-bit images plus one label byte per image.
struct IdxDataset {
    int rows = 28;
    int cols = 28;
    std::vector<std::uint8_t> images;  // N * rows * cols, row-major
    std::vector<std::uint8_t> labels;  // N, each < 10

    std::size_t size() const { return labels.size(); }
    std::span<const std::uint8_t> image(std::size_t i) const {
        const std::size_t px = static_cast<std::size_t>(rows) * cols;
        return {images.data() + i * px, px};
    }
};

void validate(const IdxDataset& ds);

// Big-endian: magic 0x00000803, N, rows, cols, then raw bytes.
// Returns total bytes written (16 + rows*cols*N).
std::size_t write_idx_images(const IdxDataset& ds, std::ostream& sink);

// Big-endian: magic 0x00000801, N, then N label bytes. Returns 8 + N.
std::size_t write_idx_labels(const IdxDataset& ds, std::ostream& sink);

// Inverse of the writers; accepts any row/column dims, validates magics and
// that image and label counts agree.
IdxDataset read_idx(std::span<const std::uint8_t> images_bytes,
                    std::span<const std::uint8_t> labels_bytes);

IdxDataset load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

// File naming convention: <name>-train-images-idx3-ubyte etc.
std::string idx_file_name(const std::string& name, bool train, bool images);

}  // namespace afromnist
