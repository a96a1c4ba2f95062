#include "afromnist/idx.hpp"

#include <cstdio>
#include <fstream>

#include "afromnist/error.hpp"

namespace afromnist {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::string hex8(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08X", v);
    return buf;
}

void put_u32_be(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

std::uint32_t get_u32_be(std::span<const std::uint8_t> bytes, std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[off + 3]);
}

void check_stream(const std::ostream& out, std::size_t written) {
    if (!out) throw IoError("idx: sink failed after " + std::to_string(written) + " bytes");
}

}  // namespace

void validate(const IdxDataset& ds) {
    const std::size_t px = static_cast<std::size_t>(ds.rows) * ds.cols;
    if (ds.rows < 1 || ds.cols < 1) throw InvalidParameter("idx: nonpositive dimensions");
    if (ds.images.size() != px * ds.labels.size())
        throw InvalidParameter("idx: image byte count " + std::to_string(ds.images.size()) +
                               " does not match " + std::to_string(ds.labels.size()) +
                               " labels at " + std::to_string(px) + " px/image");
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (ds.labels[i] >= 10)
            throw InvalidParameter("idx: label " + std::to_string(ds.labels[i]) + " at index " +
                                   std::to_string(i) + " exceeds 9");
}

std::size_t write_idx_images(const IdxDataset& ds, std::ostream& sink) {
    validate(ds);
    put_u32_be(sink, kImagesMagic);
    put_u32_be(sink, static_cast<std::uint32_t>(ds.size()));
    put_u32_be(sink, static_cast<std::uint32_t>(ds.rows));
    put_u32_be(sink, static_cast<std::uint32_t>(ds.cols));
    check_stream(sink, 0);
    sink.write(reinterpret_cast<const char*>(ds.images.data()),
               static_cast<std::streamsize>(ds.images.size()));
    check_stream(sink, 16);
    return 16 + ds.images.size();
}

std::size_t write_idx_labels(const IdxDataset& ds, std::ostream& sink) {
    validate(ds);
    put_u32_be(sink, kLabelsMagic);
    put_u32_be(sink, static_cast<std::uint32_t>(ds.size()));
    check_stream(sink, 0);
    sink.write(reinterpret_cast<const char*>(ds.labels.data()),
               static_cast<std::streamsize>(ds.labels.size()));
    check_stream(sink, 8);
    return 8 + ds.labels.size();
}

IdxDataset read_idx(std::span<const std::uint8_t> images_bytes,
                    std::span<const std::uint8_t> labels_bytes) {
    if (images_bytes.size() < 16)
        throw ParseError("idx images: truncated header, need 16 bytes", images_bytes.size());
    if (labels_bytes.size() < 8)
        throw ParseError("idx labels: truncated header, need 8 bytes", labels_bytes.size());

    const std::uint32_t img_magic = get_u32_be(images_bytes, 0);
    if (img_magic != kImagesMagic)
        throw ParseError(
            "idx images: wrong magic 0x" + hex8(img_magic) + ", expected 0x00000803", 0);
    const std::uint32_t lbl_magic = get_u32_be(labels_bytes, 0);
    if (lbl_magic != kLabelsMagic)
        throw ParseError(
            "idx labels: wrong magic 0x" + hex8(lbl_magic) + ", expected 0x00000801", 0);

    IdxDataset ds;
    const std::uint32_t n_images = get_u32_be(images_bytes, 4);
    ds.rows = static_cast<int>(get_u32_be(images_bytes, 8));
    ds.cols = static_cast<int>(get_u32_be(images_bytes, 12));
    if (ds.rows < 1 || ds.cols < 1)
        throw ParseError("idx images: zero dimension in header", 8);

    const std::uint32_t n_labels = get_u32_be(labels_bytes, 4);
    if (n_images != n_labels)
        throw ParseError("idx: image count " + std::to_string(n_images) +
                             " does not match label count " + std::to_string(n_labels),
                         4);

    const std::size_t px = static_cast<std::size_t>(ds.rows) * ds.cols;
    const std::size_t need_img = 16 + px * n_images;
    if (images_bytes.size() < need_img)
        throw ParseError("idx images: truncated payload, need " + std::to_string(need_img) +
                             " bytes but got " + std::to_string(images_bytes.size()),
                         images_bytes.size());
    const std::size_t need_lbl = 8 + static_cast<std::size_t>(n_labels);
    if (labels_bytes.size() < need_lbl)
        throw ParseError("idx labels: truncated payload, need " + std::to_string(need_lbl) +
                             " bytes but got " + std::to_string(labels_bytes.size()),
                         labels_bytes.size());
    if (images_bytes.size() > need_img)
        throw ParseError("idx images: trailing bytes after payload", need_img);
    if (labels_bytes.size() > need_lbl)
        throw ParseError("idx labels: trailing bytes after payload", need_lbl);

    ds.images.assign(images_bytes.begin() + 16, images_bytes.begin() + need_img);
    ds.labels.assign(labels_bytes.begin() + 8, labels_bytes.begin() + need_lbl);
    validate(ds);
    return ds;
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

IdxDataset load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path) {
    return read_idx(slurp(images_path), slurp(labels_path));
}

std::string idx_file_name(const std::string& name, bool train, bool images) {
    return name + (train ? "-train-" : "-test-") +
           (images ? "images-idx3-ubyte" : "labels-idx1-ubyte");
}

}  // namespace afromnist
