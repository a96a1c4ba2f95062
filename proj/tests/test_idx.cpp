#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "afromnist/error.hpp"
#include "afromnist/idx.hpp"
#include "doctest.h"
#include "util.hpp"

using namespace afromnist;

namespace {

std::vector<std::uint8_t> to_bytes(const std::string& s) {
    return {s.begin(), s.end()};
}

std::string image_bytes(const IdxDataset& ds) {
    std::ostringstream out(std::ios::binary);
    write_idx_images(ds, out);
    return out.str();
}

std::string label_bytes(const IdxDataset& ds) {
    std::ostringstream out(std::ios::binary);
    write_idx_labels(ds, out);
    return out.str();
}

IdxDataset make_dataset(std::size_t n) {
    IdxDataset ds;
    ds.images.resize(n * 784);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<std::uint8_t>(i % 10);
        for (std::size_t p = 0; p < 784; ++p)
            ds.images[i * 784 + p] = static_cast<std::uint8_t>((i * 31 + p * 7) % 256);
    }
    return ds;
}

}  // namespace

TEST_CASE("idx write: the 60000-image header bytes") {
    IdxDataset ds;
    ds.images.assign(std::size_t{60000} * 784, 0);
    ds.labels.assign(60000, 0);
    const std::string bytes = image_bytes(ds);
    REQUIRE(bytes.size() == 16 + std::size_t{60000} * 784);
    const std::uint8_t expected[16] = {0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0xEA, 0x60,
                                       0x00, 0x00, 0x00, 0x1C, 0x00, 0x00, 0x00, 0x1C};
    for (int i = 0; i < 16; ++i)
        CHECK(static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(i)]) == expected[i]);
}

TEST_CASE("idx write: the 10000-label header bytes") {
    IdxDataset ds;
    ds.images.assign(std::size_t{10000} * 784, 0);
    ds.labels.assign(10000, 0);
    const std::string bytes = label_bytes(ds);
    REQUIRE(bytes.size() == 8 + 10000);
    const std::uint8_t expected[8] = {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x27, 0x10};
    for (int i = 0; i < 8; ++i)
        CHECK(static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(i)]) == expected[i]);
}

TEST_CASE("idx write: empty dataset is headers only") {
    IdxDataset ds;
    CHECK(image_bytes(ds).size() == 16);
    CHECK(label_bytes(ds).size() == 8);
}

TEST_CASE("idx write: single zero image") {
    IdxDataset ds;
    ds.images.assign(784, 0);
    ds.labels.assign(1, 5);
    const std::string img = image_bytes(ds);
    REQUIRE(img.size() == 800);
    for (std::size_t i = 16; i < 800; ++i) CHECK(img[i] == 0);
    const std::string lab = label_bytes(ds);
    REQUIRE(lab.size() == 9);
    CHECK(static_cast<std::uint8_t>(lab[8]) == 5);
}

TEST_CASE("idx write: label payload follows the header verbatim") {
    IdxDataset ds;
    ds.images.assign(3 * 784, 0);
    ds.labels = {3, 1, 4};
    const std::string lab = label_bytes(ds);
    REQUIRE(lab.size() == 11);
    CHECK(static_cast<std::uint8_t>(lab[8]) == 3);
    CHECK(static_cast<std::uint8_t>(lab[9]) == 1);
    CHECK(static_cast<std::uint8_t>(lab[10]) == 4);
}

TEST_CASE("idx round trip: write, read, write is byte-identical") {
    const IdxDataset ds = make_dataset(23);
    const std::string img1 = image_bytes(ds);
    const std::string lab1 = label_bytes(ds);
    const IdxDataset back = read_idx(to_bytes(img1), to_bytes(lab1));
    CHECK(back.rows == 28);
    CHECK(back.cols == 28);
    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);
    CHECK(image_bytes(back) == img1);
    CHECK(label_bytes(back) == lab1);
}

TEST_CASE("idx read: non-square dims round trip") {
    IdxDataset ds;
    ds.rows = 3;
    ds.cols = 5;
    ds.images.assign(2 * 15, 9);
    ds.labels = {1, 2};
    const IdxDataset back = read_idx(to_bytes(image_bytes(ds)), to_bytes(label_bytes(ds)));
    CHECK(back.rows == 3);
    CHECK(back.cols == 5);
    CHECK(back.images == ds.images);
}

TEST_CASE("idx read: swapped files fail on the magic") {
    // a labels file of >= 8 records clears the 16-byte image header minimum,
    // so the failure is attributed to the magic, not to truncation
    const IdxDataset ds = make_dataset(8);
    const auto img = to_bytes(image_bytes(ds));
    const auto lab = to_bytes(label_bytes(ds));
    try {
        read_idx(lab, lab);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
    CHECK_THROWS_AS(read_idx(img, img), ParseError);
}

TEST_CASE("idx read: truncation is reported with the byte offset") {
    const IdxDataset ds = make_dataset(4);
    auto img = to_bytes(image_bytes(ds));
    auto lab = to_bytes(label_bytes(ds));

    SUBCASE("short image payload") {
        img.resize(img.size() - 10);
        try {
            read_idx(img, lab);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
    SUBCASE("short image header") {
        img.resize(12);
        CHECK_THROWS_AS(read_idx(img, lab), ParseError);
    }
    SUBCASE("short label payload") {
        lab.resize(lab.size() - 1);
        CHECK_THROWS_AS(read_idx(img, lab), ParseError);
    }
    SUBCASE("trailing bytes rejected") {
        img.push_back(0);
        CHECK_THROWS_AS(read_idx(img, lab), ParseError);
    }
}

TEST_CASE("idx read: image and label counts must agree") {
    const IdxDataset five = make_dataset(5);
    const IdxDataset four = make_dataset(4);
    try {
        read_idx(to_bytes(image_bytes(five)), to_bytes(label_bytes(four)));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("5") != std::string::npos);
        CHECK(msg.find("4") != std::string::npos);
    }
}

TEST_CASE("idx validate: labels above nine are rejected") {
    IdxDataset ds = make_dataset(3);
    CHECK_NOTHROW(validate(ds));
    ds.labels[1] = 10;
    CHECK_THROWS_AS(validate(ds), InvalidParameter);
    ds.labels[1] = 255;
    CHECK_THROWS_AS(validate(ds), InvalidParameter);
}

TEST_CASE("idx validate: image bytes must match the label count") {
    IdxDataset ds = make_dataset(3);
    ds.images.pop_back();
    CHECK_THROWS_AS(validate(ds), InvalidParameter);
}

TEST_CASE("idx file naming convention") {
    CHECK(idx_file_name("afro", true, true) == "afro-train-images-idx3-ubyte");
    CHECK(idx_file_name("afro", true, false) == "afro-train-labels-idx1-ubyte");
    CHECK(idx_file_name("afro", false, true) == "afro-test-images-idx3-ubyte");
    CHECK(idx_file_name("afro", false, false) == "afro-test-labels-idx1-ubyte");
}

TEST_CASE("idx load: files round trip through disk") {
    testutil::TempDir dir("idx-io");
    const IdxDataset ds = make_dataset(7);
    const auto img_path = dir.path / "x-images-idx3-ubyte";
    const auto lab_path = dir.path / "x-labels-idx1-ubyte";
    testutil::write_file(img_path, image_bytes(ds));
    testutil::write_file(lab_path, label_bytes(ds));
    const IdxDataset back = load_idx(img_path, lab_path);
    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);

    try {
        load_idx(dir.path / "nope", lab_path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }
}
