#include "afromnist/pgm.hpp"

#include <fstream>
#include <string>

#include "afromnist/error.hpp"

namespace afromnist {

namespace {

struct Cursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    std::uint8_t peek() const { return bytes[pos]; }

    static bool is_ws(std::uint8_t c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
    }

    // whitespace and '#' comments up to end-of-line
    void skip_ws_and_comments() {
        while (!eof()) {
            if (is_ws(peek())) {
                ++pos;
            } else if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    unsigned long parse_uint(const char* field) {
        skip_ws_and_comments();
        const std::size_t start = pos;
        if (eof() || peek() < '0' || peek() > '9')
            throw ParseError(std::string("pgm: expected unsigned integer for ") + field, pos);
        unsigned long v = 0;
        while (!eof() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (peek() - '0');
            if (v > 10'000'000)
                throw ParseError(std::string("pgm: ") + field + " out of range", start);
            ++pos;
        }
        return v;
    }
};

}  // namespace

GrayImage parse_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw ParseError("pgm: empty input, missing magic", 0);
    Cursor cur{bytes};

    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
        throw ParseError("pgm: bad magic, expected \"P2\" or \"P5\"", 0);
    const bool binary = bytes[1] == '5';
    cur.pos = 2;

    const std::size_t width_off = (cur.skip_ws_and_comments(), cur.pos);
    const unsigned long width = cur.parse_uint("width");
    if (width == 0) throw ParseError("pgm: width must be nonzero", width_off);

    const std::size_t height_off = (cur.skip_ws_and_comments(), cur.pos);
    const unsigned long height = cur.parse_uint("height");
    if (height == 0) throw ParseError("pgm: height must be nonzero", height_off);

    const std::size_t maxval_off = (cur.skip_ws_and_comments(), cur.pos);
    const unsigned long maxval = cur.parse_uint("maxval");
    if (maxval == 0) throw ParseError("pgm: maxval must be nonzero", maxval_off);
    if (maxval > 65535) throw ParseError("pgm: maxval exceeds 65535", maxval_off);

    GrayImage img(static_cast<int>(height), static_cast<int>(width));
    const std::size_t n = img.size();

    if (binary) {
        // exactly one whitespace byte separates maxval from the payload
        if (cur.eof() || !Cursor::is_ws(cur.peek()))
            throw ParseError("pgm: missing whitespace after maxval", cur.pos);
        ++cur.pos;
        const std::size_t bytes_per = maxval > 255 ? 2 : 1;
        const std::size_t need = n * bytes_per;
        const std::size_t avail = bytes.size() - cur.pos;
        if (avail < need)
            throw ParseError("pgm: truncated payload, need " + std::to_string(need) +
                                 " sample bytes but got " + std::to_string(avail),
                             cur.pos + avail);
        for (std::size_t i = 0; i < n; ++i) {
            unsigned long v;
            if (bytes_per == 2) {
                v = (static_cast<unsigned long>(bytes[cur.pos]) << 8) | bytes[cur.pos + 1];
                cur.pos += 2;
            } else {
                v = bytes[cur.pos++];
            }
            if (v > maxval)
                throw ParseError("pgm: sample exceeds maxval", cur.pos - bytes_per);
            img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            cur.skip_ws_and_comments();
            if (cur.eof())
                throw ParseError("pgm: truncated payload, expected " + std::to_string(n) +
                                     " samples but got " + std::to_string(i),
                                 cur.pos);
            const std::size_t off = cur.pos;
            const unsigned long v = cur.parse_uint("sample");
            if (v > maxval) throw ParseError("pgm: sample exceeds maxval", off);
            img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    }
    return img;
}

GrayImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>()};
    try {
        return parse_pgm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(ParseError::formatted_t{}, path.string() + ": " + e.what(), e.offset());
    }
}

void write_pgm(const GrayImage& img, std::ostream& out) {
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    for (double v : img.pixels) out.put(static_cast<char>(quantize_u8(v)));
    if (!out) throw IoError("pgm: write failed");
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_pgm(img, out);
}

}  // namespace afromnist
