#include "afromnist/exemplar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "afromnist/error.hpp"
#include "afromnist/pgm.hpp"

namespace afromnist {

namespace {

struct Bbox {
    int r0, r1, c0, c1;  // inclusive
    int height() const { return r1 - r0 + 1; }
    int width() const { return c1 - c0 + 1; }
};

bool foreground_bbox(const GrayImage& img, double threshold, Bbox& out) {
    int r0 = img.height, r1 = -1, c0 = img.width, c1 = -1;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            if (img.at(r, c) > threshold) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) return false;
    out = {r0, r1, c0, c1};
    return true;
}

}  // namespace

GrayImage normalize_exemplar(const GrayImage& img) {
    Bbox box;
    if (!foreground_bbox(img, 0.5, box))
        throw InvalidParameter("normalize_exemplar: no foreground pixels above 0.5");

    const double scale = 20.0 / std::max(box.height(), box.width());
    const int out_h = std::max(1, static_cast<int>(std::lround(box.height() * scale)));
    const int out_w = std::max(1, static_cast<int>(std::lround(box.width() * scale)));

    // resample the crop; pixel-center mapping, so scale 1 is the identity
    GrayImage patch(out_h, out_w);
    const double sy = static_cast<double>(box.height()) / out_h;
    const double sx = static_cast<double>(box.width()) / out_w;
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            const double src_y = box.r0 + (r + 0.5) * sy - 0.5;
            const double src_x = box.c0 + (c + 0.5) * sx - 0.5;
            patch.at(r, c) = bilinear_sample(img, src_x, src_y);
        }

    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            const double v = patch.at(r, c);
            mass += v;
            mx += v * c;
            my += v * r;
        }
    if (mass <= 0.0) throw InvalidParameter("normalize_exemplar: zero-mass glyph");

    const int off_x = static_cast<int>(std::lround(13.5 - mx / mass));
    const int off_y = static_cast<int>(std::lround(13.5 - my / mass));

    GrayImage out(28, 28);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            const int rr = r + off_y, cc = c + off_x;
            if (rr < 0 || rr >= 28 || cc < 0 || cc >= 28) continue;
            out.at(rr, cc) = std::clamp(patch.at(r, c), 0.0, 1.0);
        }
    return out;
}

ExemplarSet load_exemplar_set(const std::filesystem::path& directory,
                              const std::filesystem::path& labels_manifest) {
    std::ifstream in(labels_manifest);
    if (!in) throw IoError("cannot open exemplar manifest " + labels_manifest.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError("exemplar manifest: empty file", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "label,glyph_name,file")
        throw ParseError("exemplar manifest: header must be \"label,glyph_name,file\", got \"" +
                             line + "\"",
                         0);

    ExemplarSet set;
    bool seen[10] = {};
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::istringstream row(line);
        std::string label_str, glyph_name, file;
        if (!std::getline(row, label_str, ',') || !std::getline(row, glyph_name, ',') ||
            !std::getline(row, file))
            throw ParseError("exemplar manifest: line " + std::to_string(line_no) +
                                 " needs 3 comma-separated columns",
                             0);

        int label;
        try {
            std::size_t used = 0;
            label = std::stoi(label_str, &used);
            if (used != label_str.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ParseError("exemplar manifest: line " + std::to_string(line_no) +
                                 ": bad label \"" + label_str + "\"",
                             0);
        }
        if (label < 0 || label > 9)
            throw InvalidParameter("exemplar manifest: label " + std::to_string(label) +
                                   " outside 0..9 on line " + std::to_string(line_no));
        if (seen[label])
            throw InvalidParameter("exemplar manifest: duplicate label " + std::to_string(label));
        seen[label] = true;

        GrayImage raw;
        try {
            raw = load_pgm(directory / file);
        } catch (const IoError& e) {
            throw IoError("exemplar for label " + std::to_string(label) + ": " + e.what());
        }
        GrayImage norm;
        try {
            norm = normalize_exemplar(raw);
        } catch (const InvalidParameter& e) {
            throw InvalidParameter("exemplar for label " + std::to_string(label) + ": " +
                                   e.what());
        }
        set.classes.push_back({label, glyph_name, std::move(norm)});
    }

    for (int k = 0; k < 10; ++k)
        if (!seen[k])
            throw InvalidParameter("exemplar manifest: missing label " + std::to_string(k));

    std::sort(set.classes.begin(), set.classes.end(),
              [](const ExemplarClass& a, const ExemplarClass& b) { return a.label < b.label; });
    return set;
}

}  // namespace afromnist
