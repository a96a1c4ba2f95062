#include "afromnist/morphometrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <utility>

#include "afromnist/error.hpp"
#include "afromnist/pgm.hpp"

namespace afromnist {

namespace {

// P2..P9 clockwise from north, out-of-bounds reads as background
std::array<int, 8> neighborhood(const BinaryMask& m, int r, int c) {
    auto g = [&](int rr, int cc) -> int {
        if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) return 0;
        return m.at(rr, cc);
    };
    return {g(r - 1, c),     g(r - 1, c + 1), g(r, c + 1), g(r + 1, c + 1),
            g(r + 1, c),     g(r + 1, c - 1), g(r, c - 1), g(r - 1, c - 1)};
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& mask) {
    BinaryMask img = mask;
    std::vector<std::pair<int, int>> doomed;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int step = 0; step < 2; ++step) {
            doomed.clear();
            for (int r = 0; r < img.height; ++r) {
                for (int c = 0; c < img.width; ++c) {
                    if (!img.at(r, c)) continue;
                    const auto p = neighborhood(img, r, c);
                    int b = 0;
                    for (int v : p) b += v;
                    if (b < 2 || b > 6) continue;
                    int a = 0;
                    for (int i = 0; i < 8; ++i)
                        if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
                    if (a != 1) continue;
                    if (step == 0) {
                        if (p[0] * p[2] * p[4] != 0) continue;  // N*E*S
                        if (p[2] * p[4] * p[6] != 0) continue;  // E*S*W
                    } else {
                        if (p[0] * p[2] * p[6] != 0) continue;  // N*E*W
                        if (p[0] * p[4] * p[6] != 0) continue;  // N*S*W
                    }
                    doomed.emplace_back(r, c);
                }
            }
            for (auto [r, c] : doomed) img.at(r, c) = 0;
            if (!doomed.empty()) changed = true;
        }
    }
    return img;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform, lower envelope of parabolas
// (Felzenszwalb & Huttenlocher)
void dt1d(const std::vector<double>& f, std::vector<double>& d, int n, std::vector<int>& v,
          std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_transform(const BinaryMask& mask) {
    // pad with a one-pixel background ring so the frame counts as background
    const int ph = mask.height + 2;
    const int pw = mask.width + 2;
    std::vector<double> grid(static_cast<std::size_t>(ph) * pw, 0.0);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            grid[static_cast<std::size_t>(r + 1) * pw + (c + 1)] = mask.at(r, c) ? kInf : 0.0;

    const int nmax = std::max(ph, pw);
    std::vector<double> f(nmax), d(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    for (int c = 0; c < pw; ++c) {
        for (int r = 0; r < ph; ++r) f[r] = grid[static_cast<std::size_t>(r) * pw + c];
        dt1d(f, d, ph, v, z);
        for (int r = 0; r < ph; ++r) grid[static_cast<std::size_t>(r) * pw + c] = d[r];
    }
    for (int r = 0; r < ph; ++r) {
        for (int c = 0; c < pw; ++c) f[c] = grid[static_cast<std::size_t>(r) * pw + c];
        dt1d(f, d, pw, v, z);
        for (int c = 0; c < pw; ++c) grid[static_cast<std::size_t>(r) * pw + c] = d[c];
    }

    std::vector<double> out(static_cast<std::size_t>(mask.height) * mask.width, 0.0);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            if (mask.at(r, c))
                out[static_cast<std::size_t>(r) * mask.width + c] =
                    std::sqrt(grid[static_cast<std::size_t>(r + 1) * pw + (c + 1)]);
    return out;
}

MorphometricRecord measure(const GrayImage& img) {
    const BinaryMask mask = binarize(img, 0.5);
    const std::size_t fg = mask.count();
    if (fg == 0) throw InvalidParameter("measure: no foreground pixels above 0.5");

    MorphometricRecord rec;
    rec.area = static_cast<double>(fg) / static_cast<double>(mask.on.size());

    int r0 = mask.height, r1 = -1, c0 = mask.width, c1 = -1;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    rec.height = r1 - r0 + 1;
    rec.width = c1 - c0 + 1;

    // slant from intensity-weighted central moments, x rightward, y upward
    double mass = 0, mx = 0, my = 0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double w = img.at(r, c);
            mass += w;
            mx += w * c;
            my += w * -r;
        }
    const double cx = mx / mass, cy = my / mass;
    double mu11 = 0, mu02 = 0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const double w = img.at(r, c);
            const double dx = c - cx, dy = -r - cy;
            mu11 += w * dx * dy;
            mu02 += w * dy * dy;
        }
    rec.slant = mu02 > 1e-12 ? mu11 / mu02 : 0.0;

    const BinaryMask skel = skeletonize(mask);
    const std::vector<double> edt = distance_transform(mask);

    // a degenerate blob can thin away entirely; fall back to the full mask
    const BinaryMask& support = skel.count() > 0 ? skel : mask;
    double tsum = 0;
    std::size_t tcount = 0;
    for (int r = 0; r < support.height; ++r)
        for (int c = 0; c < support.width; ++c)
            if (support.at(r, c)) {
                tsum += 2.0 * edt[static_cast<std::size_t>(r) * support.width + c];
                ++tcount;
            }
    rec.thickness = tsum / static_cast<double>(tcount);

    // each unordered adjacent skeleton pair once: E and S at weight 1,
    // SE and SW at sqrt(2)
    const double rt2 = std::numbers::sqrt2;
    double length = 0;
    auto on = [&](int r, int c) {
        return r >= 0 && r < skel.height && c >= 0 && c < skel.width && skel.at(r, c);
    };
    for (int r = 0; r < skel.height; ++r)
        for (int c = 0; c < skel.width; ++c) {
            if (!skel.at(r, c)) continue;
            if (on(r, c + 1)) length += 1.0;
            if (on(r + 1, c)) length += 1.0;
            if (on(r + 1, c + 1)) length += rt2;
            if (on(r + 1, c - 1)) length += rt2;
        }
    rec.length = length;
    return rec;
}

std::array<GrayImage, 10> class_mean_images(const IdxDataset& ds) {
    if (ds.size() == 0) throw InvalidParameter("class_mean_images: empty dataset");
    const std::size_t px = static_cast<std::size_t>(ds.rows) * ds.cols;
    std::array<GrayImage, 10> means;
    std::array<std::size_t, 10> counts{};
    for (auto& m : means) m = GrayImage(ds.rows, ds.cols);

    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int label = ds.labels[i];
        ++counts[static_cast<std::size_t>(label)];
        const auto img = ds.image(i);
        auto& acc = means[static_cast<std::size_t>(label)].pixels;
        for (std::size_t j = 0; j < px; ++j) acc[j] += img[j] / 255.0;
    }
    for (int k = 0; k < 10; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0)
            throw InvalidParameter("class_mean_images: no samples with label " +
                                   std::to_string(k));
        for (auto& v : means[static_cast<std::size_t>(k)].pixels)
            v /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
    return means;
}

void write_morph_csv(const std::vector<MorphometricRecord>& records,
                     const std::vector<std::uint8_t>& labels, std::ostream& out) {
    if (records.size() != labels.size())
        throw InvalidParameter("write_morph_csv: record/label count mismatch");
    out << "index,label,thickness,slant,width,height,length,area\n";
    char buf[256];
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::snprintf(buf, sizeof buf, "%zu,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", i,
                      static_cast<int>(labels[i]), r.thickness, r.slant, r.width, r.height,
                      r.length, r.area);
        out << buf;
    }
    if (!out) throw IoError("morphometrics CSV write failed");
}

void write_montage(const std::array<GrayImage, 10>& means, std::ostream& out) {
    const int h = means[0].height, w = means[0].width;
    for (const auto& m : means)
        if (m.height != h || m.width != w)
            throw InvalidParameter("montage: class means must share dimensions");
    GrayImage tile(h, w * 10);
    for (int k = 0; k < 10; ++k)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) tile.at(r, k * w + c) = means[static_cast<std::size_t>(k)].at(r, c);
    write_pgm(tile, out);
}

}  // namespace afromnist
