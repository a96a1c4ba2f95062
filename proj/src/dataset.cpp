#include "afromnist/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "afromnist/error.hpp"
#include "afromnist/rng.hpp"

namespace afromnist {

void validate(const DatasetSpec& spec) {
    if (spec.train_total == 0 || spec.train_total % 10 != 0)
        throw InvalidParameter("train total " + std::to_string(spec.train_total) +
                               " must be a positive multiple of 10");
    if (spec.test_total == 0 || spec.test_total % 10 != 0)
        throw InvalidParameter("test total " + std::to_string(spec.test_total) +
                               " must be a positive multiple of 10");
    validate(spec.deform);
}

namespace {

void quantize_into(const GrayImage& img, std::uint8_t* dst) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) dst[i] = quantize_u8(img.pixels[i]);
}

// class-major layout: class k occupies slots [k*per_class, (k+1)*per_class)
IdxDataset generate_split(const ExemplarSet& exemplars, const DatasetSpec& spec, Split split,
                          std::size_t total, int jobs) {
    const std::size_t per_class = total / 10;
    IdxDataset ds;
    ds.images.resize(total * 784);
    ds.labels.resize(total);
    for (std::size_t k = 0; k < 10; ++k)
        for (std::size_t i = 0; i < per_class; ++i)
            ds.labels[k * per_class + i] = static_cast<std::uint8_t>(k);

    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t slot = cursor.fetch_add(1);
            if (slot >= total) return;
            const std::size_t k = slot / per_class;
            const std::size_t index = slot % per_class;
            const GrayImage img =
                synthesize_example(exemplars.classes[k], spec.deform, split, index);
            quantize_into(img, ds.images.data() + slot * 784);
        }
    };

    const int n_threads = std::max(1, jobs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return ds;
}

void shuffle_split(IdxDataset& ds, std::uint64_t master_seed, Split split) {
    Rng rng(derive_stream(master_seed,
                          {static_cast<std::uint64_t>(split), stream_tag::shuffle}));
    const std::size_t n = ds.size();
    std::vector<std::uint8_t> tmp(784);
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = rng.bounded(i + 1);
        if (i == j) continue;
        std::swap(ds.labels[i], ds.labels[j]);
        auto* a = ds.images.data() + i * 784;
        auto* b = ds.images.data() + j * 784;
        std::copy(a, a + 784, tmp.data());
        std::copy(b, b + 784, a);
        std::copy(tmp.data(), tmp.data() + 784, b);
    }
}

}  // namespace

DatasetPair build_dataset(const ExemplarSet& exemplars, const DatasetSpec& spec, int jobs) {
    validate(spec);
    if (exemplars.classes.size() != 10)
        throw InvalidParameter("exemplar set must hold 10 classes, got " +
                               std::to_string(exemplars.classes.size()));
    for (std::size_t k = 0; k < 10; ++k) {
        const auto& ex = exemplars.classes[k];
        if (ex.label != static_cast<int>(k))
            throw InvalidParameter("exemplar classes must be sorted by label 0..9");
        if (ex.image.height != 28 || ex.image.width != 28)
            throw InvalidParameter("exemplar for label " + std::to_string(ex.label) +
                                   " is not 28x28");
    }

    DatasetPair out;
    out.train = generate_split(exemplars, spec, Split::train, spec.train_total, jobs);
    out.test = generate_split(exemplars, spec, Split::test, spec.test_total, jobs);
    if (spec.shuffle) {
        shuffle_split(out.train, spec.deform.master_seed, Split::train);
        shuffle_split(out.test, spec.deform.master_seed, Split::test);
    }
    return out;
}

void KvManifest::set(const std::string& key, const std::string& value) {
    entries.emplace_back(key, value);
}

void KvManifest::set(const std::string& key, std::uint64_t value) {
    entries.emplace_back(key, std::to_string(value));
}

void KvManifest::set(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    entries.emplace_back(key, buf);
}

void KvManifest::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open manifest " + path.string() + " for writing");
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
    if (!out) throw IoError("manifest write failed: " + path.string());
}

void write_dataset_files(const DatasetPair& ds, const DatasetSpec& spec,
                         const std::filesystem::path& out_dir, const std::string& name) {
    std::filesystem::create_directories(out_dir);
    const struct {
        const IdxDataset* data;
        bool train;
    } splits[] = {{&ds.train, true}, {&ds.test, false}};
    for (const auto& s : splits) {
        {
            std::ofstream f(out_dir / idx_file_name(name, s.train, true), std::ios::binary);
            if (!f) throw IoError("cannot create IDX image file in " + out_dir.string());
            write_idx_images(*s.data, f);
        }
        {
            std::ofstream f(out_dir / idx_file_name(name, s.train, false), std::ios::binary);
            if (!f) throw IoError("cannot create IDX label file in " + out_dir.string());
            write_idx_labels(*s.data, f);
        }
    }

    KvManifest m;
    m.set("dataset_name", name);
    m.set("train_total", static_cast<std::uint64_t>(spec.train_total));
    m.set("test_total", static_cast<std::uint64_t>(spec.test_total));
    m.set("alpha", spec.deform.alpha);
    m.set("gamma_lo", spec.deform.gamma_lo);
    m.set("gamma_hi", spec.deform.gamma_hi);
    for (std::size_t i = 0; i < spec.deform.corruptions.size(); ++i)
        m.set("corruption." + std::to_string(i), to_string(spec.deform.corruptions[i]));
    m.set("master_seed", spec.deform.master_seed);
    m.set("shuffle", std::string(spec.shuffle ? "true" : "false"));
    m.write(out_dir / "manifest.txt");
}

std::pair<std::filesystem::path, std::filesystem::path> find_split_files(
    const std::filesystem::path& dir, SplitFiles split) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("dataset directory not found: " + dir.string());

    auto find_suffix = [&](std::initializer_list<const char*> suffixes) {
        std::vector<std::filesystem::path> hits;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string fn = entry.path().filename().string();
            for (const char* suffix : suffixes) {
                const std::string s(suffix);
                if (fn.size() >= s.size() && fn.compare(fn.size() - s.size(), s.size(), s) == 0) {
                    hits.push_back(entry.path());
                    break;
                }
            }
        }
        std::sort(hits.begin(), hits.end());
        return hits;
    };

    const bool train = split == SplitFiles::train;
    auto images = train ? find_suffix({"train-images-idx3-ubyte"})
                        : find_suffix({"test-images-idx3-ubyte", "t10k-images-idx3-ubyte"});
    auto labels = train ? find_suffix({"train-labels-idx1-ubyte"})
                        : find_suffix({"test-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"});
    const char* what = train ? "train" : "test";
    if (images.empty() || labels.empty())
        throw IoError(std::string("no ") + what + " IDX pair found in " + dir.string());
    if (images.size() > 1 || labels.size() > 1)
        throw IoError(std::string("ambiguous ") + what + " IDX files in " + dir.string());
    return {images.front(), labels.front()};
}

}  // namespace afromnist
