#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "afromnist/exemplar.hpp"
#include "afromnist/idx.hpp"
#include "afromnist/synthesis.hpp"

namespace afromnist {

struct DatasetSpec {
    std::size_t train_total = 60000;  // divisible by 10
    std::size_t test_total = 10000;   // divisible by 10
    DeformParams deform;
    bool shuffle = true;
};

void validate(const DatasetSpec& spec);

struct DatasetPair {
    IdxDataset train;
    IdxDataset test;
};

// Balanced, seeded generation: total/10 images per class and split, each from
// its own random stream, then one Fisher-Yates shuffle per split (images and
// labels permuted jointly). Output is identical for any worker count.
DatasetPair build_dataset(const ExemplarSet& exemplars, const DatasetSpec& spec, int jobs = 1);

// Ordered key=value sidecar; no timestamps, so identical runs produce
// identical bytes.
struct KvManifest {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, std::uint64_t value);
    void set(const std::string& key, double value);
    void write(const std::filesystem::path& path) const;
};

// Writes <name>-{train,test}-{images-idx3,labels-idx1}-ubyte into out_dir
// plus a manifest.txt recording the synthesis parameters and master seed.
void write_dataset_files(const DatasetPair& ds, const DatasetSpec& spec,
                         const std::filesystem::path& out_dir, const std::string& name);

enum class SplitFiles { train, test };

// Locates the images/labels pair for a split inside a directory, accepting
// both the <name>-train-... convention and the canonical MNIST file names
// (train-..., t10k-...).
std::pair<std::filesystem::path, std::filesystem::path> find_split_files(
    const std::filesystem::path& dir, SplitFiles split);

}  // namespace afromnist
