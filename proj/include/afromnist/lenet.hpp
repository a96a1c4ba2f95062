#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "afromnist/idx.hpp"

namespace afromnist {

// Conv 6@5x5 -> MaxPool 2x2 -> Tanh -> Conv 16@5x5 -> MaxPool 2x2 -> Tanh
// -> Dense 120 -> Tanh -> Dense 84 -> Tanh -> Dense 10 -> Softmax.
// Valid convolutions, stride 1: 28 -> 24 -> 12 -> 8 -> 4; flatten 16*4*4.
//
// Parameters are stored as S (float in production, double for the
// finite-difference oracle); all arithmetic accumulates in double.
template <typename S>
struct LeNetT {
    std::vector<S> conv1_w;  // [6][1][5][5]
    std::vector<S> conv1_b;  // [6]
    std::vector<S> conv2_w;  // [16][6][5][5]
    std::vector<S> conv2_b;  // [16]
    std::vector<S> fc1_w;    // [120][256]
    std::vector<S> fc1_b;    // [120]
    std::vector<S> fc2_w;    // [84][120]
    std::vector<S> fc2_b;    // [84]
    std::vector<S> fc3_w;    // [10][84]
    std::vector<S> fc3_b;    // [10]

    void allocate();  // resize every tensor to its canonical shape, zeroed

    std::array<std::span<S>, 10> tensors();
    std::array<std::span<const S>, 10> tensors() const;

    std::size_t parameter_count() const;
};

using LeNet = LeNetT<float>;

inline constexpr std::array<const char*, 10> kTensorNames = {
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w",
    "fc1_b",   "fc2_w",   "fc2_b",   "fc3_w",   "fc3_b"};

inline constexpr std::array<std::uint32_t, 10> kTensorRank = {4, 1, 4, 1, 2,
                                                              1, 2, 1, 2, 1};

inline constexpr std::array<std::array<std::uint32_t, 4>, 10> kTensorDims = {{
    {6, 1, 5, 5},
    {6, 0, 0, 0},
    {16, 6, 5, 5},
    {16, 0, 0, 0},
    {120, 256, 0, 0},
    {120, 0, 0, 0},
    {84, 120, 0, 0},
    {84, 0, 0, 0},
    {10, 84, 0, 0},
    {10, 0, 0, 0},
}};

std::size_t tensor_element_count(int tensor_index);

// weights+biases per layer: {156, 2416, 30840, 10164, 850}
std::array<std::size_t, 5> layer_parameter_counts();

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 20;
    double plateau = 1e-4;  // stop when epoch-mean loss improves by less
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
};

struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, 10>, 10> counts{};  // [true][predicted]

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(int true_label) const;
    double accuracy() const { return static_cast<double>(trace()) / static_cast<double>(total()); }
};

// 10 rows of 10 comma-separated counts, row = true label.
void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out);

struct EpochStats {
    int epoch = 0;  // 1-based
    double loss = 0;
    double train_accuracy = 0;
};

// CSV: epoch,loss,train_acc
void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out);

struct EvalResult {
    double accuracy = 0;
    ConfusionMatrix cm;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic per seed.
template <typename S>
LeNetT<S> init_model(std::uint64_t seed);

// Per-class probabilities, n rows of 10; pixels is n*784 values in [0,1].
template <typename S>
std::vector<double> forward(const LeNetT<S>& model, std::span<const double> pixels);

// First convolution stage pre-pool activations (6x24x24) for a single
// image; introspection hook for receptive-field locality checks.
template <typename S>
std::vector<double> conv1_activations(const LeNetT<S>& model, std::span<const double> pixels);

// Concatenated max-pool argmax choices for the batch (1120 entries per
// sample). Two parameter points with equal signatures lie on the same
// smooth piece of the loss — the precondition for central differences,
// which are meaningless across a pool-switch kink.
template <typename S>
std::vector<int> pool_argmax_signature(const LeNetT<S>& model, std::span<const double> pixels);

// Mean cross-entropy over the batch and its exact gradient. grads is
// resized/zeroed inside. If correct is non-null it receives the number of
// argmax hits. labels.size() determines the batch size.
template <typename S>
double loss_and_grads(const LeNetT<S>& model, std::span<const double> pixels,
                      std::span<const std::uint8_t> labels, LeNetT<double>& grads,
                      int* correct = nullptr);

// Mean cross-entropy only (finite-difference probe path).
template <typename S>
double batch_loss(const LeNetT<S>& model, std::span<const double> pixels,
                  std::span<const std::uint8_t> labels);

// First and second moment estimates plus the shared step counter.
struct AdamState {
    LeNetT<double> m;
    LeNetT<double> v;
    std::int64_t t = 0;

    void allocate();
};

// One bias-corrected Adam update over a flat parameter array:
// m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;
// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
template <typename S>
void adam_update(std::span<S> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::int64_t t, const TrainConfig& cfg);

// Applies adam_update tensor by tensor; increments state.t first.
template <typename S>
void adam_step(LeNetT<S>& model, const LeNetT<double>& grads, AdamState& state,
               const TrainConfig& cfg);

// Seeded-shuffle mini-batch training with plateau early stopping. Results
// are bit-identical for any jobs count: per-sample gradients are reduced
// in sample order.
template <typename S>
LeNetT<S> train(const IdxDataset& ds, const TrainConfig& cfg,
                std::vector<EpochStats>* history = nullptr);

// Argmax prediction, ties toward the lower class index.
template <typename S>
EvalResult evaluate(const LeNetT<S>& model, const IdxDataset& ds, int jobs = 1);

// Versioned binary checkpoint: magic "LN5W", u32 version, then each tensor
// as (u32 rank, u32 dims..., raw little-endian float32 data) in the fixed
// tensor order above.
void save_checkpoint(const LeNet& model, const std::filesystem::path& path);
LeNet load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace afromnist
