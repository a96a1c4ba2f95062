#include "afromnist/lenet.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <thread>

#include "afromnist/error.hpp"
#include "afromnist/rng.hpp"

namespace afromnist {

namespace {

constexpr int kIn = 28;    // input side
constexpr int kK = 5;      // kernel side
constexpr int kC1 = 6;     // conv1 maps
constexpr int kA1 = 24;    // conv1 output side
constexpr int kP1 = 12;    // pool1 output side
constexpr int kC2 = 16;    // conv2 maps
constexpr int kA2 = 8;     // conv2 output side
constexpr int kP2 = 4;     // pool2 output side
constexpr int kFlat = kC2 * kP2 * kP2;  // 256
constexpr int kH1 = 120;
constexpr int kH2 = 84;
constexpr int kOut = 10;
constexpr int kPix = kIn * kIn;
constexpr std::size_t ws_arg1_size = kC1 * kP1 * kP1;
constexpr std::size_t ws_arg2_size = kC2 * kP2 * kP2;

// Per-sample activations and backward scratch, all double.
struct Workspace {
    std::array<double, kPix> x;
    std::array<double, kC1 * kA1 * kA1> a1;
    std::array<int, kC1 * kP1 * kP1> arg1;  // absolute index into a1
    std::array<double, kC1 * kP1 * kP1> t1;
    std::array<double, kC2 * kA2 * kA2> a2;
    std::array<int, kC2 * kP2 * kP2> arg2;
    std::array<double, kFlat> t2;
    std::array<double, kH1> h1;
    std::array<double, kH2> h2;
    std::array<double, kOut> logits;
    std::array<double, kOut> probs;

    std::array<double, kOut> dlogits;
    std::array<double, kH2> dh2;
    std::array<double, kH2> dz2;
    std::array<double, kH1> dh1;
    std::array<double, kH1> dz1;
    std::array<double, kFlat> dflat;
    std::array<double, kC2 * kA2 * kA2> da2;
    std::array<double, kC1 * kP1 * kP1> dt1;
    std::array<double, kC1 * kA1 * kA1> da1;
};

template <typename S>
void forward_sample(const LeNetT<S>& m, Workspace& ws) {
    for (int f = 0; f < kC1; ++f) {
        const S* w = &m.conv1_w[static_cast<std::size_t>(f) * kK * kK];
        const double b = static_cast<double>(m.conv1_b[static_cast<std::size_t>(f)]);
        for (int r = 0; r < kA1; ++r)
            for (int c = 0; c < kA1; ++c) {
                double acc = b;
                for (int i = 0; i < kK; ++i) {
                    const double* xr = &ws.x[static_cast<std::size_t>(r + i) * kIn + c];
                    const S* wr = &w[i * kK];
                    for (int j = 0; j < kK; ++j)
                        acc += static_cast<double>(wr[j]) * xr[j];
                }
                ws.a1[(static_cast<std::size_t>(f) * kA1 + r) * kA1 + c] = acc;
            }
    }

    // max pool 2x2 then tanh; first row-major maximum wins
    for (int f = 0; f < kC1; ++f)
        for (int r = 0; r < kP1; ++r)
            for (int c = 0; c < kP1; ++c) {
                const int base = (f * kA1 + 2 * r) * kA1 + 2 * c;
                int best = base;
                double bv = ws.a1[static_cast<std::size_t>(base)];
                for (int cand : {base + 1, base + kA1, base + kA1 + 1}) {
                    const double v = ws.a1[static_cast<std::size_t>(cand)];
                    if (v > bv) {
                        bv = v;
                        best = cand;
                    }
                }
                const int o = (f * kP1 + r) * kP1 + c;
                ws.arg1[static_cast<std::size_t>(o)] = best;
                ws.t1[static_cast<std::size_t>(o)] = std::tanh(bv);
            }

    for (int g = 0; g < kC2; ++g) {
        const double b = static_cast<double>(m.conv2_b[static_cast<std::size_t>(g)]);
        for (int r = 0; r < kA2; ++r)
            for (int c = 0; c < kA2; ++c) {
                double acc = b;
                for (int f = 0; f < kC1; ++f) {
                    const S* w =
                        &m.conv2_w[((static_cast<std::size_t>(g) * kC1 + f) * kK) * kK];
                    for (int i = 0; i < kK; ++i) {
                        const double* tr =
                            &ws.t1[(static_cast<std::size_t>(f) * kP1 + r + i) * kP1 + c];
                        const S* wr = &w[i * kK];
                        for (int j = 0; j < kK; ++j)
                            acc += static_cast<double>(wr[j]) * tr[j];
                    }
                }
                ws.a2[(static_cast<std::size_t>(g) * kA2 + r) * kA2 + c] = acc;
            }
    }

    for (int g = 0; g < kC2; ++g)
        for (int r = 0; r < kP2; ++r)
            for (int c = 0; c < kP2; ++c) {
                const int base = (g * kA2 + 2 * r) * kA2 + 2 * c;
                int best = base;
                double bv = ws.a2[static_cast<std::size_t>(base)];
                for (int cand : {base + 1, base + kA2, base + kA2 + 1}) {
                    const double v = ws.a2[static_cast<std::size_t>(cand)];
                    if (v > bv) {
                        bv = v;
                        best = cand;
                    }
                }
                const int o = (g * kP2 + r) * kP2 + c;
                ws.arg2[static_cast<std::size_t>(o)] = best;
                ws.t2[static_cast<std::size_t>(o)] = std::tanh(bv);
            }

    for (int o = 0; o < kH1; ++o) {
        double acc = static_cast<double>(m.fc1_b[static_cast<std::size_t>(o)]);
        const S* w = &m.fc1_w[static_cast<std::size_t>(o) * kFlat];
        for (int i = 0; i < kFlat; ++i) acc += static_cast<double>(w[i]) * ws.t2[i];
        ws.h1[static_cast<std::size_t>(o)] = std::tanh(acc);
    }
    for (int o = 0; o < kH2; ++o) {
        double acc = static_cast<double>(m.fc2_b[static_cast<std::size_t>(o)]);
        const S* w = &m.fc2_w[static_cast<std::size_t>(o) * kH1];
        for (int i = 0; i < kH1; ++i) acc += static_cast<double>(w[i]) * ws.h1[i];
        ws.h2[static_cast<std::size_t>(o)] = std::tanh(acc);
    }
    for (int o = 0; o < kOut; ++o) {
        double acc = static_cast<double>(m.fc3_b[static_cast<std::size_t>(o)]);
        const S* w = &m.fc3_w[static_cast<std::size_t>(o) * kH2];
        for (int i = 0; i < kH2; ++i) acc += static_cast<double>(w[i]) * ws.h2[i];
        ws.logits[static_cast<std::size_t>(o)] = acc;
    }
}

// Fills probs; returns -log p[label] via the log-sum-exp shift.
double softmax_loss(Workspace& ws, int label) {
    double mx = ws.logits[0];
    for (int k = 1; k < kOut; ++k) mx = std::max(mx, ws.logits[static_cast<std::size_t>(k)]);
    double sum = 0;
    for (int k = 0; k < kOut; ++k) {
        ws.probs[static_cast<std::size_t>(k)] = std::exp(ws.logits[static_cast<std::size_t>(k)] - mx);
        sum += ws.probs[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < kOut; ++k) ws.probs[static_cast<std::size_t>(k)] /= sum;
    return std::log(sum) + mx - ws.logits[static_cast<std::size_t>(label)];
}

int argmax_logits(const Workspace& ws) {
    int best = 0;
    for (int k = 1; k < kOut; ++k)
        if (ws.logits[static_cast<std::size_t>(k)] > ws.logits[static_cast<std::size_t>(best)])
            best = k;
    return best;
}

void zero(LeNetT<double>& g) {
    for (auto span : g.tensors()) std::fill(span.begin(), span.end(), 0.0);
}

void add(LeNetT<double>& acc, const LeNetT<double>& g) {
    auto a = acc.tensors();
    auto b = g.tensors();
    for (int t = 0; t < 10; ++t)
        for (std::size_t i = 0; i < a[static_cast<std::size_t>(t)].size(); ++i)
            a[static_cast<std::size_t>(t)][i] += b[static_cast<std::size_t>(t)][i];
}

void scale(LeNetT<double>& g, double s) {
    for (auto span : g.tensors())
        for (double& v : span) v *= s;
}

// Per-sample gradient; overwrites g (which must be allocated and zeroed).
template <typename S>
void backward_sample(const LeNetT<S>& m, Workspace& ws, int label, LeNetT<double>& g) {
    for (int k = 0; k < kOut; ++k)
        ws.dlogits[static_cast<std::size_t>(k)] =
            ws.probs[static_cast<std::size_t>(k)] - (k == label ? 1.0 : 0.0);

    std::fill(ws.dh2.begin(), ws.dh2.end(), 0.0);
    for (int k = 0; k < kOut; ++k) {
        const double d = ws.dlogits[static_cast<std::size_t>(k)];
        g.fc3_b[static_cast<std::size_t>(k)] = d;
        double* gw = &g.fc3_w[static_cast<std::size_t>(k) * kH2];
        const S* w = &m.fc3_w[static_cast<std::size_t>(k) * kH2];
        for (int j = 0; j < kH2; ++j) {
            gw[j] = d * ws.h2[static_cast<std::size_t>(j)];
            ws.dh2[static_cast<std::size_t>(j)] += static_cast<double>(w[j]) * d;
        }
    }
    for (int j = 0; j < kH2; ++j)
        ws.dz2[static_cast<std::size_t>(j)] =
            (1.0 - ws.h2[static_cast<std::size_t>(j)] * ws.h2[static_cast<std::size_t>(j)]) *
            ws.dh2[static_cast<std::size_t>(j)];

    std::fill(ws.dh1.begin(), ws.dh1.end(), 0.0);
    for (int k = 0; k < kH2; ++k) {
        const double d = ws.dz2[static_cast<std::size_t>(k)];
        g.fc2_b[static_cast<std::size_t>(k)] = d;
        double* gw = &g.fc2_w[static_cast<std::size_t>(k) * kH1];
        const S* w = &m.fc2_w[static_cast<std::size_t>(k) * kH1];
        for (int j = 0; j < kH1; ++j) {
            gw[j] = d * ws.h1[static_cast<std::size_t>(j)];
            ws.dh1[static_cast<std::size_t>(j)] += static_cast<double>(w[j]) * d;
        }
    }
    for (int j = 0; j < kH1; ++j)
        ws.dz1[static_cast<std::size_t>(j)] =
            (1.0 - ws.h1[static_cast<std::size_t>(j)] * ws.h1[static_cast<std::size_t>(j)]) *
            ws.dh1[static_cast<std::size_t>(j)];

    std::fill(ws.dflat.begin(), ws.dflat.end(), 0.0);
    for (int k = 0; k < kH1; ++k) {
        const double d = ws.dz1[static_cast<std::size_t>(k)];
        g.fc1_b[static_cast<std::size_t>(k)] = d;
        double* gw = &g.fc1_w[static_cast<std::size_t>(k) * kFlat];
        const S* w = &m.fc1_w[static_cast<std::size_t>(k) * kFlat];
        for (int j = 0; j < kFlat; ++j) {
            gw[j] = d * ws.t2[static_cast<std::size_t>(j)];
            ws.dflat[static_cast<std::size_t>(j)] += static_cast<double>(w[j]) * d;
        }
    }

    // tanh then unpool: route each pooled gradient to the recorded argmax
    std::fill(ws.da2.begin(), ws.da2.end(), 0.0);
    for (int o = 0; o < kFlat; ++o) {
        const double t = ws.t2[static_cast<std::size_t>(o)];
        ws.da2[static_cast<std::size_t>(ws.arg2[static_cast<std::size_t>(o)])] =
            (1.0 - t * t) * ws.dflat[static_cast<std::size_t>(o)];
    }

    std::fill(ws.dt1.begin(), ws.dt1.end(), 0.0);
    for (int gmap = 0; gmap < kC2; ++gmap) {
        double bacc = 0;
        for (int r = 0; r < kA2; ++r)
            for (int c = 0; c < kA2; ++c) {
                const double d = ws.da2[(static_cast<std::size_t>(gmap) * kA2 + r) * kA2 + c];
                if (d == 0.0) continue;
                bacc += d;
                for (int f = 0; f < kC1; ++f) {
                    const std::size_t wbase =
                        ((static_cast<std::size_t>(gmap) * kC1 + f) * kK) * kK;
                    for (int i = 0; i < kK; ++i) {
                        const std::size_t trow =
                            (static_cast<std::size_t>(f) * kP1 + r + i) * kP1 + c;
                        for (int j = 0; j < kK; ++j) {
                            g.conv2_w[wbase + static_cast<std::size_t>(i) * kK + j] +=
                                d * ws.t1[trow + static_cast<std::size_t>(j)];
                            ws.dt1[trow + static_cast<std::size_t>(j)] +=
                                static_cast<double>(
                                    m.conv2_w[wbase + static_cast<std::size_t>(i) * kK + j]) *
                                d;
                        }
                    }
                }
            }
        g.conv2_b[static_cast<std::size_t>(gmap)] = bacc;
    }

    std::fill(ws.da1.begin(), ws.da1.end(), 0.0);
    for (int o = 0; o < kC1 * kP1 * kP1; ++o) {
        const double t = ws.t1[static_cast<std::size_t>(o)];
        ws.da1[static_cast<std::size_t>(ws.arg1[static_cast<std::size_t>(o)])] =
            (1.0 - t * t) * ws.dt1[static_cast<std::size_t>(o)];
    }

    for (int f = 0; f < kC1; ++f) {
        double bacc = 0;
        for (int r = 0; r < kA1; ++r)
            for (int c = 0; c < kA1; ++c) {
                const double d = ws.da1[(static_cast<std::size_t>(f) * kA1 + r) * kA1 + c];
                if (d == 0.0) continue;
                bacc += d;
                double* gw = &g.conv1_w[static_cast<std::size_t>(f) * kK * kK];
                for (int i = 0; i < kK; ++i) {
                    const double* xr = &ws.x[static_cast<std::size_t>(r + i) * kIn + c];
                    for (int j = 0; j < kK; ++j) gw[i * kK + j] += d * xr[j];
                }
            }
        g.conv1_b[static_cast<std::size_t>(f)] = bacc;
    }
}

void load_pixels(std::span<const double> pixels, std::size_t sample, Workspace& ws) {
    std::copy_n(pixels.data() + sample * kPix, kPix, ws.x.data());
}

void load_pixels_u8(std::span<const std::uint8_t> bytes, std::size_t sample, Workspace& ws) {
    const std::uint8_t* p = bytes.data() + sample * kPix;
    for (int i = 0; i < kPix; ++i) ws.x[static_cast<std::size_t>(i)] = p[i] * (1.0 / 255.0);
}

// Mean loss and mean gradient over one batch. Per-sample gradients are
// computed into slots (possibly in parallel) and reduced in sample order,
// so the result is independent of the jobs count.
template <typename S>
double batch_grads(const LeNetT<S>& m, std::span<const double> pixels,
                   std::span<const std::uint8_t> labels, int jobs,
                   std::vector<LeNetT<double>>& slots,
                   std::vector<std::unique_ptr<Workspace>>& workspaces,
                   std::vector<double>& losses, LeNetT<double>& grads, int* correct) {
    const std::size_t n = labels.size();
    zero(grads);
    losses.assign(n, 0.0);
    std::vector<int> hits(n, 0);

    if (jobs <= 1) {
        if (slots.empty()) slots.resize(1);
        slots[0].allocate();
        auto& ws = *workspaces[0];
        double loss_sum = 0;
        for (std::size_t b = 0; b < n; ++b) {
            load_pixels(pixels, b, ws);
            forward_sample(m, ws);
            loss_sum += softmax_loss(ws, labels[b]);
            if (correct && argmax_logits(ws) == labels[b]) ++hits[b];
            zero(slots[0]);
            backward_sample(m, ws, labels[b], slots[0]);
            add(grads, slots[0]);
        }
        if (correct)
            for (int h : hits) *correct += h;
        scale(grads, 1.0 / static_cast<double>(n));
        return loss_sum / static_cast<double>(n);
    }

    if (slots.size() < n) slots.resize(n);
    const int nthreads = std::min<int>(jobs, static_cast<int>(n));
    auto worker = [&](int w) {
        auto& ws = *workspaces[static_cast<std::size_t>(w)];
        for (std::size_t b = static_cast<std::size_t>(w); b < n;
             b += static_cast<std::size_t>(nthreads)) {
            load_pixels(pixels, b, ws);
            forward_sample(m, ws);
            losses[b] = softmax_loss(ws, labels[b]);
            if (argmax_logits(ws) == labels[b]) hits[b] = 1;
            slots[b].allocate();
            backward_sample(m, ws, labels[b], slots[b]);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads) - 1);
    for (int w = 1; w < nthreads; ++w) pool.emplace_back(worker, w);
    worker(0);
    for (auto& th : pool) th.join();

    double loss_sum = 0;
    for (std::size_t b = 0; b < n; ++b) {
        loss_sum += losses[b];
        add(grads, slots[b]);
        if (correct) *correct += hits[b];
    }
    scale(grads, 1.0 / static_cast<double>(n));
    return loss_sum / static_cast<double>(n);
}

void require_28x28(const IdxDataset& ds) {
    if (ds.rows != kIn || ds.cols != kIn)
        throw InvalidParameter("model expects 28x28 inputs, dataset is " +
                               std::to_string(ds.rows) + "x" + std::to_string(ds.cols));
}

}  // namespace

template <typename S>
void LeNetT<S>::allocate() {
    conv1_w.assign(static_cast<std::size_t>(kC1) * kK * kK, S(0));
    conv1_b.assign(kC1, S(0));
    conv2_w.assign(static_cast<std::size_t>(kC2) * kC1 * kK * kK, S(0));
    conv2_b.assign(kC2, S(0));
    fc1_w.assign(static_cast<std::size_t>(kH1) * kFlat, S(0));
    fc1_b.assign(kH1, S(0));
    fc2_w.assign(static_cast<std::size_t>(kH2) * kH1, S(0));
    fc2_b.assign(kH2, S(0));
    fc3_w.assign(static_cast<std::size_t>(kOut) * kH2, S(0));
    fc3_b.assign(kOut, S(0));
}

template <typename S>
std::array<std::span<S>, 10> LeNetT<S>::tensors() {
    return {std::span<S>(conv1_w), std::span<S>(conv1_b), std::span<S>(conv2_w),
            std::span<S>(conv2_b), std::span<S>(fc1_w),   std::span<S>(fc1_b),
            std::span<S>(fc2_w),   std::span<S>(fc2_b),   std::span<S>(fc3_w),
            std::span<S>(fc3_b)};
}

template <typename S>
std::array<std::span<const S>, 10> LeNetT<S>::tensors() const {
    return {std::span<const S>(conv1_w), std::span<const S>(conv1_b),
            std::span<const S>(conv2_w), std::span<const S>(conv2_b),
            std::span<const S>(fc1_w),   std::span<const S>(fc1_b),
            std::span<const S>(fc2_w),   std::span<const S>(fc2_b),
            std::span<const S>(fc3_w),   std::span<const S>(fc3_b)};
}

template <typename S>
std::size_t LeNetT<S>::parameter_count() const {
    std::size_t n = 0;
    for (auto span : tensors()) n += span.size();
    return n;
}

std::size_t tensor_element_count(int tensor_index) {
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < kTensorRank[static_cast<std::size_t>(tensor_index)]; ++r)
        n *= kTensorDims[static_cast<std::size_t>(tensor_index)][r];
    return n;
}

std::array<std::size_t, 5> layer_parameter_counts() {
    std::array<std::size_t, 5> out{};
    for (int layer = 0; layer < 5; ++layer)
        out[static_cast<std::size_t>(layer)] =
            tensor_element_count(2 * layer) + tensor_element_count(2 * layer + 1);
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
        throw InvalidParameter("learning rate must be positive");
    if (!(beta1 > 0) || beta1 >= 1 || !(beta2 > 0) || beta2 >= 1)
        throw InvalidParameter("beta1 and beta2 must lie in (0,1)");
    if (!(epsilon > 0)) throw InvalidParameter("epsilon must be positive");
    if (batch_size < 1) throw InvalidParameter("batch size must be at least 1");
    if (max_epochs < 1) throw InvalidParameter("max epochs must be at least 1");
    if (!(plateau > 0)) throw InvalidParameter("plateau threshold must be positive");
    if (jobs < 1) throw InvalidParameter("jobs must be at least 1");
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts)
        for (std::uint64_t v : row) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t n = 0;
    for (int k = 0; k < 10; ++k) n += counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    return n;
}

std::uint64_t ConfusionMatrix::row_sum(int true_label) const {
    std::uint64_t n = 0;
    for (std::uint64_t v : counts[static_cast<std::size_t>(true_label)]) n += v;
    return n;
}

void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out) {
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 10; ++c) {
            if (c) out << ',';
            out << cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        out << '\n';
    }
    if (!out) throw IoError("confusion matrix write failed");
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
    out << "epoch,loss,train_acc\n";
    char buf[96];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g\n", e.epoch, e.loss, e.train_accuracy);
        out << buf;
    }
    if (!out) throw IoError("history write failed");
}

template <typename S>
LeNetT<S> init_model(std::uint64_t seed) {
    LeNetT<S> m;
    m.allocate();
    Rng rng(derive_stream(seed, {stream_tag::init}));
    const auto glorot = [&](std::vector<S>& w, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (S& v : w) v = static_cast<S>(rng.uniform(-limit, limit));
    };
    glorot(m.conv1_w, kK * kK, kC1 * kK * kK);
    glorot(m.conv2_w, kC1 * kK * kK, kC2 * kK * kK);
    glorot(m.fc1_w, kFlat, kH1);
    glorot(m.fc2_w, kH1, kH2);
    glorot(m.fc3_w, kH2, kOut);
    return m;
}

template <typename S>
std::vector<double> forward(const LeNetT<S>& model, std::span<const double> pixels) {
    if (pixels.empty() || pixels.size() % kPix != 0)
        throw InvalidParameter("forward expects a positive multiple of 784 pixels");
    const std::size_t n = pixels.size() / kPix;
    std::vector<double> probs(n * kOut);
    auto ws = std::make_unique<Workspace>();
    for (std::size_t b = 0; b < n; ++b) {
        load_pixels(pixels, b, *ws);
        forward_sample(model, *ws);
        softmax_loss(*ws, 0);
        std::copy_n(ws->probs.data(), kOut, probs.data() + b * kOut);
    }
    return probs;
}

template <typename S>
std::vector<double> conv1_activations(const LeNetT<S>& model, std::span<const double> pixels) {
    if (pixels.size() != kPix) throw InvalidParameter("conv1_activations expects 784 pixels");
    auto ws = std::make_unique<Workspace>();
    load_pixels(pixels, 0, *ws);
    forward_sample(model, *ws);
    return std::vector<double>(ws->a1.begin(), ws->a1.end());
}

template <typename S>
std::vector<int> pool_argmax_signature(const LeNetT<S>& model, std::span<const double> pixels) {
    if (pixels.empty() || pixels.size() % kPix != 0)
        throw InvalidParameter("pool_argmax_signature expects a positive multiple of 784 pixels");
    const std::size_t n = pixels.size() / kPix;
    std::vector<int> sig;
    sig.reserve(n * (ws_arg1_size + ws_arg2_size));
    auto ws = std::make_unique<Workspace>();
    for (std::size_t b = 0; b < n; ++b) {
        load_pixels(pixels, b, *ws);
        forward_sample(model, *ws);
        sig.insert(sig.end(), ws->arg1.begin(), ws->arg1.end());
        sig.insert(sig.end(), ws->arg2.begin(), ws->arg2.end());
    }
    return sig;
}

template <typename S>
double loss_and_grads(const LeNetT<S>& model, std::span<const double> pixels,
                      std::span<const std::uint8_t> labels, LeNetT<double>& grads,
                      int* correct) {
    if (labels.empty() || pixels.size() != labels.size() * static_cast<std::size_t>(kPix))
        throw InvalidParameter("batch pixel count must equal 784 * label count");
    grads.allocate();
    std::vector<LeNetT<double>> slots;
    std::vector<std::unique_ptr<Workspace>> workspaces;
    workspaces.push_back(std::make_unique<Workspace>());
    std::vector<double> losses;
    if (correct) *correct = 0;
    return batch_grads(model, pixels, labels, 1, slots, workspaces, losses, grads, correct);
}

template <typename S>
double batch_loss(const LeNetT<S>& model, std::span<const double> pixels,
                  std::span<const std::uint8_t> labels) {
    if (labels.empty() || pixels.size() != labels.size() * static_cast<std::size_t>(kPix))
        throw InvalidParameter("batch pixel count must equal 784 * label count");
    auto ws = std::make_unique<Workspace>();
    double loss_sum = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        load_pixels(pixels, b, *ws);
        forward_sample(model, *ws);
        loss_sum += softmax_loss(*ws, labels[b]);
    }
    return loss_sum / static_cast<double>(labels.size());
}

void AdamState::allocate() {
    m.allocate();
    v.allocate();
    t = 0;
}

template <typename S>
void adam_update(std::span<S> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::int64_t t, const TrainConfig& cfg) {
    if (theta.size() != grad.size() || theta.size() != m.size() || theta.size() != v.size())
        throw InvalidParameter("adam_update: span sizes differ");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        theta[i] = static_cast<S>(static_cast<double>(theta[i]) -
                                  cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
}

template <typename S>
void adam_step(LeNetT<S>& model, const LeNetT<double>& grads, AdamState& state,
               const TrainConfig& cfg) {
    ++state.t;
    auto th = model.tensors();
    auto gr = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    for (int t = 0; t < 10; ++t)
        adam_update(th[static_cast<std::size_t>(t)], gr[static_cast<std::size_t>(t)],
                    ms[static_cast<std::size_t>(t)], vs[static_cast<std::size_t>(t)], state.t,
                    cfg);
}

template <typename S>
LeNetT<S> train(const IdxDataset& ds, const TrainConfig& cfg,
                std::vector<EpochStats>* history) {
    cfg.validate();
    validate(ds);
    require_28x28(ds);
    const std::size_t n = ds.size();

    LeNetT<S> model = init_model<S>(cfg.seed);
    AdamState state;
    state.allocate();
    LeNetT<double> grads;
    grads.allocate();

    const int jobs = cfg.jobs;
    std::vector<LeNetT<double>> slots;
    std::vector<std::unique_ptr<Workspace>> workspaces;
    const int nws = std::max(1, jobs);
    for (int w = 0; w < nws; ++w) workspaces.push_back(std::make_unique<Workspace>());
    std::vector<double> losses;

    std::vector<std::size_t> order(n);
    std::vector<double> batch_px(static_cast<std::size_t>(cfg.batch_size) * kPix);
    std::vector<std::uint8_t> batch_lb(static_cast<std::size_t>(cfg.batch_size));

    double prev_loss = 0;
    for (int e = 0; e < cfg.max_epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_stream(cfg.seed, {stream_tag::epoch, static_cast<std::uint64_t>(e)}));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.bounded(i)]);

        double loss_sum = 0;
        int correct = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bn = std::min<std::size_t>(cfg.batch_size, n - start);
            for (std::size_t b = 0; b < bn; ++b) {
                const auto img = ds.image(order[start + b]);
                double* dst = batch_px.data() + b * kPix;
                for (int p = 0; p < kPix; ++p)
                    dst[p] = img[static_cast<std::size_t>(p)] * (1.0 / 255.0);
                batch_lb[b] = ds.labels[order[start + b]];
            }
            const double mean_loss = batch_grads(
                model, std::span<const double>(batch_px.data(), bn * kPix),
                std::span<const std::uint8_t>(batch_lb.data(), bn), jobs, slots, workspaces,
                losses, grads, &correct);
            adam_step(model, grads, state, cfg);
            loss_sum += mean_loss * static_cast<double>(bn);
        }

        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) throw InvalidParameter("training diverged: non-finite loss");
        if (history)
            history->push_back(
                {e + 1, epoch_loss, static_cast<double>(correct) / static_cast<double>(n)});
        if (e > 0 && prev_loss - epoch_loss < cfg.plateau) break;
        prev_loss = epoch_loss;
    }
    return model;
}

template <typename S>
EvalResult evaluate(const LeNetT<S>& model, const IdxDataset& ds, int jobs) {
    validate(ds);
    require_28x28(ds);
    if (jobs < 1) throw InvalidParameter("jobs must be at least 1");
    const std::size_t n = ds.size();
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));

    std::vector<ConfusionMatrix> partial(static_cast<std::size_t>(nthreads));
    std::atomic<std::size_t> cursor{0};
    constexpr std::size_t kChunk = 256;
    auto worker = [&](int w) {
        auto ws = std::make_unique<Workspace>();
        auto& cm = partial[static_cast<std::size_t>(w)];
        for (;;) {
            const std::size_t begin = cursor.fetch_add(kChunk);
            if (begin >= n) break;
            const std::size_t end = std::min(n, begin + kChunk);
            for (std::size_t i = begin; i < end; ++i) {
                load_pixels_u8(ds.image(i), 0, *ws);
                forward_sample(model, *ws);
                const int pred = argmax_logits(*ws);
                ++cm.counts[static_cast<std::size_t>(ds.labels[i])][static_cast<std::size_t>(pred)];
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < nthreads; ++w) pool.emplace_back(worker, w);
    worker(0);
    for (auto& th : pool) th.join();

    EvalResult res;
    for (const auto& cm : partial)
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                res.cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] +=
                    cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    res.accuracy = res.cm.accuracy();
    return res;
}

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32le(const std::vector<std::uint8_t>& b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

constexpr char kMagic[4] = {'L', 'N', '5', 'W'};

}  // namespace

void save_checkpoint(const LeNet& model, const std::filesystem::path& path) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + model.parameter_count() * 4 + 10 * 5 * 4);
    for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_u32le(out, kCheckpointVersion);
    auto tensors = model.tensors();
    for (int t = 0; t < 10; ++t) {
        const std::uint32_t rank = kTensorRank[static_cast<std::size_t>(t)];
        put_u32le(out, rank);
        for (std::uint32_t r = 0; r < rank; ++r)
            put_u32le(out, kTensorDims[static_cast<std::size_t>(t)][r]);
        for (float v : tensors[static_cast<std::size_t>(t)])
            put_u32le(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint write failed: " + path.string());
}

LeNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());

    auto need = [&](std::size_t off, std::size_t count, const char* what) {
        if (off + count > bytes.size())
            throw ParseError(std::string("checkpoint truncated reading ") + what, off);
    };
    need(0, 4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("checkpoint has wrong magic (expected LN5W): " + path.string(), 0);
    need(4, 4, "version");
    const std::uint32_t version = get_u32le(bytes, 4);
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);

    LeNet model;
    model.allocate();
    auto tensors = model.tensors();
    std::size_t off = 8;
    for (int t = 0; t < 10; ++t) {
        const char* name = kTensorNames[static_cast<std::size_t>(t)];
        need(off, 4, name);
        const std::uint32_t rank = get_u32le(bytes, off);
        if (rank != kTensorRank[static_cast<std::size_t>(t)])
            throw ParseError(std::string("unexpected rank for ") + name, off);
        off += 4;
        for (std::uint32_t r = 0; r < rank; ++r) {
            need(off, 4, name);
            const std::uint32_t dim = get_u32le(bytes, off);
            if (dim != kTensorDims[static_cast<std::size_t>(t)][r])
                throw ParseError(std::string("unexpected dimension for ") + name, off);
            off += 4;
        }
        auto span = tensors[static_cast<std::size_t>(t)];
        need(off, span.size() * 4, name);
        for (float& v : span) {
            v = std::bit_cast<float>(get_u32le(bytes, off));
            if (!std::isfinite(v))
                throw ParseError(std::string("non-finite value in ") + name, off);
            off += 4;
        }
    }
    if (off != bytes.size())
        throw ParseError("trailing bytes after last tensor", off);
    return model;
}

template struct LeNetT<float>;
template struct LeNetT<double>;

template LeNetT<float> init_model<float>(std::uint64_t);
template LeNetT<double> init_model<double>(std::uint64_t);

template std::vector<double> forward<float>(const LeNetT<float>&, std::span<const double>);
template std::vector<double> forward<double>(const LeNetT<double>&, std::span<const double>);

template std::vector<double> conv1_activations<float>(const LeNetT<float>&,
                                                      std::span<const double>);
template std::vector<double> conv1_activations<double>(const LeNetT<double>&,
                                                       std::span<const double>);

template std::vector<int> pool_argmax_signature<float>(const LeNetT<float>&,
                                                       std::span<const double>);
template std::vector<int> pool_argmax_signature<double>(const LeNetT<double>&,
                                                        std::span<const double>);

template double loss_and_grads<float>(const LeNetT<float>&, std::span<const double>,
                                      std::span<const std::uint8_t>, LeNetT<double>&, int*);
template double loss_and_grads<double>(const LeNetT<double>&, std::span<const double>,
                                       std::span<const std::uint8_t>, LeNetT<double>&, int*);

template double batch_loss<float>(const LeNetT<float>&, std::span<const double>,
                                  std::span<const std::uint8_t>);
template double batch_loss<double>(const LeNetT<double>&, std::span<const double>,
                                   std::span<const std::uint8_t>);

template void adam_update<float>(std::span<float>, std::span<const double>, std::span<double>,
                                 std::span<double>, std::int64_t, const TrainConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::int64_t, const TrainConfig&);

template void adam_step<float>(LeNetT<float>&, const LeNetT<double>&, AdamState&,
                               const TrainConfig&);
template void adam_step<double>(LeNetT<double>&, const LeNetT<double>&, AdamState&,
                                const TrainConfig&);

template LeNetT<float> train<float>(const IdxDataset&, const TrainConfig&,
                                    std::vector<EpochStats>*);
template LeNetT<double> train<double>(const IdxDataset&, const TrainConfig&,
                                      std::vector<EpochStats>*);

template EvalResult evaluate<float>(const LeNetT<float>&, const IdxDataset&, int);
template EvalResult evaluate<double>(const LeNetT<double>&, const IdxDataset&, int);

}  // namespace afromnist
