// Command-line front end: generate / train / eval / inspect.
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "afromnist/dataset.hpp"
#include "afromnist/error.hpp"
#include "afromnist/exemplar.hpp"
#include "afromnist/idx.hpp"
#include "afromnist/lenet.hpp"
#include "afromnist/morphometrics.hpp"
#include "afromnist/synthesis.hpp"

namespace fs = std::filesystem;
using namespace afromnist;

namespace {

constexpr const char* kToolVersion = "1.0.0";

int default_jobs() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct GenerateArgs {
    std::string exemplars;
    std::string manifest;
    std::string out;
    std::string name = "afromnist";
    std::uint64_t train = 60000;
    std::uint64_t test = 10000;
    double alpha = 8.0;
    std::vector<double> gamma{2.0, 2.5};
    std::vector<std::string> corrupt;
    std::uint64_t seed = 0;
    bool no_shuffle = false;
    int jobs = default_jobs();
};

struct TrainArgs {
    std::string data;
    std::string out;
    double lr = 0.001;
    int batch = 64;
    int epochs = 20;
    std::uint64_t seed = 0;
    int jobs = default_jobs();
};

struct EvalArgs {
    std::string model;
    std::string data;
    std::string cm;
    std::string split = "test";
    int jobs = default_jobs();
};

struct InspectArgs {
    std::string data;
    std::string avg;
    std::string morph;
    std::string split = "train";
    std::string exemplars;
    std::string manifest;
    int jobs = default_jobs();
};

std::string corruption_list(const std::vector<CorruptionSpec>& specs) {
    std::string s;
    for (const auto& c : specs) {
        if (!s.empty()) s += ';';
        s += to_string(c);
    }
    return s.empty() ? "none" : s;
}

int run_generate(const GenerateArgs& a) {
    const fs::path exdir = a.exemplars;
    const fs::path manifest = a.manifest.empty() ? exdir / "manifest.csv" : fs::path(a.manifest);
    const ExemplarSet exemplars = load_exemplar_set(exdir, manifest);

    DatasetSpec spec;
    spec.train_total = a.train;
    spec.test_total = a.test;
    spec.deform.alpha = a.alpha;
    spec.deform.gamma_lo = a.gamma[0];
    spec.deform.gamma_hi = a.gamma[1];
    for (const auto& c : a.corrupt) spec.deform.corruptions.push_back(parse_corruption(c));
    spec.deform.master_seed = a.seed;
    spec.shuffle = !a.no_shuffle;

    const DatasetPair ds = build_dataset(exemplars, spec, a.jobs);
    fs::create_directories(a.out);
    write_dataset_files(ds, spec, a.out, a.name);

    KvManifest rm;
    rm.set("command", std::string("generate"));
    rm.set("tool_version", std::string(kToolVersion));
    rm.set("exemplars", exdir.string());
    rm.set("exemplar_manifest", manifest.string());
    rm.set("out", a.out);
    rm.set("dataset_name", a.name);
    rm.set("train_total", a.train);
    rm.set("test_total", a.test);
    rm.set("alpha", a.alpha);
    rm.set("gamma_lo", a.gamma[0]);
    rm.set("gamma_hi", a.gamma[1]);
    rm.set("corruptions", corruption_list(spec.deform.corruptions));
    rm.set("master_seed", a.seed);
    rm.set("shuffle", std::string(spec.shuffle ? "true" : "false"));
    rm.write(fs::path(a.out) / "run_manifest.txt");

    std::cout << "train_images=" << ds.train.size() << "\n"
              << "test_images=" << ds.test.size() << "\n"
              << "out=" << a.out << "\n";
    return 0;
}

int run_train(const TrainArgs& a) {
    const auto [trimg, trlab] = find_split_files(a.data, SplitFiles::train);
    const auto [teimg, telab] = find_split_files(a.data, SplitFiles::test);
    const IdxDataset train_ds = load_idx(trimg, trlab);
    const IdxDataset test_ds = load_idx(teimg, telab);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.max_epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.jobs = a.jobs;

    std::vector<EpochStats> history;
    const LeNet model = train<float>(train_ds, cfg, &history);
    save_checkpoint(model, a.out);

    {
        std::ofstream hf(a.out + ".history.csv", std::ios::trunc);
        if (!hf) throw IoError("cannot open history file: " + a.out + ".history.csv");
        write_history_csv(history, hf);
    }

    const EvalResult on_train = evaluate(model, train_ds, a.jobs);
    const EvalResult on_test = evaluate(model, test_ds, a.jobs);

    const auto counts = layer_parameter_counts();
    std::size_t total = 0;
    std::string joined;
    for (std::size_t c : counts) {
        if (!joined.empty()) joined += ',';
        joined += std::to_string(c);
        total += c;
    }
    std::cout << "param_counts=" << joined << "\n"
              << "param_total=" << total << "\n"
              << "epochs_run=" << history.size() << "\n"
              << "final_loss=" << (history.empty() ? 0.0 : history.back().loss) << "\n"
              << "train_accuracy=" << fmt6(on_train.accuracy) << "\n"
              << "test_accuracy=" << fmt6(on_test.accuracy) << "\n";

    KvManifest rm;
    rm.set("command", std::string("train"));
    rm.set("tool_version", std::string(kToolVersion));
    rm.set("data", a.data);
    rm.set("out", a.out);
    rm.set("learning_rate", a.lr);
    rm.set("batch_size", static_cast<std::uint64_t>(a.batch));
    rm.set("max_epochs", static_cast<std::uint64_t>(a.epochs));
    rm.set("seed", a.seed);
    rm.write(a.out + ".manifest.txt");
    return 0;
}

int run_eval(const EvalArgs& a) {
    const LeNet model = load_checkpoint(a.model);
    const auto split = a.split == "train" ? SplitFiles::train : SplitFiles::test;
    const auto [img, lab] = find_split_files(a.data, split);
    const IdxDataset ds = load_idx(img, lab);

    const EvalResult res = evaluate(model, ds, a.jobs);
    {
        std::ofstream cf(a.cm, std::ios::trunc);
        if (!cf) throw IoError("cannot open confusion matrix file: " + a.cm);
        write_confusion_csv(res.cm, cf);
    }
    std::cout << "samples=" << ds.size() << "\n"
              << "accuracy=" << fmt6(res.accuracy) << "\n";

    KvManifest rm;
    rm.set("command", std::string("eval"));
    rm.set("tool_version", std::string(kToolVersion));
    rm.set("model", a.model);
    rm.set("data", a.data);
    rm.set("split", a.split);
    rm.set("cm", a.cm);
    rm.write(a.cm + ".manifest.txt");
    return 0;
}

GrayImage to_gray(const IdxDataset& ds, std::size_t i) {
    GrayImage img(ds.rows, ds.cols);
    const auto bytes = ds.image(i);
    for (std::size_t p = 0; p < bytes.size(); ++p) img.pixels[p] = bytes[p] / 255.0;
    return img;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0 || vb <= 0) return 0;
    return cov / std::sqrt(va * vb);
}

int run_inspect(const InspectArgs& a) {
    const auto split = a.split == "train" ? SplitFiles::train : SplitFiles::test;
    const auto [img, lab] = find_split_files(a.data, split);
    const IdxDataset ds = load_idx(img, lab);

    const auto means = class_mean_images(ds);
    if (!a.avg.empty()) {
        std::ofstream mf(a.avg, std::ios::binary | std::ios::trunc);
        if (!mf) throw IoError("cannot open montage file: " + a.avg);
        write_montage(means, mf);
    }

    if (!a.morph.empty()) {
        std::vector<MorphometricRecord> records(ds.size());
        const int nthreads = std::max(1, std::min<int>(a.jobs, static_cast<int>(ds.size())));
        std::atomic<std::size_t> cursor{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
        auto worker = [&](int w) {
            try {
                constexpr std::size_t kChunk = 64;
                for (;;) {
                    const std::size_t begin = cursor.fetch_add(kChunk);
                    if (begin >= ds.size()) break;
                    const std::size_t end = std::min(ds.size(), begin + kChunk);
                    for (std::size_t i = begin; i < end; ++i)
                        records[i] = measure(to_gray(ds, i));
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < nthreads; ++w) pool.emplace_back(worker, w);
        worker(0);
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);

        std::ofstream cf(a.morph, std::ios::trunc);
        if (!cf) throw IoError("cannot open morphometrics file: " + a.morph);
        write_morph_csv(records, ds.labels, cf);
    }

    std::cout << "samples=" << ds.size() << "\n"
              << "split=" << a.split << "\n";

    if (!a.exemplars.empty()) {
        const fs::path exdir = a.exemplars;
        const fs::path manifest =
            a.manifest.empty() ? exdir / "manifest.csv" : fs::path(a.manifest);
        const ExemplarSet exemplars = load_exemplar_set(exdir, manifest);
        double min_r = 1.0;
        for (int k = 0; k < 10; ++k) {
            const double r = pearson(means[static_cast<std::size_t>(k)].pixels,
                                     exemplars.classes[static_cast<std::size_t>(k)].image.pixels);
            min_r = std::min(min_r, r);
            std::cout << "class_mean_correlation[" << k << "]=" << fmt6(r) << "\n";
        }
        std::cout << "class_mean_correlation_min=" << fmt6(min_r) << "\n";
    }

    const std::string manifest_target = !a.morph.empty() ? a.morph : a.avg;
    if (!manifest_target.empty()) {
        KvManifest rm;
        rm.set("command", std::string("inspect"));
        rm.set("tool_version", std::string(kToolVersion));
        rm.set("data", a.data);
        rm.set("split", a.split);
        if (!a.avg.empty()) rm.set("avg", a.avg);
        if (!a.morph.empty()) rm.set("morph", a.morph);
        rm.write(manifest_target + ".manifest.txt");
    }
    return 0;
}

std::string check_multiple_of_10(const std::string& s) {
    try {
        const long long v = std::stoll(s);
        if (v <= 0 || v % 10 != 0) return "must be a positive multiple of 10";
    } catch (...) {
        return "must be an integer";
    }
    return {};
}

std::string check_corruption(const std::string& s) {
    try {
        parse_corruption(s);
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic handwritten-numeral dataset toolchain"};
    app.set_version_flag("--version", std::string("afromnist ") + kToolVersion);
    app.require_subcommand(1);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "synthesize an IDX dataset from exemplars");
    gen->add_option("--exemplars", ga.exemplars, "exemplar image directory")->required();
    gen->add_option("--manifest", ga.manifest, "label manifest CSV (default: <exemplars>/manifest.csv)");
    gen->add_option("--out", ga.out, "output directory")->required();
    gen->add_option("--name", ga.name, "dataset file prefix");
    gen->add_option("--train", ga.train, "training images")->check(check_multiple_of_10);
    gen->add_option("--test", ga.test, "test images")->check(check_multiple_of_10);
    gen->add_option("--alpha", ga.alpha, "displacement scale, pixels")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--gamma", ga.gamma, "field smoothing std range LO HI")->expected(2);
    gen->add_option("--corrupt", ga.corrupt, "corruption KIND:SEVERITY (repeatable)")
        ->check(check_corruption);
    gen->add_option("--seed", ga.seed, "master seed");
    gen->add_flag("--no-shuffle", ga.no_shuffle, "keep class-major order");
    gen->add_option("--jobs", ga.jobs, "worker threads")
        ->envname("AFROMNIST_JOBS")
        ->check(CLI::PositiveNumber);
    gen->final_callback([&ga] {
        if (!(ga.gamma[0] > 0) || !(ga.gamma[1] >= ga.gamma[0]))
            throw CLI::ValidationError("--gamma expects 0 < LO <= HI");
    });

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train the classifier on an IDX dataset");
    tr->add_option("--data", ta.data, "dataset directory")->required();
    tr->add_option("--out", ta.out, "checkpoint output path")->required();
    tr->add_option("--lr", ta.lr, "learning rate")->check(CLI::PositiveNumber);
    tr->add_option("--batch", ta.batch, "batch size")->check(CLI::PositiveNumber);
    tr->add_option("--epochs", ta.epochs, "maximum epochs")->check(CLI::PositiveNumber);
    tr->add_option("--seed", ta.seed, "training seed");
    tr->add_option("--jobs", ta.jobs, "worker threads")
        ->envname("AFROMNIST_JOBS")
        ->check(CLI::PositiveNumber);

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on an IDX dataset");
    ev->add_option("--model", ea.model, "checkpoint path")->required();
    ev->add_option("--data", ea.data, "dataset directory")->required();
    ev->add_option("--cm", ea.cm, "confusion matrix CSV output")->required();
    ev->add_option("--split", ea.split, "which split to evaluate")
        ->check(CLI::IsMember({"train", "test"}));
    ev->add_option("--jobs", ea.jobs, "worker threads")
        ->envname("AFROMNIST_JOBS")
        ->check(CLI::PositiveNumber);

    InspectArgs ia;
    auto* in = app.add_subcommand("inspect", "class means and morphometrics of an IDX dataset");
    in->add_option("--data", ia.data, "dataset directory")->required();
    in->add_option("--avg", ia.avg, "class-mean montage PGM output");
    in->add_option("--morph", ia.morph, "morphometrics CSV output");
    in->add_option("--split", ia.split, "which split to inspect")
        ->check(CLI::IsMember({"train", "test"}));
    in->add_option("--exemplars", ia.exemplars,
                   "exemplar directory; enables class-mean correlation report");
    in->add_option("--manifest", ia.manifest, "label manifest CSV");
    in->add_option("--jobs", ia.jobs, "worker threads")
        ->envname("AFROMNIST_JOBS")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return run_generate(ga);
        if (tr->parsed()) return run_train(ta);
        if (ev->parsed()) return run_eval(ea);
        if (in->parsed()) return run_inspect(ia);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
