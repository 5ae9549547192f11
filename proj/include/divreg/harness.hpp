#ifndef DIVREG_HARNESS_HPP
#define DIVREG_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "divreg/data.hpp"
#include "divreg/diversity.hpp"
#include "divreg/network.hpp"

namespace divreg {

struct DatasetConfig {
    std::string source; // two_moons | blobs | idx | csv
    // two_moons
    std::size_t n = 2000;
    double noise = 0.2;
    // blobs
    std::size_t n_per_class = 200;
    int num_classes = 3;
    std::size_t blob_dim = 2;
    double spread = 1.0;
    // idx / csv
    std::string images;
    std::string labels;
    std::string path;
    std::size_t label_column = 0;

    double label_noise = 0.0; // applied to the train split only
    SplitFractions fractions;
    std::uint64_t data_seed = 7;
};

struct ModelConfig {
    std::vector<std::size_t> hidden = {32, 32};
    Activation activation = Activation::ReLU;
};

struct OptimizerConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    std::vector<ScheduleEntry> schedule;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelConfig model;
    OptimizerConfig optimizer;
    std::vector<RegularizerSpec> regularizers;
    std::vector<std::uint64_t> seeds = {1};
    std::string output = "results.csv";
};

struct EpochPoint {
    std::size_t epoch = 0;
    double train_err = 0.0;
    double val_err = 0.0;
    double mean_aug = 0.0;
};

/// One row of the results CSV. train/val/test errors are those of the
/// best-validation checkpoint (the final model when there is no val split).
struct RunResult {
    RegVariant variant = RegVariant::None;
    std::uint64_t seed = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double gamma = 0.0;
    double train_err = 0.0;
    double val_err = 0.0;
    double test_err = 0.0;
    double gap = 0.0; // train_err - test_err
    std::size_t epochs = 0;
    double wall_s = 0.0;
    std::size_t best_epoch = 0;
    std::vector<EpochPoint> curve; // not serialized to CSV
};

/// Parse and validate a JSON experiment config; unset keys get defaults
/// (lambda1 = lambda2 = 0.001, gamma = 10, epsilon = 1e-6). Throws
/// SchemaError naming the offending key, UnknownVariant for a bad
/// regularizer variant name.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Train/val/test data as the runner sees it. Label noise applies to the
/// training labels only; train_eval keeps the train split's original
/// labels, so reported train errors (and the generalization gap) measure
/// overfitting rather than noise-fitting. Without label noise the two
/// train views are identical.
struct PreparedData {
    Split parts;
    Dataset train_eval;
};

PreparedData prepare_dataset(const DatasetConfig& cfg);

/// Train one (regularizer, seed) run over the full schedule and evaluate
/// the best-validation checkpoint. When checkpoint_out is non-null it
/// receives the model the reported errors were measured on.
RunResult run_single(const PreparedData& data, const ExperimentConfig& cfg,
                     const RegularizerSpec& reg, std::uint64_t seed,
                     std::optional<Mlp>* checkpoint_out = nullptr);

/// Every (regularizer, seed) combination of the config, in order. Rows are
/// appended to the resolved output path and flushed as runs finish.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg);

/// Grid over the diversity hyperparameters; empty axes fall back to each
/// regularizer's configured value.
struct SweepGrid {
    std::vector<double> lambda1s;
    std::vector<double> lambda2s;
    std::vector<double> gammas;
};

/// Cross product of grid x regularizers x seeds ("none" runs once per seed
/// since the grid does not apply). Completed rows found in the output file
/// are skipped; on success the file is rewritten in canonical order.
std::vector<RunResult> sweep(const ExperimentConfig& cfg, const SweepGrid& grid,
                             unsigned jobs = 1);

std::string results_csv_header();
std::string to_csv_row(const RunResult& r);
std::vector<RunResult> parse_results_csv(const std::string& path);

/// Feature-layer similarity matrix of `model` over a fixed evaluation
/// batch (the first rows of `ds`), written as CSV with det/logdet in a
/// leading '#' comment line.
void dump_similarity(const Mlp& model, const Dataset& ds, double gamma, const std::string& path);

/// Output paths resolve under $DIVREG_OUT_DIR when set and the path is
/// relative.
std::string resolve_output_path(const std::string& path);

/// Shortest round-trip decimal form of a double (std::to_chars).
std::string fmt_double(double v);

/// Median wall-clock seconds of `regularizer_loss` on a seeded batch of
/// shape m x c (used by the complexity-scaling checks).
double time_regularizer_loss(RegVariant variant, std::size_t c, std::size_t m, int reps = 3);

} // namespace divreg

#endif // DIVREG_HARNESS_HPP
