#pragma once

// The stages behind the command-line tool, usable directly from tests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "npd/latent.hpp"
#include "npd/metrics.hpp"
#include "npd/store.hpp"
#include "npd/vectorize.hpp"

namespace npd::pipeline {

namespace fs = std::filesystem;

// Per-item outcome of a fan-out stage.
struct Status {
    std::size_t done = 0;
    std::size_t skipped = 0;
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

// Writes one blob per sequence, then the manifest. No manifest is written
// when any sequence fails.
Status generate(const fs::path& dir, const store::GenerateConfig& config);

struct PrecomputeOptions {
    int max_dim = 1;
    std::size_t point_cap = ph::kDefaultPointCapDim2;
};
// Skips sequences whose diagrams already cover max_dim. Failures are listed in
// diagrams/failures.json and do not stop the run.
Status precompute(const fs::path& dir, const PrecomputeOptions& options);

struct VectorizeOptions {
    metrics::EvalProtocol protocol;
    std::vector<int> splits;  // empty: all
    int max_dim = 1;
    vec::FitOptions fit;
};
// Fits one vectorizer per split on the diagrams of its train sequences and
// records the fingerprints in the manifest.
std::vector<vec::VectorizerModel> vectorize_fit(const fs::path& dir, const VectorizeOptions& options);
vec::VectorizerModel load_vectorizer(const fs::path& dir, int split);

// Vectorized diagram sequences, [sequence][time * d + j].
struct Features {
    std::size_t dim = 0;
    std::size_t n_obs = 0;
    std::vector<std::vector<double>> values;
};
Features vectorize_all(const fs::path& dir, const store::Manifest& manifest, const vec::VectorizerModel& model,
                       int max_dim);

// Model inputs for one (split, rate) cell: kept time points masked in,
// features and targets standardized with train statistics.
struct CellData {
    latent::Dataset data;
    std::vector<std::size_t> train, test;
    std::vector<double> feature_mean, feature_std, target_mean, target_std;
};
CellData make_cell(const Features& features, const store::Manifest& manifest, const metrics::EvalProtocol& protocol,
                   int split, double rate);
// Same, with standardization statistics taken from a checkpoint.
CellData make_cell(const Features& features, const store::Manifest& manifest, const metrics::EvalProtocol& protocol,
                   int split, double rate, const store::CheckpointMeta& meta);

struct TrainOptions {
    std::string variant = "v1";  // "v1" or "baseline"
    metrics::EvalProtocol protocol;
    std::vector<int> splits;     // empty: all
    std::vector<double> rates;   // empty: protocol rates
    int max_dim = 1;
    latent::LatentConfig model;  // input_dim and outputs are filled in
    latent::TrainConfig train;   // seed is mixed with split and rate per run
    bool verbose = false;
};
struct TrainOutcome {
    Status status;
    std::vector<metrics::CellScore> cells;  // test-split scores of the finished runs
};
TrainOutcome train(const fs::path& dir, const TrainOptions& options);

fs::path run_dir(const fs::path& dir, const std::string& variant, int split, double rate);

struct EvaluateOptions {
    std::vector<std::string> variants;  // trained variants to score
    bool crocker = false;
    metrics::EvalProtocol protocol;     // splits/rates searched for checkpoints
    std::vector<int> splits;            // empty: all
    int max_dim = 1;
    bool on_train = false;              // score on the train part instead of the test part
    bool allow_train = false;
};
struct Report {
    std::string dataset;
    std::vector<std::string> target_names;
    std::vector<metrics::CellScore> cells;
    std::vector<metrics::Aggregate> aggregates;
    Status status;

    std::string csv() const;
    std::string table() const;
};
// Writes reports/scores.csv and reports/summary.txt. Throws UsageError when a
// checkpoint was trained against a different vectorizer or when scoring on
// the train part without allow_train.
Report evaluate(const fs::path& dir, const EvaluateOptions& options);

// Crocker stacks for every sequence, cached under crocker/.
std::vector<crocker::CrockerStack> crocker_stacks(const fs::path& dir, const store::Manifest& manifest, int max_dim);
// Ridge on flattened stacks for one split with all time points observed.
metrics::CellScore crocker_cell(const std::vector<crocker::CrockerStack>& stacks, const store::Manifest& manifest,
                                const metrics::EvalProtocol& protocol, int split);

struct StabilityOptions {
    std::size_t pairs = 200;
    int max_points = 20;
    std::vector<int> dims{0, 1};
    std::size_t probe_trials = 10000;  // tiny-shift probes fixing K
    std::size_t heldout_pairs = 1000;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;
};
struct StabilityReport {
    std::size_t chain_checked = 0;
    std::size_t chain_violations = 0;
    double chain_worst_ratio = 0.0;  // max W1 / (2 binom(M-1, k) W1_points), unnormalized points
    std::vector<double> lipschitz_k;         // per dim
    std::vector<double> heldout_worst;       // per dim, max observed ratio
    std::vector<std::size_t> heldout_violations;
    std::string json() const;
};
StabilityReport stability_suite(const StabilityOptions& options);

}  // namespace npd::pipeline
