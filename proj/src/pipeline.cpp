#include "npd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "npd/crocker.hpp"

namespace npd::pipeline {

using nlohmann::json;
using store::UsageError;

namespace {

constexpr double kStdFloor = 1e-12;

std::vector<int> chosen_splits(const std::vector<int>& requested, int n_splits) {
    std::vector<int> out = requested;
    if (out.empty()) {
        out.resize(static_cast<std::size_t>(n_splits));
        std::iota(out.begin(), out.end(), 0);
    }
    for (int s : out)
        if (s < 0 || s >= n_splits)
            throw std::invalid_argument("split " + std::to_string(s) + " outside 0.." + std::to_string(n_splits - 1));
    return out;
}

std::uint64_t run_seed(std::uint64_t base, int split, double rate) {
    return store::sequence_seed(base ^ (static_cast<std::uint64_t>(split) << 32),
                                static_cast<std::size_t>(std::llround(rate * 1000.0)));
}

json cell_json(const metrics::CellScore& c) {
    return {{"method", c.method}, {"split", c.split},     {"rate", c.rate},
            {"ve", c.ve},         {"smape", c.smape},     {"ve_mean", c.ve_mean},
            {"smape_mean", c.smape_mean}};
}

metrics::Matrix destandardize(const metrics::Matrix& z, const std::vector<double>& mean, const std::vector<double>& sd) {
    metrics::Matrix out = z;
    for (auto& row : out)
        for (std::size_t p = 0; p < row.size(); ++p) row[p] = row[p] * sd[p] + mean[p];
    return out;
}

metrics::Matrix targets_of(const store::Manifest& m, const std::vector<std::size_t>& ids) {
    metrics::Matrix y;
    for (auto i : ids) y.push_back(m.sequences[i].targets);
    return y;
}

// Fills data from features using the given statistics.
void fill_cell(CellData& c, const Features& f, const store::Manifest& m, const metrics::EvalProtocol& protocol,
               int split, double rate) {
    const std::size_t n = m.sequences.size(), N = f.n_obs, d = f.dim;
    c.data = {};
    c.data.dim = d;
    for (std::size_t i = 0; i < N; ++i) c.data.times.push_back(static_cast<double>(i + 1) / static_cast<double>(N));
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> mask(N, 0.0), values(N * d, 0.0);
        for (auto t : metrics::kept_times(protocol, split, rate, s, N)) mask[t] = 1.0;
        for (std::size_t t = 0; t < N; ++t)
            if (mask[t] != 0.0)
                for (std::size_t j = 0; j < d; ++j)
                    values[t * d + j] = (f.values[s][t * d + j] - c.feature_mean[j]) / c.feature_std[j];
        std::vector<double> y = m.sequences[s].targets;
        for (std::size_t p = 0; p < y.size(); ++p) y[p] = (y[p] - c.target_mean[p]) / c.target_std[p];
        c.data.values.push_back(std::move(values));
        c.data.masks.push_back(std::move(mask));
        c.data.targets.push_back(std::move(y));
    }
}

void check_features(const Features& f, const store::Manifest& m) {
    if (f.values.size() != m.sequences.size()) throw std::invalid_argument("features do not match the manifest");
}

}  // namespace

Status generate(const fs::path& dir, const store::GenerateConfig& config) {
    const auto scheme = swarm::parse_scheme(config.model);
    if (config.sequences == 0 || config.points < 1 || config.steps < config.stride || config.stride < 1 ||
        !(config.dt > 0.0))
        throw std::invalid_argument("generate: need sequences >= 1, points >= 1, steps >= stride >= 1, dt > 0");
    fs::create_directories(dir / "sequences");
    fs::remove(store::manifest_path(dir));

    store::Manifest manifest;
    manifest.config = config;
    manifest.target_names = swarm::SimParams::target_names(scheme);
    manifest.sequences.resize(config.sequences);
    std::vector<std::string> errors(config.sequences);
    const auto n = static_cast<long>(config.sequences);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        auto& e = manifest.sequences[static_cast<std::size_t>(i)];
        try {
            e.id = static_cast<std::size_t>(i);
            e.seed = store::sequence_seed(config.seed, e.id);
            const auto seq = store::simulate_sequence(config, e.seed);
            const std::string bytes = store::encode_positions(seq.clouds);
            e.params = seq.params;
            e.targets = seq.targets;
            e.n_obs = seq.clouds.size();
            for (const auto& c : seq.clouds) e.counts.push_back(static_cast<std::uint32_t>(c.size()));
            e.file = "sequences/" + std::to_string(i) + ".f32";
            e.offset = 0;
            e.bytes = bytes.size();
            e.crc = store::crc32(bytes);
            store::atomic_write(dir / e.file, bytes);
        } catch (const std::exception& ex) {
            errors[static_cast<std::size_t>(i)] = "sequence " + std::to_string(i) + ": " + ex.what();
        }
    }
    Status st;
    for (const auto& e : errors)
        if (e.empty())
            ++st.done;
        else
            st.failures.push_back(e);
    if (st.ok()) store::save_manifest(dir, manifest);
    return st;
}

Status precompute(const fs::path& dir, const PrecomputeOptions& options) {
    if (options.max_dim < 0 || options.max_dim > 2) throw std::invalid_argument("max_dim must be 0, 1 or 2");
    const auto manifest = store::load_manifest(dir);
    fs::create_directories(dir / "diagrams");
    const std::size_t n = manifest.sequences.size();
    std::vector<std::string> errors(n);
    std::vector<char> skipped(n, 0);
    const ph::RipsOptions rips{options.max_dim, {}, options.point_cap};
#pragma omp parallel for schedule(dynamic)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const auto i = static_cast<std::size_t>(li);
        const auto path = store::diagram_path(dir, i);
        try {
            if (fs::exists(path)) {
                int stored = -1;
                try {
                    store::decode_diagrams(store::read_file(path), &stored);
                } catch (const std::exception&) {
                    stored = -1;  // unreadable: recompute
                }
                if (stored >= options.max_dim) {
                    skipped[i] = 1;
                    continue;
                }
            }
            const auto clouds = store::load_positions(dir, manifest.sequences[i]);
            const auto diagrams = ph::rips_persistence_batch_serial(clouds, rips);
            store::atomic_write(path, store::encode_diagrams(diagrams, options.max_dim));
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    }
    Status st;
    json failures = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            st.failures.push_back("sequence " + std::to_string(i) + ": " + errors[i]);
            failures.push_back({{"id", i}, {"error", errors[i]}});
        } else if (skipped[i]) {
            ++st.skipped;
        } else {
            ++st.done;
        }
    }
    store::atomic_write(dir / "diagrams" / "failures.json", failures.dump(1));
    return st;
}

std::vector<vec::VectorizerModel> vectorize_fit(const fs::path& dir, const VectorizeOptions& options) {
    auto manifest = store::load_manifest(dir);
    const auto splits = metrics::make_splits(manifest.sequences.size(), options.protocol);
    std::vector<vec::VectorizerModel> out;
    for (int k : chosen_splits(options.splits, options.protocol.n_splits)) {
        std::vector<std::vector<ph::PersistenceDiagram>> corpus(static_cast<std::size_t>(options.max_dim + 1));
        for (auto id : splits[static_cast<std::size_t>(k)].train)
            for (auto& obs : store::load_diagrams(dir, id, options.max_dim))
                for (int dim = 0; dim <= options.max_dim; ++dim) corpus[dim].push_back(std::move(obs[dim]));
        std::mt19937_64 rng(store::sequence_seed(options.protocol.seed, 1000000 + static_cast<std::size_t>(k)));
        auto model = vec::fit(corpus, rng, options.fit);
        store::atomic_write(store::vectorizer_path(dir, k), model.to_json());
        manifest.vectorizer_fingerprints[k] = model.fingerprint();
        out.push_back(std::move(model));
    }
    store::save_manifest(dir, manifest);
    return out;
}

vec::VectorizerModel load_vectorizer(const fs::path& dir, int split) {
    const auto path = store::vectorizer_path(dir, split);
    if (!fs::exists(path))
        throw UsageError("no vectorizer for split " + std::to_string(split) + "; run `vectorize-fit` first");
    return vec::VectorizerModel::from_json(store::read_file(path));
}

Features vectorize_all(const fs::path& dir, const store::Manifest& manifest, const vec::VectorizerModel& model,
                       int max_dim) {
    if (model.dims.size() != static_cast<std::size_t>(max_dim + 1))
        throw UsageError("vectorizer covers " + std::to_string(model.dims.size()) + " dims but max_dim is " +
                         std::to_string(max_dim) + "; refit with matching --max-dim");
    Features f;
    f.dim = model.output_size();
    const std::size_t n = manifest.sequences.size();
    f.values.resize(n);
    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const auto i = static_cast<std::size_t>(li);
        try {
            for (const auto& obs : store::load_diagrams(dir, i, max_dim)) {
                const auto v = vec::transform(obs, model);
                f.values[i].insert(f.values[i].end(), v.begin(), v.end());
            }
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw UsageError(e);
    f.n_obs = n ? f.values[0].size() / f.dim : 0;
    for (const auto& v : f.values)
        if (v.size() != f.n_obs * f.dim) throw std::runtime_error("sequences differ in observation count");
    return f;
}

CellData make_cell(const Features& f, const store::Manifest& m, const metrics::EvalProtocol& protocol, int split,
                   double rate) {
    check_features(f, m);
    const auto splits = metrics::make_splits(m.sequences.size(), protocol);
    CellData c;
    c.train = splits.at(static_cast<std::size_t>(split)).train;
    c.test = splits.at(static_cast<std::size_t>(split)).test;
    const std::size_t N = f.n_obs, d = f.dim, P = m.target_names.size();
    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    std::size_t count = 0;
    for (auto s : c.train)
        for (auto t : metrics::kept_times(protocol, split, rate, s, N)) {
            for (std::size_t j = 0; j < d; ++j) {
                const double x = f.values[s][t * d + j];
                sum[j] += x;
                sq[j] += x * x;
            }
            ++count;
        }
    c.feature_mean.resize(d);
    c.feature_std.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        const double mean = sum[j] / static_cast<double>(count);
        const double var = std::max(sq[j] / static_cast<double>(count) - mean * mean, 0.0);
        c.feature_mean[j] = mean;
        c.feature_std[j] = std::sqrt(var) > kStdFloor ? std::sqrt(var) : 1.0;
    }
    c.target_mean.assign(P, 0.0);
    c.target_std.assign(P, 0.0);
    for (auto s : c.train)
        for (std::size_t p = 0; p < P; ++p) c.target_mean[p] += m.sequences[s].targets[p];
    for (auto& x : c.target_mean) x /= static_cast<double>(c.train.size());
    for (auto s : c.train)
        for (std::size_t p = 0; p < P; ++p) {
            const double r = m.sequences[s].targets[p] - c.target_mean[p];
            c.target_std[p] += r * r;
        }
    for (auto& x : c.target_std) {
        x = std::sqrt(x / static_cast<double>(c.train.size()));
        if (x <= kStdFloor) x = 1.0;
    }
    fill_cell(c, f, m, protocol, split, rate);
    return c;
}

CellData make_cell(const Features& f, const store::Manifest& m, const metrics::EvalProtocol& protocol, int split,
                   double rate, const store::CheckpointMeta& meta) {
    check_features(f, m);
    if (meta.feature_mean.size() != f.dim)
        throw UsageError("checkpoint expects " + std::to_string(meta.feature_mean.size()) +
                         " features per observation, store provides " + std::to_string(f.dim));
    const auto splits = metrics::make_splits(m.sequences.size(), protocol);
    CellData c;
    c.train = splits.at(static_cast<std::size_t>(split)).train;
    c.test = splits.at(static_cast<std::size_t>(split)).test;
    c.feature_mean = meta.feature_mean;
    c.feature_std = meta.feature_std;
    c.target_mean = meta.target_mean;
    c.target_std = meta.target_std;
    fill_cell(c, f, m, protocol, split, rate);
    return c;
}

fs::path run_dir(const fs::path& dir, const std::string& variant, int split, double rate) {
    return dir / "runs" / variant / store::run_name(split, rate);
}

TrainOutcome train(const fs::path& dir, const TrainOptions& options) {
    if (options.variant != "v1" && options.variant != "baseline")
        throw std::invalid_argument("variant must be v1 or baseline, got '" + options.variant + "'");
    const auto manifest = store::load_manifest(dir);
    const auto splits = chosen_splits(options.splits, options.protocol.n_splits);
    const auto rates = options.rates.empty() ? options.protocol.rates : options.rates;
    for (double r : rates)
        if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("rates must lie in (0, 1]");

    std::vector<Features> features;
    std::vector<std::string> fingerprints;
    for (int k : splits) {
        const auto model = load_vectorizer(dir, k);
        const auto it = manifest.vectorizer_fingerprints.find(k);
        if (it == manifest.vectorizer_fingerprints.end() || it->second != model.fingerprint())
            throw UsageError("vectorizer for split " + std::to_string(k) +
                             " does not match the manifest record; rerun `vectorize-fit`");
        fingerprints.push_back(model.fingerprint());
        features.push_back(vectorize_all(dir, manifest, model, options.max_dim));
    }

    struct Job {
        std::size_t split_pos;
        double rate;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < splits.size(); ++i)
        for (double r : rates) jobs.push_back({i, r});
    std::vector<std::optional<metrics::CellScore>> scores(jobs.size());
    std::vector<std::string> errors(jobs.size());

#pragma omp parallel for schedule(dynamic)
    for (long li = 0; li < static_cast<long>(jobs.size()); ++li) {
        const auto& job = jobs[static_cast<std::size_t>(li)];
        const int split = splits[job.split_pos];
        try {
            const auto cell = make_cell(features[job.split_pos], manifest, options.protocol, split, job.rate);
            latent::LatentConfig cfg = options.model;
            cfg.input_dim = features[job.split_pos].dim;
            cfg.outputs = manifest.target_names.size();
            cfg.baseline = options.variant == "baseline";
            const std::uint64_t seed = run_seed(options.train.seed, split, job.rate);
            std::mt19937_64 rng(seed);
            latent::LatentModel model(cfg, rng);
            latent::TrainConfig tc = options.train;
            tc.seed = seed + 1;
            latent::EpochCallback log;
            if (options.verbose)
                log = [&](const latent::EpochStats& s) {
#pragma omp critical(npd_log)
                    std::cerr << options.variant << ' ' << store::run_name(split, job.rate) << " epoch " << s.epoch
                              << " lr " << s.lr << " elbo " << s.elbo << " reg_mse " << s.reg_mse << '\n';
                    return true;
                };
            auto result = latent::train(model, cell.data, cell.train, tc, log);

            store::CheckpointMeta meta{options.variant,      split,           job.rate,
                                       options.max_dim,      options.protocol.seed,
                                       fingerprints[job.split_pos], model.config(), tc,
                                       cell.feature_mean,    cell.feature_std, cell.target_mean,
                                       cell.target_std};
            const auto out = run_dir(dir, options.variant, split, job.rate);
            store::save_checkpoint(out / "checkpoint.bin", meta, model, result.optimizer);
            store::atomic_write(out / "history.csv", store::history_csv(result.history));
            const auto pred = destandardize(latent::predict(model, cell.data, cell.test), cell.target_mean,
                                            cell.target_std);
            auto score = metrics::score_cell(options.variant, split, job.rate, targets_of(manifest, cell.test), pred);
            store::atomic_write(out / "scores.json", cell_json(score).dump(1));
            scores[static_cast<std::size_t>(li)] = std::move(score);
        } catch (const std::exception& ex) {
            errors[static_cast<std::size_t>(li)] = store::run_name(split, job.rate) + ": " + ex.what();
        }
    }
    TrainOutcome out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (scores[i]) {
            ++out.status.done;
            out.cells.push_back(*scores[i]);
        } else {
            out.status.failures.push_back(errors[i]);
        }
    }
    return out;
}

std::vector<crocker::CrockerStack> crocker_stacks(const fs::path& dir, const store::Manifest& manifest, int max_dim) {
    const std::size_t n = manifest.sequences.size();
    std::vector<crocker::CrockerStack> stacks(n);
    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const auto i = static_cast<std::size_t>(li);
        try {
            const auto path = store::stack_path(dir, i);
            if (fs::exists(path)) {
                auto s = store::decode_stack(store::read_file(path));
                if (s.dims() == static_cast<std::size_t>(max_dim + 1)) {
                    stacks[i] = std::move(s);
                    continue;
                }
            }
            stacks[i] = crocker::build_stack(store::load_diagrams(dir, i, max_dim));
            store::atomic_write(path, store::encode_stack(stacks[i]));
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw UsageError(e);
    return stacks;
}

metrics::CellScore crocker_cell(const std::vector<crocker::CrockerStack>& stacks, const store::Manifest& manifest,
                                const metrics::EvalProtocol& protocol, int split) {
    const auto splits = metrics::make_splits(manifest.sequences.size(), protocol);
    const auto& s = splits.at(static_cast<std::size_t>(split));
    ridge::Rows xtr, xte;
    for (auto i : s.train) xtr.push_back(stacks[i].flatten());
    for (auto i : s.test) xte.push_back(stacks[i].flatten());
    ridge::Options opt;
    opt.seed = protocol.seed;
    const auto r = ridge::fit_predict(xtr, targets_of(manifest, s.train), xte, opt);
    return metrics::score_cell("crocker", split, 1.0, targets_of(manifest, s.test), r.predictions);
}

Report evaluate(const fs::path& dir, const EvaluateOptions& options) {
    if (options.on_train && !options.allow_train)
        throw UsageError("refusing to score checkpoints on their own train split; pass --allow-train-eval to override");
    const auto manifest = store::load_manifest(dir);
    const auto splits = chosen_splits(options.splits, options.protocol.n_splits);
    Report report;
    report.dataset = manifest.config.model;
    report.target_names = manifest.target_names;

    std::map<int, Features> features;
    for (const auto& variant : options.variants) {
        std::size_t found = 0;
        for (int split : splits)
            for (double rate : options.protocol.rates) {
                const auto path = run_dir(dir, variant, split, rate) / "checkpoint.bin";
                if (!fs::exists(path)) {
                    ++report.status.skipped;
                    continue;
                }
                ++found;
                try {
                    const auto ck = store::load_checkpoint(path);
                    const auto rec = manifest.vectorizer_fingerprints.find(split);
                    const std::string current = load_vectorizer(dir, split).fingerprint();
                    if (rec == manifest.vectorizer_fingerprints.end() || rec->second != current ||
                        ck.meta.vectorizer_fingerprint != current)
                        throw UsageError(path.string() + " was trained with vectorizer " +
                                         ck.meta.vectorizer_fingerprint + " but split " + std::to_string(split) +
                                         " now uses " + current + "; retrain before evaluating");
                    if (!features.count(split))
                        features[split] = vectorize_all(dir, manifest, load_vectorizer(dir, split), ck.meta.max_dim);
                    metrics::EvalProtocol protocol = options.protocol;
                    protocol.seed = ck.meta.protocol_seed;
                    const auto cell = make_cell(features[split], manifest, protocol, split, rate, ck.meta);
                    const auto& ids = options.on_train ? cell.train : cell.test;
                    const auto pred = destandardize(latent::predict(ck.model, cell.data, ids), cell.target_mean,
                                                    cell.target_std);
                    report.cells.push_back(
                        metrics::score_cell(variant, split, rate, targets_of(manifest, ids), pred));
                    ++report.status.done;
                } catch (const UsageError&) {
                    throw;
                } catch (const std::exception& ex) {
                    report.status.failures.push_back(path.string() + ": " + ex.what());
                }
            }
        if (found == 0) throw UsageError("no checkpoints for variant '" + variant + "'; run `train` first");
    }
    if (options.crocker) {
        const auto stacks = crocker_stacks(dir, manifest, options.max_dim);
        for (int split : splits) {
            report.cells.push_back(crocker_cell(stacks, manifest, options.protocol, split));
            ++report.status.done;
        }
    }
    if (report.cells.empty()) throw UsageError("nothing to evaluate: pass --variant and/or --crocker");
    report.aggregates = metrics::aggregate(report.cells);
    store::atomic_write(dir / "reports" / "scores.csv", report.csv());
    store::atomic_write(dir / "reports" / "summary.txt", report.table());
    return report;
}

std::string Report::csv() const {
    std::ostringstream o;
    o << std::setprecision(10) << "method,split,rate,ve,smape";
    for (const auto& n : target_names) o << ",ve_" << n;
    for (const auto& n : target_names) o << ",smape_" << n;
    o << '\n';
    for (const auto& c : cells) {
        o << c.method << ',' << c.split << ',' << c.rate << ',' << c.ve_mean << ',' << c.smape_mean;
        for (double v : c.ve) o << ',' << v;
        for (double v : c.smape) o << ',' << v;
        o << '\n';
    }
    return o.str();
}

std::string Report::table() const {
    std::ostringstream o;
    o << "dataset: " << dataset << "\n\n";
    o << std::left << std::setw(12) << "method" << std::setw(8) << "cells" << std::setw(16) << "VE" << "SMAPE\n";
    for (const auto& a : aggregates) {
        // VE is clamped at 0 for display only; scores.csv keeps the raw value.
        o << std::setw(12) << a.method << std::setw(8) << a.cells << std::setw(16)
          << metrics::format_mean_std(std::max(a.ve_mean, 0.0), a.ve_std)
          << metrics::format_mean_std(a.smape_mean, a.smape_std) << '\n';
    }
    for (const auto& a : aggregates)
        if (a.method == "crocker") {
            o << "\ncrocker: ridge regression on flattened crocker stacks, regularization by 5-fold CV;"
                 " all time points observed.\n";
            break;
        }
    return o.str();
}

namespace {

Cloud random_cloud(std::mt19937_64& rng, int m) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Cloud c(static_cast<std::size_t>(m));
    for (auto& p : c)
        for (auto& x : p) x = u(rng);
    return c;
}

// Either a perturbed copy or an independent cloud, at scales spanning three decades.
std::pair<Cloud, Cloud> random_pair(std::mt19937_64& rng, int max_points) {
    std::uniform_int_distribution<int> size(2, max_points);
    const int m = size(rng);
    Cloud p = random_cloud(rng, m);
    if (std::bernoulli_distribution(0.25)(rng)) return {p, random_cloud(rng, m)};
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, -0.5)(rng));
    std::normal_distribution<double> g(0.0, scale);
    Cloud q = p;
    for (auto& pt : q)
        for (auto& x : pt) x += g(rng);
    return {p, q};
}

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

StabilityReport stability_suite(const StabilityOptions& options) {
    StabilityReport rep;
    const int max_dim = *std::max_element(options.dims.begin(), options.dims.end());
    const ph::RipsOptions rips{max_dim, {}, ph::kDefaultPointCapDim2};

    std::mt19937_64 chain_rng(store::sequence_seed(options.seed, 1));
    for (std::size_t i = 0; i < options.pairs; ++i) {
        const auto [p, q] = random_pair(chain_rng, options.max_points);
        const auto f = ph::rips_persistence(p, rips), g = ph::rips_persistence(q, rips);
        const double points = ph::pointset_wasserstein1(p, q, false);
        const int m = static_cast<int>(p.size());
        for (int k : options.dims) {
            const double w = ph::wasserstein1(f[k], g[k]);
            const double bound = 2.0 * binom(m - 1, k) * points;
            ++rep.chain_checked;
            if (w > bound + options.tolerance) ++rep.chain_violations;
            if (bound > 0.0) rep.chain_worst_ratio = std::max(rep.chain_worst_ratio, w / bound);
        }
    }

    // Vectorizer fitted on a training corpus of random clouds; K is the largest
    // ratio seen when moving one diagram point by a tiny step.
    std::mt19937_64 rng(store::sequence_seed(options.seed, 2));
    std::vector<std::vector<ph::PersistenceDiagram>> corpus(static_cast<std::size_t>(max_dim + 1));
    for (int i = 0; i < 300; ++i) {
        const auto d = ph::rips_persistence(random_pair(rng, options.max_points).first, rips);
        for (int k = 0; k <= max_dim; ++k) corpus[k].push_back(d[k]);
    }
    const auto model = vec::fit(corpus, rng);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int k : options.dims) {
        const auto& elements = model.dims[k];
        const auto& diagrams = corpus[k];
        double kmax = 0.0;
        std::size_t trials = 0;
        if (std::all_of(diagrams.begin(), diagrams.end(), [](const auto& d) { return d.pairs.empty(); }))
            trials = options.probe_trials;
        std::uniform_int_distribution<std::size_t> pick_d(0, diagrams.size() - 1);
        while (trials < options.probe_trials) {
            const auto& f = diagrams[pick_d(rng)];
            if (f.pairs.empty()) continue;
            auto shifted = f;
            auto& pt = shifted.pairs[std::uniform_int_distribution<std::size_t>(0, f.pairs.size() - 1)(rng)];
            const double eps = 1e-6 * std::max(1.0, elements.cap);
            pt.birth += eps * g(rng);
            if (!pt.infinite()) pt.death = std::max(pt.birth, pt.death + eps * g(rng));
            if (ph::wasserstein1(f, shifted) <= 0.0) continue;
            kmax = std::max(kmax, vec::lipschitz_ratio(elements, f, shifted));
            ++trials;
        }
        rep.lipschitz_k.push_back(kmax);
    }

    std::mt19937_64 held_rng(store::sequence_seed(options.seed, 3));
    rep.heldout_worst.assign(options.dims.size(), 0.0);
    rep.heldout_violations.assign(options.dims.size(), 0);
    std::size_t seen = 0;
    while (seen < options.heldout_pairs) {
        const auto [p, q] = random_pair(held_rng, options.max_points);
        const auto f = ph::rips_persistence(p, rips), gd = ph::rips_persistence(q, rips);
        bool counted = false;
        for (std::size_t j = 0; j < options.dims.size(); ++j) {
            const int k = options.dims[j];
            if (ph::wasserstein1(f[k], gd[k]) <= 0.0) continue;
            const double r = vec::lipschitz_ratio(model.dims[k], f[k], gd[k]);
            rep.heldout_worst[j] = std::max(rep.heldout_worst[j], r);
            if (r > rep.lipschitz_k[j]) ++rep.heldout_violations[j];
            counted = true;
        }
        if (counted) ++seen;
    }
    return rep;
}

std::string StabilityReport::json() const {
    nlohmann::json j{{"chain_checked", chain_checked},
                     {"chain_violations", chain_violations},
                     {"chain_worst_ratio", chain_worst_ratio},
                     {"lipschitz_k", lipschitz_k},
                     {"heldout_worst", heldout_worst},
                     {"heldout_violations", heldout_violations}};
    return j.dump(1);
}

}  // namespace npd::pipeline
