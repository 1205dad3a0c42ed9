// Command-line front end: generate -> precompute -> vectorize-fit -> train -> evaluate,
// plus the stability suite. Exit codes: 0 ok, 1 partial failure, 2 invalid invocation.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "npd/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace npd;

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kInvalid = 2;

struct Common {
    std::string data_root;
    std::string dataset;
    bool verbose = false;

    fs::path dir() const {
        fs::path p(dataset);
        if (p.is_relative() && !data_root.empty()) p = fs::path(data_root) / p;
        return p;
    }
};

struct ProtocolFlags {
    int n_splits = 5;
    double train_fraction = 0.8;
    std::vector<double> rates{0.2, 0.5, 0.8};
    std::uint64_t seed = 0;

    metrics::EvalProtocol protocol() const { return {n_splits, train_fraction, rates, seed}; }
};

void add_dataset(CLI::App* sub, Common& c) {
    sub->add_option("-d,--dataset", c.dataset, "Dataset directory (relative paths resolve under the data root)")
        ->required();
}

void add_protocol(CLI::App* sub, ProtocolFlags& p) {
    sub->add_option("--n-splits", p.n_splits, "Number of train/test splits")->capture_default_str();
    sub->add_option("--train-fraction", p.train_fraction, "Train share of each split")->capture_default_str();
    sub->add_option("--rates", p.rates, "Time-point subsampling rates")->capture_default_str();
    sub->add_option("--seed", p.seed, "Master seed for splits, subsampling and training")->capture_default_str();
}

int report(const std::string& stage, const pipeline::Status& st) {
    std::cout << stage << ": " << st.done << " done, " << st.skipped << " skipped, " << st.failures.size()
              << " failed\n";
    for (const auto& f : st.failures) std::cerr << "  " << f << '\n';
    return st.ok() ? kOk : kPartial;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter regression for particle-swarm simulations from persistent homology sequences"};
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags take precedence");
    app.require_subcommand(1);

    Common common;
    app.add_option("--data-root", common.data_root, "Base directory for relative dataset paths")
        ->envname("NPD_DATA_ROOT");
    app.add_flag("-v,--verbose", common.verbose, "Log per-epoch training progress");

    // generate
    store::GenerateConfig gen;
    int window_start = -1, window_length = 1000;
    auto* generate = app.add_subcommand("generate", "Simulate sequences and write the dataset store");
    add_dataset(generate, common);
    generate->add_option("-m,--model", gen.model, "dorsogna-1k, dorsogna, vicsek or volex")->capture_default_str();
    generate->add_option("-n,--sequences", gen.sequences, "Number of sequences")->capture_default_str();
    generate->add_option("-M,--points", gen.points, "Points per cloud")->capture_default_str();
    generate->add_option("--steps", gen.steps, "Simulation steps")->capture_default_str();
    generate->add_option("--dt", gen.dt, "Step size")->capture_default_str();
    generate->add_option("--stride", gen.stride, "Steps between observations")->capture_default_str();
    generate->add_option("--window-start", window_start, "First step of an observation window (off when < 0)");
    generate->add_option("--window-length", window_length, "Window length in steps")->capture_default_str();
    generate->add_option("--beta", gen.beta, "D'Orsogna friction coefficient")->capture_default_str();
    generate->add_option("--seed", gen.seed, "Master seed")->capture_default_str();

    // precompute
    pipeline::PrecomputeOptions pre;
    pre.max_dim = 2;
    auto* precompute = app.add_subcommand("precompute", "Compute persistence diagrams for every observation");
    add_dataset(precompute, common);
    precompute->add_option("--max-dim", pre.max_dim, "Highest homology dimension")->capture_default_str();
    precompute->add_option("--point-cap", pre.point_cap, "Largest cloud allowed with max-dim 2")
        ->capture_default_str();

    // vectorize-fit
    pipeline::VectorizeOptions vf;
    ProtocolFlags vf_protocol;
    auto* vectorize = app.add_subcommand("vectorize-fit", "Fit one vectorizer per split on its train sequences");
    add_dataset(vectorize, common);
    add_protocol(vectorize, vf_protocol);
    vectorize->add_option("--splits", vf.splits, "Splits to fit (default: all)");
    vectorize->add_option("--max-dim", vf.max_dim, "Highest homology dimension used")->capture_default_str();
    vectorize->add_option("--elements", vf.fit.kmeans.k, "Structure elements per dimension")->capture_default_str();
    vectorize->add_option("--sample-size", vf.fit.sample_size, "Points sampled per dimension for k-means")
        ->capture_default_str();

    // train
    pipeline::TrainOptions tr;
    ProtocolFlags tr_protocol;
    auto* train = app.add_subcommand("train", "Train the latent model, one run per (split, rate)");
    add_dataset(train, common);
    add_protocol(train, tr_protocol);
    train->add_option("--variant", tr.variant, "v1 (latent dynamics) or baseline (no dynamics)")
        ->check(CLI::IsMember({"v1", "baseline"}))
        ->capture_default_str();
    train->add_option("--splits", tr.splits, "Splits to run (default: all)");
    train->add_option("--run-rates", tr.rates, "Subset of rates to run (default: all protocol rates)");
    train->add_option("--max-dim", tr.max_dim, "Highest homology dimension used")->capture_default_str();
    train->add_option("--epochs", tr.train.epochs, "Training epochs")->capture_default_str();
    train->add_option("--batch-size", tr.train.batch_size, "Sequences per batch")->capture_default_str();
    train->add_option("--lr", tr.train.lr, "Initial learning rate (cosine annealed)")->capture_default_str();
    train->add_option("--weight-decay", tr.train.weight_decay, "Decoupled weight decay")->capture_default_str();
    train->add_option("--lambda-reg", tr.model.lambda_reg, "Weight of the regression loss")->capture_default_str();
    train->add_option("--latent", tr.model.latent, "Latent dimension")->capture_default_str();
    train->add_option("--euler-steps", tr.model.euler_steps, "Euler steps on [0, 1]")->capture_default_str();
    train->add_option("--ref-points", tr.model.ref_points, "Attention reference times")->capture_default_str();
    train->add_option("--reg-times", tr.model.reg_times, "Latent states fed to the regression head")
        ->capture_default_str();

    // evaluate
    pipeline::EvaluateOptions ev;
    ProtocolFlags ev_protocol;
    auto* evaluate = app.add_subcommand("evaluate", "Score trained runs and/or the crocker baseline");
    add_dataset(evaluate, common);
    add_protocol(evaluate, ev_protocol);
    evaluate->add_option("--variants", ev.variants, "Trained variants to score (v1, baseline)");
    evaluate->add_flag("--crocker", ev.crocker, "Also score the crocker-stack ridge baseline (all time points)");
    evaluate->add_option("--splits", ev.splits, "Splits to score (default: all)");
    evaluate->add_option("--max-dim", ev.max_dim, "Homology dimensions for crocker stacks")->capture_default_str();
    evaluate->add_flag("--on-train", ev.on_train, "Score on the train part of each split");
    evaluate->add_flag("--allow-train-eval", ev.allow_train, "Permit --on-train");

    // stability-suite
    pipeline::StabilityOptions st;
    std::string stability_out;
    auto* stability = app.add_subcommand("stability-suite", "Check the diagram and vectorization stability bounds");
    stability->add_option("--pairs", st.pairs, "Cloud pairs for the diagram bound")->capture_default_str();
    stability->add_option("--max-points", st.max_points, "Largest cloud size")->capture_default_str();
    stability->add_option("--probe-trials", st.probe_trials, "Tiny-shift probes fixing K")->capture_default_str();
    stability->add_option("--heldout", st.heldout_pairs, "Held-out pairs checked against K")->capture_default_str();
    stability->add_option("--seed", st.seed, "Seed")->capture_default_str();
    stability->add_option("-o,--out", stability_out, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*generate) {
            if (window_start >= 0) gen.window = swarm::Window{window_start, window_length};
            const auto s = pipeline::generate(common.dir(), gen);
            if (!s.ok()) std::cerr << "manifest not written\n";
            return report("generate", s);
        }
        if (*precompute) return report("precompute", pipeline::precompute(common.dir(), pre));
        if (*vectorize) {
            vf.protocol = vf_protocol.protocol();
            for (const auto& m : pipeline::vectorize_fit(common.dir(), vf))
                std::cout << "vectorizer " << m.fingerprint() << " (" << m.output_size() << " features)\n";
            return kOk;
        }
        if (*train) {
            tr.protocol = tr_protocol.protocol();
            tr.train.seed = tr_protocol.seed;
            tr.verbose = common.verbose;
            const auto out = pipeline::train(common.dir(), tr);
            for (const auto& c : out.cells)
                std::cout << c.method << ' ' << store::run_name(c.split, c.rate) << " VE " << c.ve_mean << " SMAPE "
                          << c.smape_mean << '\n';
            return report("train", out.status);
        }
        if (*evaluate) {
            ev.protocol = ev_protocol.protocol();
            const auto r = pipeline::evaluate(common.dir(), ev);
            std::cout << r.table();
            return report("evaluate", r.status);
        }
        if (*stability) {
            const auto r = pipeline::stability_suite(st);
            const std::string text = r.json();
            if (!stability_out.empty()) store::atomic_write(stability_out, text);
            std::cout << text << '\n';
            bool held = true;
            for (auto v : r.heldout_violations) held = held && v == 0;
            return r.chain_violations == 0 && held ? kOk : kPartial;
        }
    } catch (const store::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return kPartial;
    }
    return kInvalid;
}
