#pragma once

// Latent ODE model over vectorized diagram sequences: a multi-time attention
// encoder gives a Gaussian over the initial latent state, an Euler-integrated
// vector field evolves it, a decoder reconstructs the observations and an
// attention head regresses the simulation parameters from the latent path.
// The baseline variant applies the regression head to the observations
// directly, with no latent dynamics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "npd/metrics.hpp"
#include "npd/optim.hpp"
#include "npd/tensor.hpp"

namespace npd::latent {

using ad::Tensor;

struct LatentConfig {
    std::size_t input_dim = 40;  // d
    std::size_t outputs = 2;     // P
    std::size_t latent = 20;     // z
    std::size_t ref_points = 16;
    std::size_t time_embed = 32;
    std::size_t attn_width = 32;
    std::size_t enc_hidden = 64;
    std::size_t ode_hidden = 64;
    std::size_t dec_hidden = 64;
    std::size_t reg_hidden = 64;
    std::size_t reg_times = 32;  // E
    int euler_steps = 50;        // S
    double lambda_reg = 1.0;
    bool baseline = false;
    // Regression-head width for the baseline; 0 picks the width whose total
    // parameter count is closest to the dynamic model's.
    std::size_t baseline_hidden = 0;
};

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
    Tensor operator()(const Tensor& x) const;  // x [rows, in]
};

// Multi-time attention: fixed reference times query learned sinusoidal
// embeddings of the observation times; masked observations get weight 0.
struct TimeAttention {
    Tensor embed_w;  // [1, time_embed]; column 0 is the linear term
    Tensor embed_b;  // [time_embed]
    Tensor wq, wk;   // [time_embed, attn_width]
    std::size_t refs = 16;

    Tensor embed(const std::vector<double>& times) const;  // [N, time_embed]
    // Softmax weights [B, refs, N].
    Tensor weights(const std::vector<double>& times, const std::vector<double>* mask, std::size_t batch) const;
    // values [B, N, c] -> [B, refs, c]. mask is B*N (1 = observed) or null.
    Tensor operator()(const std::vector<double>& times, const Tensor& values, const std::vector<double>* mask) const;
    std::vector<double> reference_times() const;
};

// All sequences in a batch share one time grid; a mask marks which grid
// points each sequence observed.
struct Batch {
    std::vector<double> times;  // N, ascending, in [0, 1]
    std::size_t size = 0, steps = 0, dim = 0, outputs = 0;
    std::vector<double> values;   // B*N*d
    std::vector<double> mask;     // B*N
    std::vector<double> targets;  // B*P
};

struct Dataset {
    std::vector<double> times;
    std::size_t dim = 0;
    std::vector<std::vector<double>> values;   // per sequence, N*d
    std::vector<std::vector<double>> masks;    // per sequence, N
    std::vector<std::vector<double>> targets;  // per sequence, P

    std::size_t size() const { return values.size(); }
};

// Throws when a selected sequence has no observed time point.
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& ids);

// Explicit Euler on the merged grid {k/steps} and the query times; returns the
// state at each query time, in query order.
std::vector<Tensor> euler_integrate(const Tensor& z0, const std::function<Tensor(const Tensor&)>& field,
                                    const std::vector<double>& query_times, int steps);

// Euler steps taken by euler_integrate since process start.
std::uint64_t ode_step_count();

// mu + exp(logvar / 2) * noise, noise of the same shape as mu.
Tensor reparametrize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);
// KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over all entries.
Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar);

struct Losses {
    Tensor total;
    Tensor recon;  // 1/2 masked squared error, averaged over the batch
    Tensor kl;     // averaged over the batch
    Tensor reg;    // mean squared error over batch and outputs
    double elbo() const;  // recon + kl, the negative evidence lower bound
};

class LatentModel {
public:
    LatentModel(const LatentConfig& config, std::mt19937_64& rng);

    const LatentConfig& config() const { return config_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    // Parameters of the regression head only.
    std::vector<Tensor> head_parameters() const;

    struct Posterior {
        Tensor mu, logvar;  // [B, z]
    };
    Posterior encode(const Batch& batch) const;
    Tensor field(const Tensor& z) const;
    Tensor decode(const Tensor& z) const;            // [rows, z] -> [rows, d]
    Tensor regress_path(const Tensor& path) const;  // [B, E, z] -> [B, P]
    Tensor regress_observations(const Batch& batch) const;  // baseline: [B, P]

    // noise: B*z standard normal draws for the reparametrization; null uses
    // the posterior mean.
    Losses loss(const Batch& batch, const std::vector<double>* noise) const;
    Losses loss(const Batch& batch, std::mt19937_64& rng) const;
    // Predictions at the posterior mean, [B, P].
    Tensor predict(const Batch& batch) const;

    std::vector<double> regression_times() const;

private:
    Linear linear(std::size_t in, std::size_t out, bool zero, bool relu_fan, std::mt19937_64& rng,
                  const std::string& name);
    TimeAttention attention(std::mt19937_64& rng, const std::string& name);

    LatentConfig config_;
    std::vector<Tensor> params_;
    TimeAttention enc_attn_, reg_attn_;
    Linear enc1_, enc2_, ode1_, ode2_, dec1_, dec2_, reg1_, reg2_, reg_out_;
};

// Width of the baseline regression head that brings its parameter count
// closest to the dynamic model built from the same config.
std::size_t matched_baseline_hidden(const LatentConfig& config);

struct TrainConfig {
    int epochs = 150;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double elbo = 0.0;
    double reg_mse = 0.0;
};

// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochStats&)>;

struct TrainResult {
    std::vector<EpochStats> history;
    ad::Adam optimizer;
};

// Throws std::runtime_error naming lr, epoch and batch when a loss is not finite.
TrainResult train(LatentModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

metrics::Matrix predict(const LatentModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                        std::size_t batch_size = 64);

}  // namespace npd::latent
