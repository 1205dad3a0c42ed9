#pragma once

// Simulators for three models of collective behaviour: D'Orsogna
// attraction-repulsion, Vicsek alignment with noise on the unit sphere, and
// volume exclusion with cell division and death.

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "npd/geometry.hpp"

namespace npd::swarm {

using Rng = std::mt19937_64;

enum class Model { dorsogna, vicsek, volex };

// Which parameters are varied and how they are drawn.
enum class Scheme {
    dorsogna_1k,   // C_r, l_r ~ U[0.1, 2]; m = alpha = 1
    dorsogna_10k,  // m, alpha, C_r, l_r log-uniform
    vicsek,        // c, nu, D, R
    volex,         // alpha, R, lambda_b, lambda_d
};

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);
Model model_of(Scheme s);

struct DorsognaParams {
    double m = 1.0;
    double alpha = 1.0;
    double beta = 0.5;
    double c_r = 1.0;
    double l_r = 1.0;
    double c_a = 1.0;
    double l_a = 1.0;
};

struct VicsekParams {
    double c = 1.0;
    double nu = 1.0;
    double D = 0.0;
    double R = 1.0;
};

struct VolexParams {
    double alpha = 1.0;
    double R = 1.0;
    double lambda_b = 0.0;
    double lambda_d = 0.0;
};

struct SimParams {
    Scheme scheme = Scheme::dorsogna_10k;
    std::variant<DorsognaParams, VicsekParams, VolexParams> values;

    Model model() const { return model_of(scheme); }
    // The varied parameters, in a fixed per-scheme order.
    std::vector<double> targets() const;
    static std::vector<std::string> target_names(Scheme scheme);
};

struct SamplingOptions {
    double dorsogna_beta = 0.5;
    // Volex growth guard: proposals whose expected population
    // initial_count * exp((lambda_b - lambda_d) * horizon) exceeds the cap
    // are rejected before simulation.
    int initial_count = 200;
    double horizon = 10.0;
    int population_cap = 2000;
};

SimParams sample_params(Scheme scheme, Rng& rng, const SamplingOptions& options = {});

// Volex acceptance rule for a (lambda_b, lambda_d) proposal.
bool volex_rates_accepted(double lambda_b, double lambda_d, const SamplingOptions& options);

struct SimState {
    Cloud positions;
    Cloud velocities;
};

SimState init_state(int count, Rng& rng);

class PopulationCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SimState step_dorsogna(const SimState& state, const DorsognaParams& p, double dt);
SimState step_vicsek(const SimState& state, const VicsekParams& p, double dt, Rng& rng);
SimState step_volex(const SimState& state, const VolexParams& p, double dt, Rng& rng,
                    int population_cap = 2000);

struct ObservationSequence {
    std::vector<double> times;
    std::vector<Cloud> clouds;
    SimParams params;
    std::vector<double> targets;
};

struct Window {
    int start_step = 0;
    int length = 1000;
};

struct SimConfig {
    int count = 200;
    int steps = 1000;
    double dt = 0.01;
    int stride = 10;
    std::optional<Window> window;
    int population_cap = 2000;
};

// Initializes a state, integrates, and records every `stride`-th step inside
// the observation window. Throws PopulationCapExceeded for runaway volex runs.
ObservationSequence simulate(const SimParams& params, const SimConfig& config, Rng& rng);

// Pairwise kernels. The *_serial variants are the reference implementations;
// the parallel variants keep the per-particle summation order and therefore
// agree bitwise.
namespace kernels {

// Interaction force -(1/M) grad_{x_i} sum_j U(|x_i - x_j|) for every i.
void dorsogna_forces_serial(const Cloud& x, const DorsognaParams& p, Cloud& force);
void dorsogna_forces(const Cloud& x, const DorsognaParams& p, Cloud& force);

// a_i = sum of v_j over |x_i - x_j| <= R, self included.
void vicsek_alignment_serial(const Cloud& x, const Cloud& v, double radius, Cloud& sum);
void vicsek_alignment(const Cloud& x, const Cloud& v, double radius, Cloud& sum);

// dx_i/dt = -(alpha/R) sum_j phi(|x_j - x_i|^2 / 4R^2) (x_i - x_j)
void volex_drift_serial(const Cloud& x, const VolexParams& p, Cloud& drift);
void volex_drift(const Cloud& x, const VolexParams& p, Cloud& drift);

}  // namespace kernels

}  // namespace npd::swarm
