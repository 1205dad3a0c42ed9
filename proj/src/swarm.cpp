#include "npd/swarm.hpp"

#include <cmath>
#include <numbers>

namespace npd::swarm {

Scheme parse_scheme(const std::string& name) {
    if (name == "dorsogna-1k") return Scheme::dorsogna_1k;
    if (name == "dorsogna" || name == "dorsogna-10k") return Scheme::dorsogna_10k;
    if (name == "vicsek" || name == "vicsek-10k") return Scheme::vicsek;
    if (name == "volex" || name == "volex-10k") return Scheme::volex;
    throw std::invalid_argument("unknown model '" + name +
                                "' (expected dorsogna-1k, dorsogna, vicsek or volex)");
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::dorsogna_1k: return "dorsogna-1k";
        case Scheme::dorsogna_10k: return "dorsogna";
        case Scheme::vicsek: return "vicsek";
        case Scheme::volex: return "volex";
    }
    return "?";
}

Model model_of(Scheme s) {
    switch (s) {
        case Scheme::dorsogna_1k:
        case Scheme::dorsogna_10k: return Model::dorsogna;
        case Scheme::vicsek: return Model::vicsek;
        case Scheme::volex: return Model::volex;
    }
    return Model::dorsogna;
}

std::vector<double> SimParams::targets() const {
    switch (scheme) {
        case Scheme::dorsogna_1k: {
            const auto& p = std::get<DorsognaParams>(values);
            return {p.c_r, p.l_r};
        }
        case Scheme::dorsogna_10k: {
            const auto& p = std::get<DorsognaParams>(values);
            return {p.m, p.alpha, p.c_r, p.l_r};
        }
        case Scheme::vicsek: {
            const auto& p = std::get<VicsekParams>(values);
            return {p.c, p.nu, p.D, p.R};
        }
        case Scheme::volex: {
            const auto& p = std::get<VolexParams>(values);
            return {p.alpha, p.R, p.lambda_b, p.lambda_d};
        }
    }
    return {};
}

std::vector<std::string> SimParams::target_names(Scheme scheme) {
    switch (scheme) {
        case Scheme::dorsogna_1k: return {"C_r", "l_r"};
        case Scheme::dorsogna_10k: return {"m", "alpha", "C_r", "l_r"};
        case Scheme::vicsek: return {"c", "nu", "D", "R"};
        case Scheme::volex: return {"alpha", "R", "lambda_b", "lambda_d"};
    }
    return {};
}

bool volex_rates_accepted(double lambda_b, double lambda_d, const SamplingOptions& options) {
    if (lambda_d > lambda_b) return false;
    const double expected =
        options.initial_count * std::exp((lambda_b - lambda_d) * options.horizon);
    return expected <= options.population_cap;
}

SimParams sample_params(Scheme scheme, Rng& rng, const SamplingOptions& options) {
    auto uniform = [&rng](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    SimParams out;
    out.scheme = scheme;
    switch (scheme) {
        case Scheme::dorsogna_1k: {
            DorsognaParams p;
            p.m = 1.0;
            p.alpha = 1.0;
            p.beta = options.dorsogna_beta;
            p.c_r = uniform(0.1, 2.0);
            p.l_r = uniform(0.1, 2.0);
            out.values = p;
            break;
        }
        case Scheme::dorsogna_10k: {
            DorsognaParams p;
            p.beta = options.dorsogna_beta;
            p.c_r = std::exp2(uniform(-1.0, 1.0));
            p.l_r = std::exp2(uniform(-1.5, 0.5));
            p.alpha = std::exp2(uniform(-2.0, 2.0));
            p.m = std::exp2(uniform(-2.0, 2.0));
            out.values = p;
            break;
        }
        case Scheme::vicsek: {
            VicsekParams p;
            p.R = uniform(0.5, 5.0);
            p.c = uniform(0.5, 5.0);
            p.nu = uniform(0.5, 5.0);
            p.D = uniform(0.0, 2.0);
            out.values = p;
            break;
        }
        case Scheme::volex: {
            VolexParams p;
            p.alpha = uniform(0.0, 2.0);
            p.R = uniform(0.0, 2.0);
            do {
                p.lambda_b = uniform(0.0, 1.0);
                p.lambda_d = uniform(0.0, 1.0);
            } while (!volex_rates_accepted(p.lambda_b, p.lambda_d, options));
            out.values = p;
            break;
        }
    }
    return out;
}

SimState init_state(int count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("init_state: need at least one particle");
    std::uniform_real_distribution<double> cube(-0.5, 0.5);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    SimState s;
    s.positions.resize(count);
    s.velocities.resize(count);
    for (auto& x : s.positions) x = {cube(rng), cube(rng), cube(rng)};
    // Archimedes: z uniform on [-1,1] and azimuth uniform gives the uniform law on S^2.
    for (auto& v : s.velocities) {
        const double z = unit(rng);
        const double phi = angle(rng);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        v = {r * std::cos(phi), r * std::sin(phi), z};
    }
    return s;
}

namespace kernels {

namespace {

inline Point3 dorsogna_pair_sum(const Cloud& x, const DorsognaParams& p, std::size_t i) {
    Point3 f{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i) continue;
        const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1], dz = x[i][2] - x[j][2];
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (r == 0.0) continue;
        // U'(r) for U(r) = C_r exp(-r/l_r) - C_a exp(-r/l_a)
        const double du = -p.c_r / p.l_r * std::exp(-r / p.l_r) + p.c_a / p.l_a * std::exp(-r / p.l_a);
        const double s = du / r;
        f[0] += s * dx;
        f[1] += s * dy;
        f[2] += s * dz;
    }
    const double scale = -1.0 / static_cast<double>(x.size());
    return {scale * f[0], scale * f[1], scale * f[2]};
}

inline Point3 vicsek_pair_sum(const Cloud& x, const Cloud& v, double radius, std::size_t i) {
    Point3 a{0.0, 0.0, 0.0};
    const double r2 = radius * radius;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1], dz = x[i][2] - x[j][2];
        if (dx * dx + dy * dy + dz * dz <= r2) {
            a[0] += v[j][0];
            a[1] += v[j][1];
            a[2] += v[j][2];
        }
    }
    return a;
}

// phi(r) = 1/r - 1 on (0, 1], 0 elsewhere. The drift pushes pairs apart.
inline Point3 volex_pair_sum(const Cloud& x, const VolexParams& p, std::size_t i) {
    Point3 d{0.0, 0.0, 0.0};
    if (p.R <= 0.0) return d;
    const double inv4r2 = 1.0 / (4.0 * p.R * p.R);
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i) continue;
        const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1], dz = x[i][2] - x[j][2];
        const double r = (dx * dx + dy * dy + dz * dz) * inv4r2;
        if (r <= 0.0 || r > 1.0) continue;
        const double phi = 1.0 / r - 1.0;
        d[0] += phi * dx;
        d[1] += phi * dy;
        d[2] += phi * dz;
    }
    const double scale = p.alpha / p.R;
    return {scale * d[0], scale * d[1], scale * d[2]};
}

}  // namespace

void dorsogna_forces_serial(const Cloud& x, const DorsognaParams& p, Cloud& force) {
    force.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) force[i] = dorsogna_pair_sum(x, p, i);
}

void dorsogna_forces(const Cloud& x, const DorsognaParams& p, Cloud& force) {
    force.resize(x.size());
    const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 64)
    for (long i = 0; i < n; ++i) force[i] = dorsogna_pair_sum(x, p, i);
}

void vicsek_alignment_serial(const Cloud& x, const Cloud& v, double radius, Cloud& sum) {
    sum.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] = vicsek_pair_sum(x, v, radius, i);
}

void vicsek_alignment(const Cloud& x, const Cloud& v, double radius, Cloud& sum) {
    sum.resize(x.size());
    const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 64)
    for (long i = 0; i < n; ++i) sum[i] = vicsek_pair_sum(x, v, radius, i);
}

void volex_drift_serial(const Cloud& x, const VolexParams& p, Cloud& drift) {
    drift.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) drift[i] = volex_pair_sum(x, p, i);
}

void volex_drift(const Cloud& x, const VolexParams& p, Cloud& drift) {
    drift.resize(x.size());
    const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 64)
    for (long i = 0; i < n; ++i) drift[i] = volex_pair_sum(x, p, i);
}

}  // namespace kernels

SimState step_dorsogna(const SimState& state, const DorsognaParams& p, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_dorsogna: dt must be positive");
    Cloud force;
    kernels::dorsogna_forces(state.positions, p, force);
    SimState next = state;
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        const Point3& v = state.velocities[i];
        const double speed2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        const double self = p.alpha - p.beta * speed2;
        for (int c = 0; c < 3; ++c) {
            next.positions[i][c] += dt * v[c];
            next.velocities[i][c] += dt / p.m * (self * v[c] + force[i][c]);
        }
    }
    return next;
}

SimState step_vicsek(const SimState& state, const VicsekParams& p, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_vicsek: dt must be positive");
    Cloud align;
    kernels::vicsek_alignment(state.positions, state.velocities, p.R, align);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double noise = std::sqrt(2.0 * p.D * dt);
    SimState next = state;
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        const Point3& v = state.velocities[i];
        Point3 vbar = align[i];
        const double na = norm(vbar);
        if (na == 0.0)
            vbar = v;
        else
            for (auto& c : vbar) c /= na;
        Point3 inc;
        for (int c = 0; c < 3; ++c) inc[c] = p.nu * vbar[c] * dt + noise * gauss(rng);
        // Tangent projection (I - v v^T) inc.
        const double dot = v[0] * inc[0] + v[1] * inc[1] + v[2] * inc[2];
        Point3 nv;
        for (int c = 0; c < 3; ++c) {
            next.positions[i][c] += p.c * v[c] * dt;
            nv[c] = v[c] + inc[c] - dot * v[c];
        }
        const double nn = norm(nv);
        for (int c = 0; c < 3; ++c) next.velocities[i][c] = nv[c] / nn;
    }
    return next;
}

SimState step_volex(const SimState& state, const VolexParams& p, double dt, Rng& rng,
                    int population_cap) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_volex: dt must be positive");
    Cloud drift;
    kernels::volex_drift(state.positions, p, drift);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, p.R / 100.0);
    const double p_birth = p.lambda_b * dt;
    const double p_death = p.lambda_d * dt;
    SimState next;
    next.positions.reserve(state.positions.size() + 8);
    next.velocities.reserve(state.positions.size() + 8);
    for (std::size_t i = 0; i < state.positions.size(); ++i) {
        Point3 x = state.positions[i];
        for (int c = 0; c < 3; ++c) x[c] += dt * drift[i][c];
        const bool divides = u01(rng) < p_birth;
        const bool dies = u01(rng) < p_death;
        if (!dies) {
            next.positions.push_back(x);
            next.velocities.push_back(state.velocities[i]);
        }
        if (divides) {
            Point3 child = x;
            if (p.R > 0.0)
                for (auto& c : child) c += jitter(rng);
            next.positions.push_back(child);
            next.velocities.push_back(state.velocities[i]);
        }
    }
    if (static_cast<int>(next.positions.size()) > population_cap)
        throw PopulationCapExceeded("volex population " + std::to_string(next.positions.size()) +
                                    " exceeds cap " + std::to_string(population_cap));
    return next;
}

ObservationSequence simulate(const SimParams& params, const SimConfig& config, Rng& rng) {
    const Window window = config.window.value_or(Window{0, config.steps});
    if (config.stride < 1 || window.length < config.stride || window.start_step < 0)
        throw std::invalid_argument("simulate: need length >= stride >= 1 and start >= 0");
    if (!(config.dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
    const int last_step = window.start_step + window.length;

    ObservationSequence seq;
    seq.params = params;
    seq.targets = params.targets();
    SimState state = init_state(config.count, rng);
    for (int step = 1; step <= last_step; ++step) {
        switch (params.model()) {
            case Model::dorsogna:
                state = step_dorsogna(state, std::get<DorsognaParams>(params.values), config.dt);
                break;
            case Model::vicsek:
                state = step_vicsek(state, std::get<VicsekParams>(params.values), config.dt, rng);
                break;
            case Model::volex:
                state = step_volex(state, std::get<VolexParams>(params.values), config.dt, rng,
                                   config.population_cap);
                break;
        }
        const int offset = step - window.start_step;
        if (offset > 0 && offset % config.stride == 0) {
            seq.times.push_back(step * config.dt);
            seq.clouds.push_back(state.positions);
        }
    }
    return seq;
}

}  // namespace npd::swarm
