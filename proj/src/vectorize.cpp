#include "npd/vectorize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>

namespace npd::vec {

namespace {

double sqdist(const Point2& a, const Point2& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return dx * dx + dy * dy;
}

constexpr int kSchema = 1;

}  // namespace

namespace kernels {

void assign_serial(const std::vector<Point2>& points, const std::vector<Point2>& centers,
                   std::vector<int>& label, std::vector<double>& dist) {
    label.resize(points.size());
    dist.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        int best = 0;
        double bd = sqdist(points[i], centers[0]);
        for (std::size_t c = 1; c < centers.size(); ++c) {
            const double d = sqdist(points[i], centers[c]);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(c);
            }
        }
        label[i] = best;
        dist[i] = bd;
    }
}

void assign(const std::vector<Point2>& points, const std::vector<Point2>& centers, std::vector<int>& label,
            std::vector<double>& dist) {
    label.resize(points.size());
    dist.resize(points.size());
    const long n = static_cast<long>(points.size());
#pragma omp parallel for schedule(static) if (n > 4096)
    for (long i = 0; i < n; ++i) {
        int best = 0;
        double bd = sqdist(points[i], centers[0]);
        for (std::size_t c = 1; c < centers.size(); ++c) {
            const double d = sqdist(points[i], centers[c]);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(c);
            }
        }
        label[i] = best;
        dist[i] = bd;
    }
}

}  // namespace kernels

std::vector<std::size_t> kmeanspp_seeds(const std::vector<Point2>& points, int k, std::mt19937_64& rng) {
    if (points.empty()) throw std::invalid_argument("kmeans++: no points");
    if (k < 1) throw std::invalid_argument("kmeans++: k must be positive");
    std::vector<std::size_t> seeds;
    seeds.push_back(std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng));
    std::vector<double> nearest(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) nearest[i] = sqdist(points[i], points[seeds[0]]);
    while (static_cast<int>(seeds.size()) < k) {
        double total = 0.0;
        for (double d : nearest) total += d;
        std::size_t pick;
        if (total > 0.0) {
            const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += nearest[i];
                if (r < acc && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (nearest[pick] == 0.0) --pick;
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng);
        }
        seeds.push_back(pick);
        for (std::size_t i = 0; i < points.size(); ++i)
            nearest[i] = std::min(nearest[i], sqdist(points[i], points[pick]));
    }
    return seeds;
}

KMeansResult kmeans(const std::vector<Point2>& points, const KMeansOptions& options, std::mt19937_64& rng) {
    KMeansResult out;
    for (std::size_t s : kmeanspp_seeds(points, options.k, rng)) out.centers.push_back(points[s]);
    std::vector<int> label;
    std::vector<double> dist;
    const std::size_t k = out.centers.size();
    for (out.iterations = 0; out.iterations < options.max_iterations;) {
        kernels::assign(points, out.centers, label, dist);
        std::vector<Point2> sum(k, Point2{0.0, 0.0});
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sum[label[i]][0] += points[i][0];
            sum[label[i]][1] += points[i][1];
            ++count[label[i]];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) continue;  // empty cluster keeps its center
            const Point2 next{sum[c][0] / count[c], sum[c][1] / count[c]};
            shift = std::max(shift, std::sqrt(sqdist(next, out.centers[c])));
            out.centers[c] = next;
        }
        ++out.iterations;
        if (shift <= options.tolerance) break;
    }
    kernels::assign(points, out.centers, label, dist);
    for (double d : dist) out.cost += d;
    return out;
}

std::vector<double> element_scales(const std::vector<Point2>& centers) {
    std::vector<double> sigma(centers.size(), kSigmaFloor);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        double nearest = ph::kInfinity;
        for (std::size_t j = 0; j < centers.size(); ++j)
            if (j != i) nearest = std::min(nearest, std::sqrt(sqdist(centers[i], centers[j])));
        if (nearest != ph::kInfinity) sigma[i] = std::max(nearest / 2.0, kSigmaFloor);
    }
    return sigma;
}

namespace {

ElementSet fit_dimension(int dim, const std::vector<ph::PersistenceDiagram>& diagrams, std::mt19937_64& rng,
                         const FitOptions& options) {
    ElementSet set;
    set.dim = dim;
    for (const auto& d : diagrams)
        for (const auto& p : d.pairs) {
            set.cap = std::max(set.cap, p.birth);
            if (!p.infinite()) set.cap = std::max(set.cap, p.death);
        }

    std::vector<Point2> points;
    std::vector<double> positive;
    for (const auto& d : diagrams)
        for (const auto& p : d.pairs) {
            const double pers = (p.infinite() ? set.cap : p.death) - p.birth;
            points.push_back({p.birth, pers});
            if (pers > 0.0) positive.push_back(pers);
        }

    const std::size_t k = static_cast<std::size_t>(options.kmeans.k);
    if (points.empty()) {
        set.centers.assign(k, Point2{0.0, 0.0});
        set.sigma.assign(k, kSigmaFloor);
        return set;
    }

    if (!positive.empty()) {
        std::sort(positive.begin(), positive.end());
        set.nu = positive[static_cast<std::size_t>(0.01 * static_cast<double>(positive.size() - 1))];
    }

    if (points.size() > options.sample_size) {
        // Partial Fisher-Yates: the first sample_size entries are a uniform subset.
        for (std::size_t i = 0; i < options.sample_size; ++i) {
            const std::size_t j = std::uniform_int_distribution<std::size_t>(i, points.size() - 1)(rng);
            std::swap(points[i], points[j]);
        }
        points.resize(options.sample_size);
    }
    set.centers = kmeans(points, options.kmeans, rng).centers;
    set.sigma = element_scales(set.centers);
    return set;
}

}  // namespace

VectorizerModel fit(const std::vector<std::vector<ph::PersistenceDiagram>>& corpus, std::mt19937_64& rng,
                    const FitOptions& options) {
    VectorizerModel model;
    for (std::size_t k = 0; k < corpus.size(); ++k)
        model.dims.push_back(fit_dimension(static_cast<int>(k), corpus[k], rng, options));
    return model;
}

std::vector<double> transform(const ph::PersistenceDiagram& diagram, const ElementSet& elements) {
    std::vector<double> out(elements.size(), 0.0);
    for (const auto& p : diagram.pairs) {
        const double pers = (p.infinite() ? elements.cap : p.death) - p.birth;
        if (!(pers > 0.0)) continue;
        const double w = std::min(pers / elements.nu, 1.0);
        const Point2 q{p.birth, pers};
        for (std::size_t i = 0; i < elements.size(); ++i) {
            const double s = elements.sigma[i];
            out[i] += w * std::exp(-sqdist(q, elements.centers[i]) / (s * s));
        }
    }
    return out;
}

std::vector<double> transform(const std::vector<ph::PersistenceDiagram>& diagrams, const VectorizerModel& model) {
    if (diagrams.size() < model.dims.size())
        throw std::invalid_argument("transform: expected " + std::to_string(model.dims.size()) +
                                    " diagrams, got " + std::to_string(diagrams.size()));
    std::vector<double> out;
    out.reserve(model.output_size());
    for (std::size_t k = 0; k < model.dims.size(); ++k) {
        const auto part = transform(diagrams[k], model.dims[k]);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

double lipschitz_ratio(const ElementSet& elements, const ph::PersistenceDiagram& f, const ph::PersistenceDiagram& g) {
    const double w = ph::wasserstein1(f, g);
    if (!(w > 0.0)) throw std::invalid_argument("lipschitz_ratio: diagrams are at W1 distance 0");
    const auto a = transform(f, elements), b = transform(g, elements);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s) / w;
}

std::size_t VectorizerModel::output_size() const {
    std::size_t n = 0;
    for (const auto& d : dims) n += d.size();
    return n;
}

std::string VectorizerModel::to_json() const {
    nlohmann::json j;
    j["schema"] = kSchema;
    j["dims"] = nlohmann::json::array();
    for (const auto& d : dims) {
        nlohmann::json e;
        e["dim"] = d.dim;
        e["nu"] = d.nu;
        e["cap"] = d.cap;
        e["centers"] = d.centers;
        e["sigma"] = d.sigma;
        j["dims"].push_back(e);
    }
    return j.dump();
}

VectorizerModel VectorizerModel::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema").get<int>() != kSchema)
        throw std::runtime_error("vectorizer: unsupported schema " + j.at("schema").dump());
    VectorizerModel m;
    for (const auto& e : j.at("dims")) {
        ElementSet d;
        d.dim = e.at("dim").get<int>();
        d.nu = e.at("nu").get<double>();
        d.cap = e.at("cap").get<double>();
        d.centers = e.at("centers").get<std::vector<Point2>>();
        d.sigma = e.at("sigma").get<std::vector<double>>();
        if (d.centers.size() != d.sigma.size()) throw std::runtime_error("vectorizer: centers/sigma size mismatch");
        m.dims.push_back(std::move(d));
    }
    return m;
}

std::string VectorizerModel::fingerprint() const {
    // FNV-1a, 64 bit.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_json()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace npd::vec
