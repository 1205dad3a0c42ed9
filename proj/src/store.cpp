#include "npd/store.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

namespace npd::store {

static_assert(std::endian::native == std::endian::little, "store codecs assume a little-endian host");

using nlohmann::json;

namespace {

constexpr char kDiagramMagic[] = "NPDDGM01";
constexpr char kStackMagic[] = "NPDSTK01";
constexpr char kCheckpointMagic[] = "NPDCKPT1";
constexpr float kInfiniteDeath = -1.0f;

class Writer {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void bytes(const std::string& s) { out_ += s; }
    template <class T>
    void array(const T* p, std::size_t n) {
        out_.append(reinterpret_cast<const char*>(p), n * sizeof(T));
    }
    std::string& str() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& s, std::string what) : s_(s), what_(std::move(what)) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, s_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string r = s_.substr(pos_, n);
        pos_ += n;
        return r;
    }
    template <class T>
    void array(T* p, std::size_t n) {
        need(n * sizeof(T));
        std::memcpy(p, s_.data() + pos_, n * sizeof(T));
        pos_ += n * sizeof(T);
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == s_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > s_.size()) throw std::runtime_error(what_ + ": truncated data");
    }
    const std::string& s_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h;
    return o.str();
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

json params_json(const swarm::SimParams& p) {
    json j;
    j["scheme"] = swarm::scheme_name(p.scheme);
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, swarm::DorsognaParams>)
                j["values"] = {{"m", v.m}, {"alpha", v.alpha}, {"beta", v.beta}, {"c_r", v.c_r},
                               {"l_r", v.l_r}, {"c_a", v.c_a}, {"l_a", v.l_a}};
            else if constexpr (std::is_same_v<T, swarm::VicsekParams>)
                j["values"] = {{"c", v.c}, {"nu", v.nu}, {"D", v.D}, {"R", v.R}};
            else
                j["values"] = {{"alpha", v.alpha}, {"R", v.R}, {"lambda_b", v.lambda_b}, {"lambda_d", v.lambda_d}};
        },
        p.values);
    return j;
}

swarm::SimParams params_from_json(const json& j) {
    swarm::SimParams p;
    p.scheme = swarm::parse_scheme(j.at("scheme").get<std::string>());
    const json& v = j.at("values");
    switch (p.model()) {
        case swarm::Model::dorsogna:
            p.values = swarm::DorsognaParams{v.at("m"), v.at("alpha"), v.at("beta"), v.at("c_r"),
                                             v.at("l_r"), v.at("c_a"), v.at("l_a")};
            break;
        case swarm::Model::vicsek:
            p.values = swarm::VicsekParams{v.at("c"), v.at("nu"), v.at("D"), v.at("R")};
            break;
        case swarm::Model::volex:
            p.values = swarm::VolexParams{v.at("alpha"), v.at("R"), v.at("lambda_b"), v.at("lambda_d")};
            break;
    }
    return p;
}

json latent_config_json(const latent::LatentConfig& c) {
    return {{"input_dim", c.input_dim},   {"outputs", c.outputs},         {"latent", c.latent},
            {"ref_points", c.ref_points}, {"time_embed", c.time_embed},   {"attn_width", c.attn_width},
            {"enc_hidden", c.enc_hidden}, {"ode_hidden", c.ode_hidden},   {"dec_hidden", c.dec_hidden},
            {"reg_hidden", c.reg_hidden}, {"reg_times", c.reg_times},     {"euler_steps", c.euler_steps},
            {"lambda_reg", c.lambda_reg}, {"baseline", c.baseline},       {"baseline_hidden", c.baseline_hidden}};
}

latent::LatentConfig latent_config_from(const json& j) {
    latent::LatentConfig c;
    c.input_dim = j.at("input_dim");
    c.outputs = j.at("outputs");
    c.latent = j.at("latent");
    c.ref_points = j.at("ref_points");
    c.time_embed = j.at("time_embed");
    c.attn_width = j.at("attn_width");
    c.enc_hidden = j.at("enc_hidden");
    c.ode_hidden = j.at("ode_hidden");
    c.dec_hidden = j.at("dec_hidden");
    c.reg_hidden = j.at("reg_hidden");
    c.reg_times = j.at("reg_times");
    c.euler_steps = j.at("euler_steps");
    c.lambda_reg = j.at("lambda_reg");
    c.baseline = j.at("baseline");
    c.baseline_hidden = j.at("baseline_hidden");
    return c;
}

}  // namespace

std::uint32_t crc32(const std::string& bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(c);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("write failed: " + path.string());
        }
    }
    fs::rename(tmp, path);
}

std::string GenerateConfig::to_json() const {
    json j{{"model", model}, {"sequences", sequences}, {"points", points}, {"steps", steps},
           {"dt", dt},       {"stride", stride},       {"beta", beta},     {"seed", seed}};
    j["window"] = window ? json{{"start", window->start_step}, {"length", window->length}} : json(nullptr);
    return j.dump();
}

GenerateConfig GenerateConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    GenerateConfig c;
    c.model = j.at("model");
    c.sequences = j.at("sequences");
    c.points = j.at("points");
    c.steps = j.at("steps");
    c.dt = j.at("dt");
    c.stride = j.at("stride");
    c.beta = j.at("beta");
    c.seed = j.at("seed");
    if (!j.at("window").is_null()) c.window = swarm::Window{j["window"].at("start"), j["window"].at("length")};
    return c;
}

std::string GenerateConfig::hash() const { return fnv1a_hex(to_json()); }

std::string Manifest::to_json() const {
    json j;
    j["schema"] = schema;
    j["model"] = config.model;
    j["sequence_count"] = sequences.size();
    j["config"] = json::parse(config.to_json());
    j["config_hash"] = config.hash();
    j["target_names"] = target_names;
    json fps = json::object();
    for (const auto& [k, v] : vectorizer_fingerprints) fps[std::to_string(k)] = v;
    j["vectorizer_fingerprints"] = fps;
    json seqs = json::array();
    for (const auto& s : sequences)
        seqs.push_back({{"id", s.id},
                        {"seed", s.seed},
                        {"params", params_json(s.params)},
                        {"targets", s.targets},
                        {"n_obs", s.n_obs},
                        {"counts", s.counts},
                        {"file", s.file},
                        {"offset", s.offset},
                        {"bytes", s.bytes},
                        {"crc32", s.crc}});
    j["sequences"] = seqs;
    return j.dump(1);
}

Manifest Manifest::from_json(const std::string& text) {
    const json j = json::parse(text);
    Manifest m;
    m.schema = j.at("schema");
    if (m.schema != kManifestSchema)
        throw UsageError("manifest schema " + std::to_string(m.schema) + " is not supported (expected " +
                         std::to_string(kManifestSchema) + ")");
    m.config = GenerateConfig::from_json(j.at("config").dump());
    m.target_names = j.at("target_names").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("vectorizer_fingerprints").items()) m.vectorizer_fingerprints[std::stoi(k)] = v;
    for (const auto& s : j.at("sequences")) {
        SequenceEntry e;
        e.id = s.at("id");
        e.seed = s.at("seed");
        e.params = params_from_json(s.at("params"));
        e.targets = s.at("targets").get<std::vector<double>>();
        e.n_obs = s.at("n_obs");
        e.counts = s.at("counts").get<std::vector<std::uint32_t>>();
        e.file = s.at("file");
        e.offset = s.at("offset");
        e.bytes = s.at("bytes");
        e.crc = s.at("crc32");
        m.sequences.push_back(std::move(e));
    }
    return m;
}

fs::path manifest_path(const fs::path& dir) { return dir / "manifest.json"; }

Manifest load_manifest(const fs::path& dir) {
    const fs::path p = manifest_path(dir);
    if (!fs::exists(p)) throw UsageError("no manifest at " + p.string() + "; run `generate` first");
    return Manifest::from_json(read_file(p));
}

void save_manifest(const fs::path& dir, const Manifest& manifest) {
    atomic_write(manifest_path(dir), manifest.to_json());
}

std::uint64_t sequence_seed(std::uint64_t master, std::size_t id) {
    return splitmix64(splitmix64(master) ^ static_cast<std::uint64_t>(id));
}

swarm::ObservationSequence simulate_sequence(const GenerateConfig& config, std::uint64_t seed) {
    swarm::Rng rng(seed);
    swarm::SamplingOptions sampling;
    sampling.dorsogna_beta = config.beta;
    sampling.initial_count = config.points;
    sampling.horizon = config.dt * (config.window ? config.window->start_step + config.window->length : config.steps);
    swarm::SimConfig sim;
    sim.count = config.points;
    sim.steps = config.steps;
    sim.dt = config.dt;
    sim.stride = config.stride;
    sim.window = config.window;
    sim.population_cap = sampling.population_cap;
    const auto scheme = swarm::parse_scheme(config.model);
    for (int attempt = 0;; ++attempt) {
        const auto params = swarm::sample_params(scheme, rng, sampling);
        try {
            return swarm::simulate(params, sim, rng);
        } catch (const swarm::PopulationCapExceeded&) {
            if (attempt >= 1000) throw;
        }
    }
}

std::string encode_positions(const std::vector<Cloud>& clouds) {
    Writer w;
    for (const auto& c : clouds)
        for (const auto& p : c)
            for (double x : p) w.put(static_cast<float>(x));
    return std::move(w.str());
}

std::vector<Cloud> decode_positions(const std::string& bytes, const std::vector<std::uint32_t>& counts) {
    Reader r(bytes, "positions");
    std::vector<Cloud> out;
    out.reserve(counts.size());
    for (auto n : counts) {
        Cloud c(n);
        for (auto& p : c)
            for (auto& x : p) x = r.get<float>();
        out.push_back(std::move(c));
    }
    if (!r.done()) throw std::runtime_error("positions: trailing bytes");
    return out;
}

std::vector<Cloud> load_positions(const fs::path& dir, const SequenceEntry& entry) {
    const std::string all = read_file(dir / entry.file);
    if (all.size() < entry.offset + entry.bytes)
        throw std::runtime_error(entry.file + ": shorter than the manifest records");
    const std::string bytes = all.substr(entry.offset, entry.bytes);
    if (crc32(bytes) != entry.crc) throw std::runtime_error(entry.file + ": checksum mismatch");
    return decode_positions(bytes, entry.counts);
}

std::string encode_diagrams(const DiagramSequence& seq, int max_dim) {
    Writer w;
    w.bytes(std::string(kDiagramMagic, 8));
    w.put<std::uint32_t>(kDiagramSchema);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(max_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.size()));
    for (const auto& obs : seq) {
        if (obs.size() != static_cast<std::size_t>(max_dim + 1))
            throw std::invalid_argument("encode_diagrams: expected " + std::to_string(max_dim + 1) + " dims");
        for (const auto& d : obs) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(d.pairs.size()));
            for (const auto& p : d.pairs) {
                w.put(static_cast<float>(p.birth));
                w.put(std::isinf(p.death) ? kInfiniteDeath : static_cast<float>(p.death));
            }
        }
    }
    return std::move(w.str());
}

DiagramSequence decode_diagrams(const std::string& bytes, int* max_dim) {
    Reader r(bytes, "diagrams");
    if (r.bytes(8) != std::string(kDiagramMagic, 8)) throw std::runtime_error("diagrams: bad magic");
    const auto schema = r.get<std::uint32_t>();
    if (schema != kDiagramSchema) throw std::runtime_error("diagrams: unsupported schema " + std::to_string(schema));
    const int md = static_cast<int>(r.get<std::uint32_t>());
    const auto n_obs = r.get<std::uint32_t>();
    DiagramSequence seq(n_obs);
    for (auto& obs : seq)
        for (int k = 0; k <= md; ++k) {
            ph::PersistenceDiagram d{k, {}};
            const auto n = r.get<std::uint32_t>();
            d.pairs.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) {
                const float b = r.get<float>(), e = r.get<float>();
                d.pairs.push_back({b, e == kInfiniteDeath ? ph::kInfinity : static_cast<double>(e)});
            }
            obs.push_back(std::move(d));
        }
    if (!r.done()) throw std::runtime_error("diagrams: trailing bytes");
    if (max_dim) *max_dim = md;
    return seq;
}

fs::path diagram_path(const fs::path& dir, std::size_t id) {
    return dir / "diagrams" / (std::to_string(id) + ".dgm");
}

DiagramSequence load_diagrams(const fs::path& dir, std::size_t id, int max_dim) {
    const fs::path p = diagram_path(dir, id);
    if (!fs::exists(p))
        throw UsageError("missing diagrams for sequence " + std::to_string(id) + "; run `precompute` first");
    int stored = 0;
    auto seq = decode_diagrams(read_file(p), &stored);
    if (stored < max_dim)
        throw UsageError("diagrams for sequence " + std::to_string(id) + " go up to dim " + std::to_string(stored) +
                         "; rerun `precompute --max-dim " + std::to_string(max_dim) + "`");
    for (auto& obs : seq) obs.resize(static_cast<std::size_t>(max_dim + 1));
    return seq;
}

std::string encode_stack(const crocker::CrockerStack& s) {
    Writer w;
    w.bytes(std::string(kStackMagic, 8));
    w.put<std::uint32_t>(kStackSchema);
    w.put<std::int32_t>(s.eps_steps);
    w.put<std::int32_t>(s.n_obs);
    w.put<std::int32_t>(s.alpha_steps);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.dims()));
    for (std::size_t k = 0; k < s.dims(); ++k) {
        w.put(s.max_persistence[k]);
        w.array(s.counts[k].data(), s.counts[k].size());
    }
    return std::move(w.str());
}

crocker::CrockerStack decode_stack(const std::string& bytes) {
    Reader r(bytes, "stack");
    if (r.bytes(8) != std::string(kStackMagic, 8)) throw std::runtime_error("stack: bad magic");
    if (r.get<std::uint32_t>() != kStackSchema) throw std::runtime_error("stack: unsupported schema");
    crocker::CrockerStack s;
    s.eps_steps = r.get<std::int32_t>();
    s.n_obs = r.get<std::int32_t>();
    s.alpha_steps = r.get<std::int32_t>();
    const auto dims = r.get<std::uint32_t>();
    const std::size_t per = static_cast<std::size_t>(s.eps_steps) * s.n_obs * s.alpha_steps;
    for (std::uint32_t k = 0; k < dims; ++k) {
        const double mp = r.get<double>();
        s.max_persistence.push_back(mp);
        s.eps_grid.push_back(crocker::linspace(0.0, mp / 3.0, s.eps_steps));
        s.alpha_grid.push_back(crocker::linspace(0.0, mp / 2.0, s.alpha_steps));
        std::vector<std::uint16_t> c(per);
        r.array(c.data(), per);
        s.counts.push_back(std::move(c));
    }
    if (!r.done()) throw std::runtime_error("stack: trailing bytes");
    return s;
}

fs::path stack_path(const fs::path& dir, std::size_t id) {
    return dir / "crocker" / (std::to_string(id) + ".stk");
}

fs::path vectorizer_path(const fs::path& dir, int split) {
    return dir / "vectorizers" / ("split" + std::to_string(split) + ".json");
}

void save_checkpoint(const fs::path& path, const CheckpointMeta& meta, const latent::LatentModel& model,
                     const ad::Adam& optimizer) {
    json j{{"variant", meta.variant},
           {"split", meta.split},
           {"rate", meta.rate},
           {"max_dim", meta.max_dim},
           {"protocol_seed", meta.protocol_seed},
           {"vectorizer_fingerprint", meta.vectorizer_fingerprint},
           {"model", latent_config_json(meta.model)},
           {"train",
            {{"epochs", meta.train.epochs},
             {"batch_size", meta.train.batch_size},
             {"lr", meta.train.lr},
             {"weight_decay", meta.train.weight_decay},
             {"seed", meta.train.seed}}},
           {"feature_mean", meta.feature_mean},
           {"feature_std", meta.feature_std},
           {"target_mean", meta.target_mean},
           {"target_std", meta.target_std}};
    const std::string text = j.dump();
    Writer w;
    w.bytes(std::string(kCheckpointMagic, 8));
    w.put<std::uint32_t>(kCheckpointSchema);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.bytes(text);
    w.put<std::uint64_t>(optimizer.steps());
    const auto& params = model.parameters();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(params[i].name().size()));
        w.bytes(params[i].name());
        w.put<std::uint64_t>(params[i].numel());
        w.array(params[i].values().data(), params[i].numel());
        w.array(optimizer.first_moments()[i].data(), optimizer.first_moments()[i].size());
        w.array(optimizer.second_moments()[i].data(), optimizer.second_moments()[i].size());
    }
    w.put<std::uint32_t>(crc32(w.str()));
    atomic_write(path, w.str());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("no checkpoint at " + path.string() + "; run `train` first");
    const std::string bytes = read_file(path);
    if (bytes.size() < 4) throw std::runtime_error(path.string() + ": truncated checkpoint");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    const std::string body = bytes.substr(0, bytes.size() - 4);
    if (crc32(body) != stored_crc) throw std::runtime_error(path.string() + ": checkpoint checksum mismatch");
    Reader r(body, "checkpoint");
    if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw std::runtime_error("checkpoint: bad magic");
    if (r.get<std::uint32_t>() != kCheckpointSchema) throw std::runtime_error("checkpoint: unsupported schema");
    const json j = json::parse(r.bytes(r.get<std::uint32_t>()));
    CheckpointMeta meta;
    meta.variant = j.at("variant");
    meta.split = j.at("split");
    meta.rate = j.at("rate");
    meta.max_dim = j.at("max_dim");
    meta.protocol_seed = j.at("protocol_seed");
    meta.vectorizer_fingerprint = j.at("vectorizer_fingerprint");
    meta.model = latent_config_from(j.at("model"));
    const json& t = j.at("train");
    meta.train = {t.at("epochs"), t.at("batch_size"), t.at("lr"), t.at("weight_decay"), t.at("seed")};
    meta.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    meta.feature_std = j.at("feature_std").get<std::vector<double>>();
    meta.target_mean = j.at("target_mean").get<std::vector<double>>();
    meta.target_std = j.at("target_std").get<std::vector<double>>();

    std::mt19937_64 rng(0);
    LoadedCheckpoint out{meta, latent::LatentModel(meta.model, rng), 0, {}, {}};
    out.adam_steps = r.get<std::uint64_t>();
    const auto n = r.get<std::uint32_t>();
    auto params = out.model.parameters();
    if (n != params.size()) throw std::runtime_error("checkpoint: parameter count does not match its config");
    for (auto& p : params) {
        const std::string name = r.bytes(r.get<std::uint32_t>());
        const auto numel = r.get<std::uint64_t>();
        if (name != p.name() || numel != p.numel())
            throw std::runtime_error("checkpoint: unexpected parameter " + name);
        r.array(p.mutable_values().data(), numel);
        out.first_moments.emplace_back(numel);
        r.array(out.first_moments.back().data(), numel);
        out.second_moments.emplace_back(numel);
        r.array(out.second_moments.back().data(), numel);
    }
    if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return out;
}

std::string history_csv(const std::vector<latent::EpochStats>& history) {
    std::ostringstream o;
    o << "epoch,lr,elbo,reg_mse\n" << std::setprecision(10);
    for (const auto& h : history) o << h.epoch << ',' << h.lr << ',' << h.elbo << ',' << h.reg_mse << '\n';
    return o.str();
}

std::string run_name(int split, double rate) {
    std::ostringstream o;
    o << "split" << split << "_rate" << std::fixed << std::setprecision(2) << rate;
    return o.str();
}

}  // namespace npd::store
