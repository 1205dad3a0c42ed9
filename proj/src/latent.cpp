#include "npd/latent.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace npd::latent {

using ad::Shape;

namespace {

std::atomic<std::uint64_t> g_ode_steps{0};

constexpr double kMaskedScore = -1e30;
constexpr double kGridTolerance = 1e-12;

Tensor constant(Shape shape, std::vector<double> values) { return Tensor::from(std::move(shape), std::move(values)); }

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t attention_count(const LatentConfig& c) { return 2 * c.time_embed + 2 * c.time_embed * c.attn_width; }

std::size_t dynamic_count(const LatentConfig& c) {
    return attention_count(c) + linear_count(c.ref_points * c.input_dim, c.enc_hidden) +
           linear_count(c.enc_hidden, 2 * c.latent) + linear_count(c.latent, c.ode_hidden) +
           linear_count(c.ode_hidden, c.latent) + linear_count(c.latent, c.dec_hidden) +
           linear_count(c.dec_hidden, c.input_dim) + attention_count(c) + linear_count(c.latent, c.reg_hidden) +
           linear_count(c.reg_hidden, c.reg_hidden) + linear_count(c.reg_hidden, c.outputs);
}

std::size_t baseline_count(const LatentConfig& c, std::size_t h) {
    return attention_count(c) + linear_count(c.input_dim, h) + linear_count(h, h) + linear_count(h, c.outputs);
}

// [B, 1, c] slices stacked along axis 1.
Tensor stack_states(const std::vector<Tensor>& states, std::size_t begin, std::size_t end) {
    std::vector<Tensor> parts;
    parts.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const auto& s = states[i].shape();
        parts.push_back(ad::reshape(states[i], {s[0], 1, s[1]}));
    }
    return ad::concat(parts, 1);
}

}  // namespace

Tensor Linear::operator()(const Tensor& x) const {
    const Tensor y = ad::matmul(x, w);
    return y + ad::broadcast(b, y.shape());
}

std::vector<double> TimeAttention::reference_times() const {
    std::vector<double> r(refs, 0.0);
    for (std::size_t h = 0; h < refs && refs > 1; ++h) r[h] = static_cast<double>(h) / static_cast<double>(refs - 1);
    return r;
}

Tensor TimeAttention::embed(const std::vector<double>& times) const {
    const std::size_t n = times.size(), te = embed_b.numel();
    const Tensor t = constant({n, 1}, times);
    const Tensor lin = ad::matmul(t, embed_w) + ad::broadcast(embed_b, {n, te});
    return ad::concat({ad::slice(lin, 1, 0, 1), ad::sin(ad::slice(lin, 1, 1, te))}, 1);
}

Tensor TimeAttention::weights(const std::vector<double>& times, const std::vector<double>* mask,
                              std::size_t batch) const {
    const std::size_t n = times.size(), dk = wq.size(1);
    const Tensor q = ad::matmul(embed(reference_times()), wq);
    const Tensor k = ad::matmul(embed(times), wk);
    Tensor scores = ad::scale(ad::bmm(ad::reshape(q, {1, refs, dk}), ad::reshape(k, {1, n, dk}), true),
                              1.0 / std::sqrt(static_cast<double>(dk)));
    scores = ad::broadcast(scores, {batch, refs, n});
    if (mask) {
        std::vector<double> bias(batch * n);
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = (*mask)[i] != 0.0 ? 0.0 : kMaskedScore;
        scores = scores + ad::broadcast(constant({batch, 1, n}, std::move(bias)), {batch, refs, n});
    }
    return ad::softmax(scores);
}

Tensor TimeAttention::operator()(const std::vector<double>& times, const Tensor& values,
                                 const std::vector<double>* mask) const {
    const std::size_t batch = values.size(0), n = values.size(1), c = values.size(2);
    if (n != times.size())
        throw std::invalid_argument("attention: " + std::to_string(times.size()) + " times for " +
                                    std::to_string(n) + " observations");
    Tensor v = values;
    if (mask) v = values * ad::broadcast(constant({batch, n, 1}, *mask), {batch, n, c});
    return ad::bmm(weights(times, mask, batch), v);
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& ids) {
    Batch b;
    b.times = data.times;
    b.size = ids.size();
    b.steps = data.times.size();
    b.dim = data.dim;
    b.outputs = ids.empty() ? 0 : data.targets[ids[0]].size();
    for (std::size_t id : ids) {
        const auto& m = data.masks[id];
        if (std::none_of(m.begin(), m.end(), [](double x) { return x != 0.0; }))
            throw std::invalid_argument("make_batch: sequence " + std::to_string(id) + " has no observed time point");
        if (data.values[id].size() != b.steps * b.dim || m.size() != b.steps || data.targets[id].size() != b.outputs)
            throw std::invalid_argument("make_batch: sequence " + std::to_string(id) + " has inconsistent sizes");
        b.values.insert(b.values.end(), data.values[id].begin(), data.values[id].end());
        b.mask.insert(b.mask.end(), m.begin(), m.end());
        b.targets.insert(b.targets.end(), data.targets[id].begin(), data.targets[id].end());
    }
    return b;
}

std::vector<Tensor> euler_integrate(const Tensor& z0, const std::function<Tensor(const Tensor&)>& field,
                                    const std::vector<double>& query_times, int steps) {
    if (steps < 1) throw std::invalid_argument("euler_integrate: steps must be positive");
    std::vector<double> grid;
    for (int k = 0; k <= steps; ++k) grid.push_back(static_cast<double>(k) / steps);
    for (double t : query_times) {
        if (t < 0.0) throw std::invalid_argument("euler_integrate: negative query time");
        grid.push_back(t);
    }
    std::sort(grid.begin(), grid.end());
    std::vector<double> merged;
    for (double t : grid)
        if (merged.empty() || t - merged.back() > kGridTolerance) merged.push_back(t);

    std::vector<Tensor> states{z0};
    for (std::size_t i = 1; i < merged.size(); ++i) {
        const Tensor& z = states.back();
        states.push_back(z + ad::scale(field(z), merged[i] - merged[i - 1]));
        g_ode_steps.fetch_add(1, std::memory_order_relaxed);
    }
    std::vector<Tensor> out;
    out.reserve(query_times.size());
    for (double t : query_times) {
        auto it = std::lower_bound(merged.begin(), merged.end(), t - kGridTolerance);
        out.push_back(states[static_cast<std::size_t>(it - merged.begin())]);
    }
    return out;
}

std::uint64_t ode_step_count() { return g_ode_steps.load(); }

Tensor reparametrize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
    return mu + ad::exp(ad::scale(logvar, 0.5)) * noise;
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
    const Tensor ones = Tensor::full(mu.shape(), 1.0);
    return ad::scale(ad::sum(mu * mu + ad::exp(logvar) - logvar - ones), 0.5);
}

double Losses::elbo() const { return recon.item() + kl.item(); }

LatentModel::LatentModel(const LatentConfig& config, std::mt19937_64& rng) : config_(config) {
    const auto& c = config_;
    if (c.input_dim == 0 || c.outputs == 0 || c.latent == 0 || c.ref_points == 0 || c.time_embed < 2)
        throw std::invalid_argument("latent model: degenerate configuration");
    if (c.baseline) {
        if (config_.baseline_hidden == 0) config_.baseline_hidden = matched_baseline_hidden(c);
        const std::size_t h = config_.baseline_hidden;
        reg_attn_ = attention(rng, "reg.attn");
        reg1_ = linear(c.input_dim, h, false, true, rng, "reg.l1");
        reg2_ = linear(h, h, false, true, rng, "reg.l2");
        reg_out_ = linear(h, c.outputs, true, false, rng, "reg.out");
        return;
    }
    enc_attn_ = attention(rng, "enc.attn");
    enc1_ = linear(c.ref_points * c.input_dim, c.enc_hidden, false, true, rng, "enc.l1");
    enc2_ = linear(c.enc_hidden, 2 * c.latent, true, false, rng, "enc.l2");
    ode1_ = linear(c.latent, c.ode_hidden, false, false, rng, "ode.l1");
    ode2_ = linear(c.ode_hidden, c.latent, true, false, rng, "ode.l2");
    dec1_ = linear(c.latent, c.dec_hidden, false, true, rng, "dec.l1");
    dec2_ = linear(c.dec_hidden, c.input_dim, true, false, rng, "dec.l2");
    reg_attn_ = attention(rng, "reg.attn");
    reg1_ = linear(c.latent, c.reg_hidden, false, true, rng, "reg.l1");
    reg2_ = linear(c.reg_hidden, c.reg_hidden, false, true, rng, "reg.l2");
    reg_out_ = linear(c.reg_hidden, c.outputs, true, false, rng, "reg.out");
}

Linear LatentModel::linear(std::size_t in, std::size_t out, bool zero, bool relu_fan, std::mt19937_64& rng,
                           const std::string& name) {
    std::vector<double> w(in * out, 0.0);
    if (!zero) {
        std::normal_distribution<double> n(0.0, std::sqrt((relu_fan ? 2.0 : 1.0) / static_cast<double>(in)));
        for (auto& x : w) x = n(rng);
    }
    Linear l{Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
    l.w.set_name(name + ".w");
    l.b.set_name(name + ".b");
    params_.push_back(l.w);
    params_.push_back(l.b);
    return l;
}

TimeAttention LatentModel::attention(std::mt19937_64& rng, const std::string& name) {
    const std::size_t te = config_.time_embed, dk = config_.attn_width;
    std::normal_distribution<double> freq(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> proj(0.0, 1.0 / std::sqrt(static_cast<double>(te)));
    std::vector<double> ew(te), eb(te), q(te * dk), k(te * dk);
    for (auto& x : ew) x = freq(rng);
    for (auto& x : eb) x = phase(rng);
    eb[0] = 0.0;
    for (auto& x : q) x = proj(rng);
    for (auto& x : k) x = proj(rng);
    TimeAttention a;
    a.refs = config_.ref_points;
    a.embed_w = Tensor::from({1, te}, std::move(ew), true).set_name(name + ".embed_w");
    a.embed_b = Tensor::from({te}, std::move(eb), true).set_name(name + ".embed_b");
    a.wq = Tensor::from({te, dk}, std::move(q), true).set_name(name + ".wq");
    a.wk = Tensor::from({te, dk}, std::move(k), true).set_name(name + ".wk");
    for (const auto& t : {a.embed_w, a.embed_b, a.wq, a.wk}) params_.push_back(t);
    return a;
}

std::size_t LatentModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

std::vector<Tensor> LatentModel::head_parameters() const {
    std::vector<Tensor> out;
    for (const auto& p : params_)
        if (p.name().rfind("reg.", 0) == 0) out.push_back(p);
    return out;
}

std::vector<double> LatentModel::regression_times() const {
    const std::size_t e = config_.reg_times;
    std::vector<double> t(e, 0.0);
    for (std::size_t i = 0; i < e && e > 1; ++i) t[i] = static_cast<double>(i) / static_cast<double>(e - 1);
    return t;
}

LatentModel::Posterior LatentModel::encode(const Batch& batch) const {
    if (config_.baseline) throw std::logic_error("encode: baseline model has no encoder");
    const std::size_t b = batch.size, n = batch.steps, d = batch.dim, z = config_.latent;
    const Tensor values = constant({b, n, d}, batch.values);
    const Tensor att = enc_attn_(batch.times, values, &batch.mask);
    const Tensor h = ad::relu(enc1_(ad::reshape(att, {b, config_.ref_points * d})));
    const Tensor out = enc2_(h);
    return {ad::slice(out, 1, 0, z), ad::slice(out, 1, z, 2 * z)};
}

Tensor LatentModel::field(const Tensor& z) const { return ode2_(ad::tanh(ode1_(z))); }

Tensor LatentModel::decode(const Tensor& z) const { return dec2_(ad::relu(dec1_(z))); }

namespace {

Tensor head(const TimeAttention& attn, const Linear& l1, const Linear& l2, const Linear& out,
            const std::vector<double>& times, const Tensor& values, const std::vector<double>* mask) {
    const std::size_t b = values.size(0), c = values.size(2), h = attn.refs;
    const Tensor a = ad::reshape(attn(times, values, mask), {b * h, c});
    const Tensor hidden = ad::relu(l2(ad::relu(l1(a))));
    const std::size_t width = hidden.size(1);
    return out(ad::mean_axis(ad::reshape(hidden, {b, h, width}), 1));
}

}  // namespace

Tensor LatentModel::regress_path(const Tensor& path) const {
    return head(reg_attn_, reg1_, reg2_, reg_out_, regression_times(), path, nullptr);
}

Tensor LatentModel::regress_observations(const Batch& batch) const {
    const Tensor values = constant({batch.size, batch.steps, batch.dim}, batch.values);
    return head(reg_attn_, reg1_, reg2_, reg_out_, batch.times, values, &batch.mask);
}

Losses LatentModel::loss(const Batch& batch, const std::vector<double>* noise) const {
    const std::size_t b = batch.size, n = batch.steps, d = batch.dim, p = batch.outputs, z = config_.latent;
    const Tensor targets = constant({b, p}, batch.targets);
    Losses l;
    if (config_.baseline) {
        l.reg = ad::scale(ad::squared_error(regress_observations(batch), targets), 1.0 / static_cast<double>(b * p));
        l.recon = Tensor::scalar(0.0);
        l.kl = Tensor::scalar(0.0);
        l.total = l.reg;
        return l;
    }
    const auto post = encode(batch);
    Tensor z0 = post.mu;
    if (noise) {
        if (noise->size() != b * z) throw std::invalid_argument("loss: noise must have B*z entries");
        z0 = reparametrize(post.mu, post.logvar, constant({b, z}, *noise));
    }
    std::vector<double> queries = batch.times;
    const auto reg_t = regression_times();
    queries.insert(queries.end(), reg_t.begin(), reg_t.end());
    const auto states = euler_integrate(z0, [this](const Tensor& s) { return field(s); }, queries,
                                        config_.euler_steps);

    const Tensor obs = ad::reshape(stack_states(states, 0, n), {b * n, z});
    const Tensor recon = ad::reshape(decode(obs), {b, n, d});
    const Tensor mask = ad::broadcast(constant({b, n, 1}, batch.mask), {b, n, d});
    const Tensor values = constant({b, n, d}, batch.values);
    const double inv_b = 1.0 / static_cast<double>(b);
    l.recon = ad::scale(ad::squared_error(recon * mask, values * mask), 0.5 * inv_b);
    l.kl = ad::scale(kl_standard_normal(post.mu, post.logvar), inv_b);

    const Tensor pred = regress_path(stack_states(states, n, states.size()));
    l.reg = ad::scale(ad::squared_error(pred, targets), 1.0 / static_cast<double>(b * p));
    l.total = l.recon + l.kl + ad::scale(l.reg, config_.lambda_reg);
    return l;
}

Losses LatentModel::loss(const Batch& batch, std::mt19937_64& rng) const {
    if (config_.baseline) return loss(batch, nullptr);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> noise(batch.size * config_.latent);
    for (auto& x : noise) x = n(rng);
    return loss(batch, &noise);
}

Tensor LatentModel::predict(const Batch& batch) const {
    if (config_.baseline) return regress_observations(batch);
    const auto post = encode(batch);
    const auto states = euler_integrate(post.mu, [this](const Tensor& s) { return field(s); }, regression_times(),
                                        config_.euler_steps);
    return regress_path(stack_states(states, 0, states.size()));
}

std::size_t matched_baseline_hidden(const LatentConfig& config) {
    const auto target = static_cast<double>(dynamic_count(config));
    std::size_t best = 1;
    double best_gap = std::abs(static_cast<double>(baseline_count(config, 1)) - target);
    for (std::size_t h = 2; h <= 8192; ++h) {
        const double gap = std::abs(static_cast<double>(baseline_count(config, h)) - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = h;
        }
        if (static_cast<double>(baseline_count(config, h)) > target) break;
    }
    return best;
}

TrainResult train(LatentModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    if (ids.empty()) throw std::invalid_argument("train: no training sequences");
    TrainResult result{{}, ad::Adam(model.parameters())};
    auto& adam = result.optimizer;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order = ids;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = ad::cosine_lr(epoch, config.epochs, config.lr);
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats{epoch, lr, 0.0, 0.0};
        std::size_t seen = 0;
        for (std::size_t start = 0, batch_id = 0; start < order.size(); start += config.batch_size, ++batch_id) {
            const std::vector<std::size_t> chunk(order.begin() + static_cast<long>(start),
                                                 order.begin() + static_cast<long>(std::min(order.size(), start + config.batch_size)));
            const Batch batch = make_batch(data, chunk);
            const Losses l = model.loss(batch, rng);
            const double total = l.total.item();
            if (!std::isfinite(total)) {
                std::ostringstream msg;
                msg << "train: non-finite loss " << total << " at epoch " << epoch << ", batch " << batch_id
                    << ", lr " << lr;
                throw std::runtime_error(msg.str());
            }
            adam.zero_grad();
            ad::backward(l.total);
            adam.step(lr, config.weight_decay);
            stats.elbo += l.elbo() * static_cast<double>(chunk.size());
            stats.reg_mse += l.reg.item() * static_cast<double>(chunk.size());
            seen += chunk.size();
        }
        stats.elbo /= static_cast<double>(seen);
        stats.reg_mse /= static_cast<double>(seen);
        result.history.push_back(stats);
        if (on_epoch && !on_epoch(stats)) break;
    }
    adam.zero_grad();
    return result;
}

metrics::Matrix predict(const LatentModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                        std::size_t batch_size) {
    metrics::Matrix out;
    for (std::size_t start = 0; start < ids.size(); start += batch_size) {
        const std::vector<std::size_t> chunk(ids.begin() + static_cast<long>(start),
                                             ids.begin() + static_cast<long>(std::min(ids.size(), start + batch_size)));
        const Batch batch = make_batch(data, chunk);
        const Tensor pred = model.predict(batch);
        const std::size_t p = batch.outputs;
        for (std::size_t i = 0; i < chunk.size(); ++i)
            out.emplace_back(pred.values().begin() + static_cast<long>(i * p),
                             pred.values().begin() + static_cast<long>((i + 1) * p));
    }
    return out;
}

}  // namespace npd::latent
