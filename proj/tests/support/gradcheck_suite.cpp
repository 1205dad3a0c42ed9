#include "gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "gradcheck.hpp"

namespace npd::testing {

namespace {

using ad::Shape;
using ad::Tensor;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                     bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::size_t extent(std::mt19937_64& rng) { return std::uniform_int_distribution<std::size_t>(1, 4)(rng); }

struct Case {
    std::string op;
    // Builds inputs and a scalar-valued closure for one trial.
    std::function<std::pair<std::vector<Tensor>, std::function<Tensor(std::vector<Tensor>&)>>(
        std::mt19937_64&)>
        make;
};

template <class F>
Case unary_case(std::string op, F f, double lo = -2.0, double hi = 2.0) {
    return {op, [f, lo, hi](std::mt19937_64& rng) {
                Shape s{extent(rng), extent(rng)};
                std::vector<Tensor> in{random_tensor(rng, s, lo, hi)};
                Tensor w = random_tensor(rng, s, -1.0, 1.0, false);
                std::function<Tensor(std::vector<Tensor>&)> fn = [f, w](std::vector<Tensor>& x) {
                    return ad::sum(ad::mul(f(x[0]), w));
                };
                return std::make_pair(in, fn);
            }};
}

std::vector<Case> cases() {
    std::vector<Case> c;
    c.push_back({"matmul", [](std::mt19937_64& rng) {
                     const auto m = extent(rng), k = extent(rng), n = extent(rng);
                     std::vector<Tensor> in{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
                     Tensor w = random_tensor(rng, {m, n}, -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn = [w](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(ad::matmul(x[0], x[1]), w));
                     };
                     return std::make_pair(in, fn);
                 }});
    for (bool tb : {false, true}) {
        c.push_back({tb ? "bmm_nt" : "bmm", [tb](std::mt19937_64& rng) {
                         const auto b = extent(rng), m = extent(rng), k = extent(rng), n = extent(rng);
                         std::vector<Tensor> in{random_tensor(rng, {b, m, k}),
                                                random_tensor(rng, tb ? Shape{b, n, k} : Shape{b, k, n})};
                         Tensor w = random_tensor(rng, {b, m, n}, -1, 1, false);
                         std::function<Tensor(std::vector<Tensor>&)> fn = [w, tb](std::vector<Tensor>& x) {
                             return ad::sum(ad::mul(ad::bmm(x[0], x[1], tb), w));
                         };
                         return std::make_pair(in, fn);
                     }});
    }
    auto binary = [](std::string op, std::function<Tensor(const Tensor&, const Tensor&)> f) {
        return Case{op, [f](std::mt19937_64& rng) {
                        Shape s{extent(rng), extent(rng)};
                        std::vector<Tensor> in{random_tensor(rng, s), random_tensor(rng, s)};
                        Tensor w = random_tensor(rng, s, -1, 1, false);
                        std::function<Tensor(std::vector<Tensor>&)> fn = [f, w](std::vector<Tensor>& x) {
                            return ad::sum(ad::mul(f(x[0], x[1]), w));
                        };
                        return std::make_pair(in, fn);
                    }};
    };
    c.push_back(binary("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); }));
    c.push_back(binary("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); }));
    c.push_back(binary("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); }));
    c.push_back(unary_case("scale", [](const Tensor& a) { return ad::scale(a, -1.7); }));
    c.push_back(unary_case("relu", [](const Tensor& a) { return ad::relu(a); }));
    c.push_back(unary_case("tanh", [](const Tensor& a) { return ad::tanh(a); }));
    c.push_back(unary_case("exp", [](const Tensor& a) { return ad::exp(a); }));
    c.push_back(unary_case("log", [](const Tensor& a) { return ad::log(a); }, 0.2, 3.0));
    c.push_back(unary_case("sin", [](const Tensor& a) { return ad::sin(a); }));
    c.push_back(unary_case("softmax", [](const Tensor& a) { return ad::softmax(a); }));
    c.push_back({"sum", [](std::mt19937_64& rng) {
                     std::vector<Tensor> in{random_tensor(rng, {extent(rng), extent(rng)})};
                     std::function<Tensor(std::vector<Tensor>&)> fn = [](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(x[0], x[0]));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"mean", [](std::mt19937_64& rng) {
                     std::vector<Tensor> in{random_tensor(rng, {extent(rng), extent(rng)})};
                     std::function<Tensor(std::vector<Tensor>&)> fn = [](std::vector<Tensor>& x) {
                         return ad::mean(ad::tanh(x[0]));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"mean_axis", [](std::mt19937_64& rng) {
                     Shape s{extent(rng), extent(rng), extent(rng)};
                     const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
                     std::vector<Tensor> in{random_tensor(rng, s)};
                     Tensor probe = ad::mean_axis(in[0], axis);
                     Tensor w = random_tensor(rng, probe.shape(), -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn = [w, axis](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(ad::mean_axis(x[0], axis), w));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"concat", [](std::mt19937_64& rng) {
                     const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
                     Shape a{extent(rng), extent(rng)}, b = a;
                     b[axis] = extent(rng);
                     std::vector<Tensor> in{random_tensor(rng, a), random_tensor(rng, b)};
                     Shape o = a;
                     o[axis] += b[axis];
                     Tensor w = random_tensor(rng, o, -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn = [w, axis](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(ad::concat({x[0], x[1]}, axis), w));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"slice", [](std::mt19937_64& rng) {
                     Shape s{extent(rng) + 1, extent(rng) + 1};
                     const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
                     const std::size_t begin = std::uniform_int_distribution<std::size_t>(0, s[axis] - 1)(rng);
                     const std::size_t end =
                         std::uniform_int_distribution<std::size_t>(begin + 1, s[axis])(rng);
                     std::vector<Tensor> in{random_tensor(rng, s)};
                     Tensor probe = ad::slice(in[0], axis, begin, end);
                     Tensor w = random_tensor(rng, probe.shape(), -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn =
                         [w, axis, begin, end](std::vector<Tensor>& x) {
                             return ad::sum(ad::mul(ad::slice(x[0], axis, begin, end), w));
                         };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"broadcast", [](std::mt19937_64& rng) {
                     Shape target{extent(rng), extent(rng), extent(rng)};
                     Shape src{target[1], target[2]};
                     if (rng() % 2) src[0] = 1;
                     if (rng() % 2) src[1] = 1;
                     std::vector<Tensor> in{random_tensor(rng, src)};
                     Tensor w = random_tensor(rng, target, -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn = [w, target](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(ad::broadcast(x[0], target), w));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"reshape", [](std::mt19937_64& rng) {
                     const auto m = extent(rng), n = extent(rng);
                     std::vector<Tensor> in{random_tensor(rng, {m, n})};
                     Tensor w = random_tensor(rng, {n, m}, -1, 1, false);
                     std::function<Tensor(std::vector<Tensor>&)> fn = [w, m, n](std::vector<Tensor>& x) {
                         return ad::sum(ad::mul(ad::reshape(x[0], {n, m}), w));
                     };
                     return std::make_pair(in, fn);
                 }});
    c.push_back({"squared_error", [](std::mt19937_64& rng) {
                     Shape s{extent(rng), extent(rng)};
                     std::vector<Tensor> in{random_tensor(rng, s), random_tensor(rng, s)};
                     std::function<Tensor(std::vector<Tensor>&)> fn = [](std::vector<Tensor>& x) {
                         return ad::squared_error(x[0], x[1]);
                     };
                     return std::make_pair(in, fn);
                 }});
    return c;
}

}  // namespace

std::vector<PrimitiveCheck> check_all_primitives(int trials, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::vector<PrimitiveCheck> out;
    for (const auto& c : cases()) {
        PrimitiveCheck pc{c.op, trials, 0.0};
        for (int t = 0; t < trials; ++t) {
            auto [inputs, fn] = c.make(rng);
            const auto r = grad_check(fn, inputs);
            pc.worst_rel_error = std::max(pc.worst_rel_error, r.max_rel_error);
        }
        out.push_back(pc);
    }
    return out;
}

}  // namespace npd::testing
