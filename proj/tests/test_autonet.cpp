#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sublora/autonet.hpp"
#include "sublora/rng.hpp"

using namespace sublora;

namespace {

bool close_rel(double a, double b, double rtol, double atol) {
    return std::fabs(a - b) <= rtol * std::max(std::fabs(a), std::fabs(b)) + atol;
}

MlpParams random_net(const std::vector<int>& widths, std::uint64_t seed) {
    return init_mlp(widths, seed);
}

EvalPoint pt2(double x1, double x2) {
    EvalPoint p;
    p.x1 = x1;
    p.x2 = x2;
    return p;
}

EvalPoint pt3(double x1, double x2, double t) {
    EvalPoint p;
    p.x1 = x1;
    p.x2 = x2;
    p.t = t;
    p.has_time = true;
    return p;
}

// Rank-2 adapter on a zero [2,1] network arranged so that
// u(1,1) = sigma_0 - sigma_1; the squared mismatch against -1 is then
// (sigma_0 - sigma_1 + 1)^2.
struct ToySurrogate {
    MlpParams params;
    std::vector<LoraSvdAdapter> adapters;
    EvalPoint point = pt2(1.0, 1.0);
    double target = -1.0;

    ToySurrogate() {
        params.widths = {2, 1};
        params.weights.emplace_back(1, 2);
        params.biases.emplace_back(1, 0.0);
        LoraSvdAdapter ad;
        ad.layer = 0;
        ad.u = Mat(1, 2);
        ad.u(0, 0) = 1.0;
        ad.u(0, 1) = -1.0;
        ad.v = Mat(2, 2);
        ad.v(0, 0) = 1.0;
        ad.v(1, 1) = 1.0;
        ad.sigma = {1.0, 2.1};
        ad.active = {1, 1};
        adapters.push_back(std::move(ad));
    }

    double loss(const Vec& sigma) {
        adapters[0].sigma = sigma;
        const double d = forward(params, adapters, point) - target;
        return d * d;
    }

    Vec grad(const Vec& sigma) {
        adapters[0].sigma = sigma;
        const EffectiveNet net = make_effective(params, adapters);
        ValueCache cache;
        forward_values(net, std::span<const EvalPoint>(&point, 1), cache);
        GradBuffers grads;
        grads.init(params, {1}, false);
        const Vec w{2.0 * (cache.u[0] - target)};
        backward_values(net, cache, w, grads);
        return project_lora_grads(grads, adapters).gsigma[0];
    }
};

}  // namespace

TEST_CASE("effective weights identities") {
    const MlpParams params = random_net({2, 5, 1}, 11);
    auto adapters = init_lora(params, {0}, 2, 3);

    SUBCASE("sigma zero leaves the base weights") {
        const auto w = effective_weights(params, adapters);
        CHECK(w[0].a == params.weights[0].a);
        CHECK(w[1].a == params.weights[1].a);
    }

    SUBCASE("rank-one unit construction hits a single entry") {
        adapters[0].u.zero();
        adapters[0].v.zero();
        adapters[0].u(0, 0) = 1.0;
        adapters[0].v(0, 0) = 1.0;
        adapters[0].sigma = {3.0, 0.0};
        const auto w = effective_weights(params, adapters);
        CHECK(w[0](0, 0) == doctest::Approx(params.weights[0](0, 0) + 3.0));
        CHECK(w[0](1, 1) == params.weights[0](1, 1));
    }

    SUBCASE("dense recomputation of U diag(sigma o mask) V") {
        Rng rng(5);
        for (double& s : adapters[0].sigma) s = rng.gaussian();
        adapters[0].active = {1, 0};
        const auto w = effective_weights(params, adapters);
        const auto& ad = adapters[0];
        const Vec ms = ad.masked_sigma();
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 2; ++j) {
                double delta = 0.0;
                for (int k = 0; k < 2; ++k)
                    delta += ad.u(i, k) * ms[static_cast<size_t>(k)] * ad.v(k, j);
                CHECK(std::fabs(w[0](i, j) - params.weights[0](i, j) - delta) <= 1e-12);
            }
    }
}

TEST_CASE("lora initialization") {
    const MlpParams params = random_net({2, 8, 8, 1}, 21);
    const auto a1 = init_lora(params, {1}, 4, 9);
    const auto a2 = init_lora(params, {1}, 4, 9);
    CHECK(a1[0].u.a == a2[0].u.a);
    CHECK(a1[0].v.a == a2[0].v.a);
    CHECK(a1[0].sigma == Vec{0.0, 0.0, 0.0, 0.0});

    // starts exactly at the base network
    Rng rng(2);
    for (int k = 0; k < 10; ++k) {
        const EvalPoint p = pt2(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
        CHECK(forward(params, a1, p) == forward(params, {}, p));
    }

    const auto empty = init_lora(params, {1}, 0, 9);
    CHECK(empty[0].rank() == 0);
    CHECK(forward(params, empty, pt2(0.3, -0.2)) == forward(params, {}, pt2(0.3, -0.2)));

    CHECK_THROWS_AS(init_lora(params, {1}, 9, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_lora(params, {7}, 2, 0), std::invalid_argument);
}

TEST_CASE("forward basics") {
    MlpParams zero;
    zero.widths = {2, 4, 1};
    zero.weights = {Mat(4, 2), Mat(1, 4)};
    zero.biases = {Vec(4, 0.0), Vec(1, 0.0)};
    CHECK(forward(zero, {}, pt2(0.4, -0.9)) == 0.0);

    MlpParams lin;
    lin.widths = {2, 1};
    lin.weights.emplace_back(1, 2);
    lin.weights[0](0, 0) = 1.0;
    lin.weights[0](0, 1) = 2.0;
    lin.biases.emplace_back(1, 0.0);
    CHECK(forward(lin, {}, pt2(3.0, 4.0)) == doctest::Approx(11.0));

    CHECK_THROWS_AS(forward(lin, {}, pt3(0.0, 0.0, 0.5)), std::invalid_argument);
}

TEST_CASE("mask equivalence: masked forward equals zeroed-sigma forward") {
    const MlpParams params = random_net({3, 7, 6, 1}, 33);
    auto masked = init_lora(params, {0, 1}, 3, 4);
    Rng rng(6);
    for (auto& ad : masked)
        for (double& s : ad.sigma) s = rng.gaussian();
    masked[0].active = {1, 0, 1};
    masked[1].active = {0, 1, 0};
    auto zeroed = masked;
    for (auto& ad : zeroed) {
        ad.sigma = ad.masked_sigma();
        std::fill(ad.active.begin(), ad.active.end(), std::uint8_t{1});
    }
    for (int k = 0; k < 10; ++k) {
        const EvalPoint p = pt3(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform());
        CHECK(forward(params, masked, p) == forward(params, zeroed, p));
    }
}

TEST_CASE("input derivatives: linear and single-tanh closed forms") {
    MlpParams lin;
    lin.widths = {2, 1};
    lin.weights.emplace_back(1, 2);
    lin.weights[0](0, 0) = 1.5;
    lin.weights[0](0, 1) = -0.5;
    lin.biases.emplace_back(1, 2.0);
    const FieldDerivs f = input_derivatives(lin, {}, pt2(0.3, 0.4));
    CHECK(f.u == doctest::Approx(1.5 * 0.3 - 0.5 * 0.4 + 2.0));
    CHECK(f.gx == 1.5);
    CHECK(f.gy == -0.5);
    CHECK(f.lap == 0.0);
    CHECK_THROWS_AS(f.ut(), std::invalid_argument);

    // u(x) = tanh(x1)
    MlpParams tnet;
    tnet.widths = {2, 1, 1};
    tnet.weights.emplace_back(1, 2);
    tnet.weights[0](0, 0) = 1.0;
    tnet.weights.emplace_back(1, 1);
    tnet.weights[1](0, 0) = 1.0;
    tnet.biases = {Vec(1, 0.0), Vec(1, 0.0)};
    const FieldDerivs at0 = input_derivatives(tnet, {}, pt2(0.0, 0.7));
    CHECK(std::fabs(at0.lap) <= 1e-15);
    const FieldDerivs at05 = input_derivatives(tnet, {}, pt2(0.5, -0.3));
    const double th = std::tanh(0.5);
    CHECK(at05.u == doctest::Approx(th).epsilon(1e-12));
    CHECK(at05.gx == doctest::Approx(1.0 - th * th).epsilon(1e-12));
    CHECK(at05.lap == doctest::Approx(-2.0 * th * (1.0 - th * th)).epsilon(1e-12));
}

TEST_CASE("input derivatives match central finite differences") {
    Rng rng(77);
    const double h = 1e-4;
    for (int trial = 0; trial < 20; ++trial) {
        const bool timed = trial % 2 == 1;
        const std::vector<int> widths =
            timed ? std::vector<int>{3, 9, 7, 1} : std::vector<int>{2, 8, 8, 1};
        const MlpParams params = random_net(widths, 1000 + trial);
        auto adapters = init_lora(params, {1}, 3, 50 + trial);
        for (double& s : adapters[0].sigma) s = 0.3 * rng.gaussian();

        const EvalPoint p = timed
                                ? pt3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(0.2, 0.8))
                                : pt2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
        const FieldDerivs f = input_derivatives(params, adapters, p);
        auto eval = [&](double dx, double dy, double dt) {
            EvalPoint q = p;
            q.x1 += dx;
            q.x2 += dy;
            q.t += dt;
            return forward(params, adapters, q);
        };
        const double u0 = eval(0, 0, 0);
        CHECK(close_rel(f.u, u0, 1e-12, 1e-12));
        CHECK(close_rel(f.gx, (eval(h, 0, 0) - eval(-h, 0, 0)) / (2 * h), 1e-6, 1e-8));
        CHECK(close_rel(f.gy, (eval(0, h, 0) - eval(0, -h, 0)) / (2 * h), 1e-6, 1e-8));
        const double uxx = (eval(h, 0, 0) - 2 * u0 + eval(-h, 0, 0)) / (h * h);
        const double uyy = (eval(0, h, 0) - 2 * u0 + eval(0, -h, 0)) / (h * h);
        CHECK(close_rel(f.lap, uxx + uyy, 1e-6, 1e-6));
        if (timed) {
            CHECK(close_rel(f.ut(), (eval(0, 0, h) - eval(0, 0, -h)) / (2 * h), 1e-6, 1e-8));
            const double utt = (eval(0, 0, h) - 2 * u0 + eval(0, 0, -h)) / (h * h);
            CHECK(close_rel(f.utt(), utt, 1e-6, 1e-6));
        }
    }
}

TEST_CASE("engine gradients match finite differences of the weighted outputs") {
    // J = sum_p wa u + wb u' + wc u'' for one direction at a time.
    Rng rng(31415);
    for (int trial = 0; trial < 6; ++trial) {
        const std::vector<int> widths{2, 6, 5, 1};
        MlpParams params = random_net(widths, 400 + trial);
        std::vector<EvalPoint> pts;
        for (int k = 0; k < 5; ++k) pts.push_back(pt2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)));
        Vec wa(pts.size()), wb(pts.size()), wc(pts.size());
        for (size_t k = 0; k < pts.size(); ++k) {
            wa[k] = rng.gaussian();
            wb[k] = rng.gaussian();
            wc[k] = rng.gaussian();
        }
        const int dir = trial % 2;

        auto value = [&](const MlpParams& ps) {
            const EffectiveNet net = make_effective(ps, {});
            Dual2Cache cache;
            forward_dual2(net, pts, dir, cache);
            double j = 0.0;
            for (size_t k = 0; k < pts.size(); ++k)
                j += wa[k] * cache.u[k] + wb[k] * cache.ud[k] + wc[k] * cache.udd[k];
            return j;
        };

        const EffectiveNet net = make_effective(params, {});
        Dual2Cache cache;
        forward_dual2(net, pts, dir, cache);
        GradBuffers grads;
        grads.init(params, std::vector<std::uint8_t>(params.weights.size(), 1), true);
        backward_dual2(net, cache, wa, wb, wc, grads);

        const double h = 1e-5;
        for (size_t l = 0; l < params.weights.size(); ++l) {
            for (size_t k = 0; k < params.weights[l].a.size(); k += 3) {
                const double orig = params.weights[l].a[k];
                params.weights[l].a[k] = orig + h;
                const double jp = value(params);
                params.weights[l].a[k] = orig - h;
                const double jm = value(params);
                params.weights[l].a[k] = orig;
                CHECK(close_rel(grads.gw[l].a[k], (jp - jm) / (2 * h), 1e-5, 1e-7));
            }
            for (size_t k = 0; k < params.biases[l].size(); ++k) {
                const double orig = params.biases[l][k];
                params.biases[l][k] = orig + h;
                const double jp = value(params);
                params.biases[l][k] = orig - h;
                const double jm = value(params);
                params.biases[l][k] = orig;
                CHECK(close_rel(grads.gb[l][k], (jp - jm) / (2 * h), 1e-5, 1e-7));
            }
        }
    }
}

TEST_CASE("quadratic probe: gradient of half the squared outputs over unit inputs") {
    MlpParams lin;
    lin.widths = {2, 1};
    lin.weights.emplace_back(1, 2);
    lin.weights[0](0, 0) = 0.8;
    lin.weights[0](0, 1) = -1.3;
    lin.biases.emplace_back(1, 0.0);
    const std::vector<EvalPoint> pts{pt2(1.0, 0.0), pt2(0.0, 1.0)};
    const EffectiveNet net = make_effective(lin, {});
    ValueCache cache;
    forward_values(net, pts, cache);
    GradBuffers grads;
    grads.init(lin, {1}, false);
    backward_values(net, cache, cache.u, grads);  // d(1/2 u^2)/du = u
    CHECK(grads.gw[0](0, 0) == doctest::Approx(0.8));
    CHECK(grads.gw[0](0, 1) == doctest::Approx(-1.3));
}

TEST_CASE("toy surrogate sigma gradient and hessian") {
    ToySurrogate toy;
    const Vec g = toy.grad({1.0, 2.1});
    CHECK(g[0] == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.2).epsilon(1e-12));

    const FdHessianResult h =
        fd_hessian([&](const Vec& s) { return toy.grad(s); }, {1.0, 2.1}, 1e-3);
    CHECK(std::fabs(h.hess(0, 0) - 2.0) <= 1e-6);
    CHECK(std::fabs(h.hess(1, 1) - 2.0) <= 1e-6);
    CHECK(std::fabs(h.hess(0, 1) + 2.0) <= 1e-6);
    CHECK(h.asymmetry <= 1e-8);
}

TEST_CASE("fd hessian recovers synthetic quadratics") {
    Rng rng(64);
    const int n = 6;
    Mat a(n, n);
    for (int i = 0; i < n; ++i) {
        a(i, i) = rng.uniform(0.5, 2.0);
        for (int j = i + 1; j < n; ++j) {
            const double v = rng.uniform(-1.0, 1.0);
            a(i, j) = v;
            a(j, i) = v;
        }
    }
    Vec g0(n);
    for (double& v : g0) v = rng.gaussian();
    // grad of 1/2 s^T A s + g0^T s
    auto grad = [&](const Vec& s) {
        Vec out = matvec(a, s);
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] += g0[static_cast<size_t>(i)];
        return out;
    };
    Vec sigma(n);
    for (double& v : sigma) v = rng.gaussian();
    const FdHessianResult res = fd_hessian(grad, sigma, 1e-3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) CHECK(std::fabs(res.hess(i, j) - a(i, j)) <= 1e-6);

    // purely linear loss: zero matrix
    const FdHessianResult lin = fd_hessian(
        [&](const Vec&) { return g0; }, sigma, 1e-3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) CHECK(std::fabs(lin.hess(i, j)) <= 1e-8);
}

TEST_CASE("masked sigma entries report the unmasked-loss gradient at zero") {
    ToySurrogate toy;
    toy.adapters[0].sigma = {1.0, 2.1};
    toy.adapters[0].active = {1, 0};  // entry 1 inactive
    const EffectiveNet net = make_effective(toy.params, toy.adapters);
    ValueCache cache;
    forward_values(net, std::span<const EvalPoint>(&toy.point, 1), cache);
    GradBuffers grads;
    grads.init(toy.params, {1}, false);
    const Vec w{2.0 * (cache.u[0] - toy.target)};
    backward_values(net, cache, w, grads);
    const Vec g = project_lora_grads(grads, toy.adapters).gsigma[0];

    // finite differences of the unmasked loss at sigma = (1, 0)
    ToySurrogate fd;
    const double h = 1e-6;
    const double d1 = (fd.loss({1.0 + h, 0.0}) - fd.loss({1.0 - h, 0.0})) / (2 * h);
    const double d2 = (fd.loss({1.0, h}) - fd.loss({1.0, -h})) / (2 * h);
    CHECK(close_rel(g[0], d1, 1e-6, 1e-9));
    CHECK(close_rel(g[1], d2, 1e-6, 1e-9));
}

TEST_CASE("sigma index map") {
    const MlpParams params = random_net({2, 6, 6, 6, 1}, 3);
    auto adapters = init_lora(params, {1, 2}, 3, 4);
    const SigmaIndexMap map = SigmaIndexMap::build(adapters);
    CHECK(map.total() == 6);
    CHECK(map.entries[0] == std::pair<int, int>{0, 0});
    CHECK(map.entries[5] == std::pair<int, int>{1, 2});
    Vec sigma{1, 2, 3, 4, 5, 6};
    map.scatter(sigma, adapters);
    CHECK(adapters[1].sigma == Vec{4, 5, 6});
    CHECK(map.gather(adapters) == sigma);
    const auto counts = map.per_layer_counts(std::vector<int>{0, 2, 3, 5});
    CHECK(counts == std::vector<int>{2, 2});
}

TEST_CASE("checkpoint round trip is bit-exact") {
    namespace fs = std::filesystem;
    const MlpParams params = random_net({2, 5, 4, 1}, 123);
    auto adapters = init_lora(params, {1}, 2, 5);
    adapters[0].sigma = {0.25, -1.5};
    adapters[0].active = {1, 0};
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.adapters = adapters;
    ckpt.seed = 99;
    ckpt.metadata = {{"phase", "test"}, {"final_loss", 0.125}};

    const std::string stem = (fs::temp_directory_path() / "sublora_ckpt_test").string();
    save_checkpoint(stem, ckpt);
    const Checkpoint back = load_checkpoint(stem);
    CHECK(back.params.widths == params.widths);
    for (size_t l = 0; l < params.weights.size(); ++l) {
        CHECK(back.params.weights[l].a == params.weights[l].a);
        CHECK(back.params.biases[l] == params.biases[l]);
    }
    REQUIRE(back.adapters.size() == 1);
    CHECK(back.adapters[0].layer == 1);
    CHECK(back.adapters[0].u.a == adapters[0].u.a);
    CHECK(back.adapters[0].v.a == adapters[0].v.a);
    CHECK(back.adapters[0].sigma == adapters[0].sigma);
    CHECK(back.adapters[0].active == adapters[0].active);
    CHECK(back.seed == 99);
    CHECK(back.metadata.at("final_loss") == 0.125);
    fs::remove(stem + ".json");
    fs::remove(stem + ".bin");
}

TEST_CASE("identical seeds give identical networks") {
    const MlpParams a = init_mlp({2, 16, 16, 1}, 7);
    const MlpParams b = init_mlp({2, 16, 16, 1}, 7);
    for (size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l].a == b.weights[l].a);
    const MlpParams c = init_mlp({2, 16, 16, 1}, 8);
    CHECK(a.weights[0].a != c.weights[0].a);
}
