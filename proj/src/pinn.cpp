#include "sublora/pinn.hpp"

#include <algorithm>
#include <cmath>

#include "sublora/rng.hpp"
#include "sublora/threading.hpp"

namespace sublora {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

// Spatial profile shared by all families:
//   U(rho) = sin(c1 s^2.5) + lambda2 sin(c2 s),  s = 1 - rho, c1 = pi lambda1 / 2, c2 = pi / 2.
// Derivatives in rho (ds/drho = -1):
//   U'  = -2.5 c1 s^1.5 cos(c1 s^2.5) - lambda2 c2 cos(c2 s)
//   U'' = 3.75 c1 s^0.5 cos(c1 s^2.5) - 6.25 c1^2 s^3 sin(c1 s^2.5) - lambda2 c2^2 sin(c2 s)
// U'' is continuous on [0,1]; third derivatives blow up at rho = 1.
struct RadialProfile {
    double value;
    double d1;
    double d2;
};

RadialProfile radial_profile(const PdeProblem& p, double rho) {
    const double c1 = 0.5 * kPi * p.lambda1;
    const double c2 = 0.5 * kPi;
    const double s = std::max(0.0, 1.0 - rho);  // clamp rounding spill at the boundary
    const double s05 = std::sqrt(s);
    const double s15 = s * s05;
    const double s25 = s * s15;
    const double a1 = c1 * s25;
    const double a2 = c2 * s;
    RadialProfile r;
    r.value = std::sin(a1) + p.lambda2 * std::sin(a2);
    r.d1 = -2.5 * c1 * s15 * std::cos(a1) - p.lambda2 * c2 * std::cos(a2);
    r.d2 = 3.75 * c1 * s05 * std::cos(a1) - 6.25 * c1 * c1 * s * s * s * std::sin(a1) -
           p.lambda2 * c2 * c2 * std::sin(a2);
    return r;
}

// Radial Laplacian in R^2: U'' + U'/rho, with the rho -> 0 limit 2 U''(0).
double radial_laplacian(const RadialProfile& r, double rho) {
    if (rho < 1e-12) return 2.0 * r.d2;
    return r.d2 + r.d1 / rho;
}

double rho_of(const EvalPoint& pt) { return std::hypot(pt.x1, pt.x2); }

void check_in_domain(const PdeProblem& p, const EvalPoint& pt) {
    require_arg(rho_of(pt) <= 1.0 + 1e-12, "point outside the unit disk");
    if (p.time_dependent()) {
        require_arg(pt.has_time, "time-dependent problem needs a time coordinate");
        require_arg(pt.t >= -1e-12 && pt.t <= 1.0 + 1e-12, "time outside [0,1]");
    } else {
        require_arg(!pt.has_time, "stationary problem given a time coordinate");
    }
}

struct TimeFactor {
    double value;  // T(t)
    double d1;     // T'
    double d2;     // T''
};

TimeFactor time_factor(const PdeProblem& p, double t) {
    switch (p.family) {
        case PdeFamily::Elliptic:
            return {1.0, 0.0, 0.0};
        case PdeFamily::AllenCahn: {
            const double e = std::exp(-t);
            return {e, -e, e};
        }
        case PdeFamily::Hyperbolic: {
            const double e = std::exp(t * t);
            return {e - 1.0, 2.0 * t * e, (2.0 + 4.0 * t * t) * e};
        }
    }
    return {1.0, 0.0, 0.0};
}

}  // namespace

std::string family_name(PdeFamily f) {
    switch (f) {
        case PdeFamily::Elliptic: return "elliptic";
        case PdeFamily::AllenCahn: return "allen_cahn";
        case PdeFamily::Hyperbolic: return "hyperbolic";
    }
    return "?";
}

PdeFamily family_from_name(const std::string& name) {
    if (name == "elliptic") return PdeFamily::Elliptic;
    if (name == "allen_cahn") return PdeFamily::AllenCahn;
    if (name == "hyperbolic") return PdeFamily::Hyperbolic;
    throw std::invalid_argument("unknown PDE family: " + name);
}

double exact_solution(const PdeProblem& problem, const EvalPoint& point) {
    check_in_domain(problem, point);
    const RadialProfile r = radial_profile(problem, rho_of(point));
    return time_factor(problem, point.t).value * r.value;
}

double forcing(const PdeProblem& problem, const EvalPoint& point) {
    check_in_domain(problem, point);
    const double rho = rho_of(point);
    require_arg(rho < 1.0, "forcing requires a strictly interior point");
    const RadialProfile r = radial_profile(problem, rho);
    const double lap_rho = radial_laplacian(r, rho);
    double g = 0.0;
    switch (problem.family) {
        case PdeFamily::Elliptic: {
            // g = -(1 + rho^2/2)(U'' + U'/rho) - rho U' + (U')^2
            // from -div(a grad u) = -a lap(u) - grad(a).grad(u), grad(a) = x.
            const double a = 1.0 + 0.5 * rho * rho;
            g = -a * lap_rho - rho * r.d1 + r.d1 * r.d1;
            break;
        }
        case PdeFamily::AllenCahn: {
            // u = e^{-t} U: du/dt + u = 0, so g = -e^{-t} lap_rho - e^{-3t} U^3.
            const double tau = std::exp(-point.t);
            g = -tau * lap_rho - tau * tau * tau * r.value * r.value * r.value;
            break;
        }
        case PdeFamily::Hyperbolic: {
            // u = T(t) U: g = T'' U - T lap_rho.
            const TimeFactor tf = time_factor(problem, point.t);
            g = tf.d2 * r.value - tf.value * lap_rho;
            break;
        }
    }
    if (!std::isfinite(g)) throw NumericError("non-finite forcing value");
    return g;
}

double boundary_value(const PdeProblem& problem, const EvalPoint& point) {
    return exact_solution(problem, point);
}

double initial_value(const PdeProblem& problem, const EvalPoint& point) {
    require_arg(problem.time_dependent(), "initial data exists only for time-dependent families");
    EvalPoint p0 = point;
    p0.t = 0.0;
    return exact_solution(problem, p0);
}

double initial_velocity(const PdeProblem& problem, const EvalPoint& point) {
    require_arg(problem.family == PdeFamily::Hyperbolic,
                "initial velocity exists only for the hyperbolic family");
    check_in_domain(problem, point);
    const RadialProfile r = radial_profile(problem, rho_of(point));
    return time_factor(problem, 0.0).d1 * r.value;  // = 0: T'(0) = 0
}

PointSets sample_points(const PdeProblem& problem, const PointCounts& counts, std::uint64_t seed) {
    require_arg(counts.interior >= 0 && counts.boundary >= 0 && counts.test >= 0,
                "point counts must be nonnegative");
    Rng rng(mix_seed(seed, 0x9017));
    const bool timed = problem.time_dependent();
    PointSets sets;

    auto disk_point = [&](Region region, bool at_t0) {
        EvalPoint pt;
        const double radius = std::sqrt(rng.uniform());
        const double theta = 2.0 * kPi * rng.uniform();
        pt.x1 = radius * std::cos(theta);
        pt.x2 = radius * std::sin(theta);
        pt.has_time = timed;
        if (timed) pt.t = at_t0 ? 0.0 : rng.uniform();
        pt.region = region;
        return pt;
    };

    sets.interior.reserve(static_cast<size_t>(counts.interior));
    for (int i = 0; i < counts.interior; ++i) sets.interior.push_back(disk_point(Region::Interior, false));

    sets.boundary.reserve(static_cast<size_t>(counts.boundary));
    for (int i = 0; i < counts.boundary; ++i) {
        EvalPoint pt;
        const double theta = 2.0 * kPi * rng.uniform();
        pt.x1 = std::cos(theta);
        pt.x2 = std::sin(theta);
        pt.has_time = timed;
        if (timed) pt.t = rng.uniform();
        pt.region = Region::Boundary;
        sets.boundary.push_back(pt);
    }

    if (timed) {
        sets.initial.reserve(static_cast<size_t>(counts.boundary));
        for (int i = 0; i < counts.boundary; ++i) sets.initial.push_back(disk_point(Region::Initial, true));
    }

    sets.test.reserve(static_cast<size_t>(counts.test));
    sets.test_values.reserve(static_cast<size_t>(counts.test));
    for (int i = 0; i < counts.test; ++i) {
        const EvalPoint pt = disk_point(Region::Interior, false);
        sets.test.push_back(pt);
        sets.test_values.push_back(exact_solution(problem, pt));
    }
    return sets;
}

double pde_residual(const FieldDerivs& fields, const PdeProblem& problem, const EvalPoint& point) {
    check_in_domain(problem, point);
    require_arg(fields.has_time() == problem.time_dependent(),
                "field derivatives do not match the problem family");
    const double g = forcing(problem, point);
    switch (problem.family) {
        case PdeFamily::Elliptic: {
            const double a = 1.0 + 0.5 * (point.x1 * point.x1 + point.x2 * point.x2);
            return -a * fields.lap - (point.x1 * fields.gx + point.x2 * fields.gy) +
                   (fields.gx * fields.gx + fields.gy * fields.gy) - g;
        }
        case PdeFamily::AllenCahn:
            return fields.ut() - fields.lap - fields.u * fields.u * fields.u + fields.u - g;
        case PdeFamily::Hyperbolic:
            return fields.utt() - fields.lap - g;
    }
    return 0.0;
}

double pde_residual(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
                    const PdeProblem& problem, const EvalPoint& point) {
    return pde_residual(input_derivatives(params, adapters, point), problem, point);
}

namespace {

constexpr int kBlock = 128;

struct BlockTask {
    enum Kind { InteriorK, BoundaryK, InitialK } kind;
    int begin;
    int end;
};

LossParts interior_block(const EffectiveNet& net, const PdeProblem& problem,
                         std::span<const EvalPoint> pts, double mu_over_n, GradBuffers* grads) {
    const int dirs = net.input_dim();
    const int n = static_cast<int>(pts.size());
    static thread_local std::vector<Dual2Cache> caches;
    caches.resize(static_cast<size_t>(dirs));
    for (int d = 0; d < dirs; ++d) forward_dual2(net, pts, d, caches[static_cast<size_t>(d)]);

    LossParts parts;
    static thread_local std::vector<Vec> wa, wb, wc;
    if (grads) {
        wa.resize(static_cast<size_t>(dirs));
        wb.resize(static_cast<size_t>(dirs));
        wc.resize(static_cast<size_t>(dirs));
        for (int d = 0; d < dirs; ++d) {
            wa[static_cast<size_t>(d)].assign(static_cast<size_t>(n), 0.0);
            wb[static_cast<size_t>(d)].assign(static_cast<size_t>(n), 0.0);
            wc[static_cast<size_t>(d)].assign(static_cast<size_t>(n), 0.0);
        }
    }
    for (int p = 0; p < n; ++p) {
        const EvalPoint& pt = pts[static_cast<size_t>(p)];
        const double u = caches[0].u[static_cast<size_t>(p)];
        const double gx = caches[0].ud[static_cast<size_t>(p)];
        const double gy = caches[1].ud[static_cast<size_t>(p)];
        const double lap = caches[0].udd[static_cast<size_t>(p)] + caches[1].udd[static_cast<size_t>(p)];
        const double g = forcing(problem, pt);
        double res = 0.0;
        switch (problem.family) {
            case PdeFamily::Elliptic: {
                const double a = 1.0 + 0.5 * (pt.x1 * pt.x1 + pt.x2 * pt.x2);
                res = -a * lap - (pt.x1 * gx + pt.x2 * gy) + (gx * gx + gy * gy) - g;
                if (grads) {
                    const double w = 2.0 * mu_over_n * res;
                    wb[0][static_cast<size_t>(p)] = w * (-pt.x1 + 2.0 * gx);
                    wb[1][static_cast<size_t>(p)] = w * (-pt.x2 + 2.0 * gy);
                    wc[0][static_cast<size_t>(p)] = -w * a;
                    wc[1][static_cast<size_t>(p)] = -w * a;
                }
                break;
            }
            case PdeFamily::AllenCahn: {
                const double ut = caches[2].ud[static_cast<size_t>(p)];
                res = ut - lap - u * u * u + u - g;
                if (grads) {
                    const double w = 2.0 * mu_over_n * res;
                    wa[0][static_cast<size_t>(p)] = w * (1.0 - 3.0 * u * u);
                    wc[0][static_cast<size_t>(p)] = -w;
                    wc[1][static_cast<size_t>(p)] = -w;
                    wb[2][static_cast<size_t>(p)] = w;
                }
                break;
            }
            case PdeFamily::Hyperbolic: {
                const double utt = caches[2].udd[static_cast<size_t>(p)];
                res = utt - lap - g;
                if (grads) {
                    const double w = 2.0 * mu_over_n * res;
                    wc[0][static_cast<size_t>(p)] = -w;
                    wc[1][static_cast<size_t>(p)] = -w;
                    wc[2][static_cast<size_t>(p)] = w;
                }
                break;
            }
        }
        parts.interior += res * res;
    }
    if (grads)
        for (int d = 0; d < dirs; ++d)
            backward_dual2(net, caches[static_cast<size_t>(d)], wa[static_cast<size_t>(d)],
                           wb[static_cast<size_t>(d)], wc[static_cast<size_t>(d)], *grads);
    return parts;
}

LossParts boundary_block(const EffectiveNet& net, const PdeProblem& problem,
                         std::span<const EvalPoint> pts, double mu_b_over_nb, GradBuffers* grads) {
    const int n = static_cast<int>(pts.size());
    static thread_local ValueCache cache;
    forward_values(net, pts, cache);
    LossParts parts;
    static thread_local Vec w;
    if (grads) w.assign(static_cast<size_t>(n), 0.0);
    for (int p = 0; p < n; ++p) {
        const double m = cache.u[static_cast<size_t>(p)] -
                         boundary_value(problem, pts[static_cast<size_t>(p)]);
        parts.boundary += m * m;
        if (grads) w[static_cast<size_t>(p)] = 2.0 * mu_b_over_nb * m;
    }
    if (grads) backward_values(net, cache, w, *grads);
    return parts;
}

LossParts initial_block(const EffectiveNet& net, const PdeProblem& problem,
                        std::span<const EvalPoint> pts, double mu_b_over_ni, GradBuffers* grads) {
    const int n = static_cast<int>(pts.size());
    LossParts parts;
    if (problem.family == PdeFamily::AllenCahn) {
        static thread_local ValueCache cache;
        forward_values(net, pts, cache);
        static thread_local Vec w;
        if (grads) w.assign(static_cast<size_t>(n), 0.0);
        for (int p = 0; p < n; ++p) {
            const double m = cache.u[static_cast<size_t>(p)] -
                             initial_value(problem, pts[static_cast<size_t>(p)]);
            parts.initial += m * m;
            if (grads) w[static_cast<size_t>(p)] = 2.0 * mu_b_over_ni * m;
        }
        if (grads) backward_values(net, cache, w, *grads);
    } else {
        // Hyperbolic: value and velocity mismatches from one time-direction pass.
        static thread_local Dual2Cache cache;
        forward_dual2(net, pts, 2, cache);
        static thread_local Vec wa, wb, wc;
        if (grads) {
            wa.assign(static_cast<size_t>(n), 0.0);
            wb.assign(static_cast<size_t>(n), 0.0);
            wc.assign(static_cast<size_t>(n), 0.0);
        }
        for (int p = 0; p < n; ++p) {
            const EvalPoint& pt = pts[static_cast<size_t>(p)];
            const double m = cache.u[static_cast<size_t>(p)] - initial_value(problem, pt);
            const double mv = cache.ud[static_cast<size_t>(p)] - initial_velocity(problem, pt);
            parts.initial += m * m;
            parts.velocity += mv * mv;
            if (grads) {
                wa[static_cast<size_t>(p)] = 2.0 * mu_b_over_ni * m;
                wb[static_cast<size_t>(p)] = 2.0 * mu_b_over_ni * mv;
            }
        }
        if (grads) backward_dual2(net, cache, wa, wb, wc, *grads);
    }
    return parts;
}

}  // namespace

LossParts pinn_loss(const EffectiveNet& net, const PdeProblem& problem, const PointSets& sets,
                    const LossWeights& weights, GradBuffers* grads) {
    weights.validate();
    require_arg(!sets.interior.empty(), "interior point set must be nonempty");
    const double mu_over_n = weights.mu / static_cast<double>(sets.interior.size());
    const double mu_b_over_nb =
        sets.boundary.empty() ? 0.0 : weights.mu_b / static_cast<double>(sets.boundary.size());
    const double mu_b_over_ni =
        sets.initial.empty() ? 0.0 : weights.mu_b / static_cast<double>(sets.initial.size());

    std::vector<BlockTask> tasks;
    auto add_tasks = [&](BlockTask::Kind kind, int count) {
        for (int b = 0; b < count; b += kBlock)
            tasks.push_back({kind, b, std::min(b + kBlock, count)});
    };
    add_tasks(BlockTask::InteriorK, static_cast<int>(sets.interior.size()));
    add_tasks(BlockTask::BoundaryK, static_cast<int>(sets.boundary.size()));
    add_tasks(BlockTask::InitialK, static_cast<int>(sets.initial.size()));

    // Per-task output slots, merged in task order after the parallel
    // section; storage is reused across calls on the driving thread. The
    // local references are what the worker lambda captures (a bare
    // thread_local name would resolve to each worker's own instance).
    static thread_local std::vector<LossParts> part_slots_tls;
    static thread_local std::vector<GradBuffers> grad_slots_tls;
    std::vector<LossParts>& part_slots = part_slots_tls;
    std::vector<GradBuffers>& grad_slots = grad_slots_tls;
    part_slots.assign(tasks.size(), LossParts{});
    if (grads) {
        grad_slots.resize(tasks.size());
        for (auto& g : grad_slots) g.init(*net.base, grads->want_w, grads->want_b);
    }

    parallel_blocks(static_cast<int>(tasks.size()), [&](int ti) {
        const BlockTask& t = tasks[static_cast<size_t>(ti)];
        GradBuffers* gslot = grads ? &grad_slots[static_cast<size_t>(ti)] : nullptr;
        switch (t.kind) {
            case BlockTask::InteriorK:
                part_slots[static_cast<size_t>(ti)] = interior_block(
                    net, problem,
                    std::span<const EvalPoint>(sets.interior).subspan(
                        static_cast<size_t>(t.begin), static_cast<size_t>(t.end - t.begin)),
                    mu_over_n, gslot);
                break;
            case BlockTask::BoundaryK:
                part_slots[static_cast<size_t>(ti)] = boundary_block(
                    net, problem,
                    std::span<const EvalPoint>(sets.boundary).subspan(
                        static_cast<size_t>(t.begin), static_cast<size_t>(t.end - t.begin)),
                    mu_b_over_nb, gslot);
                break;
            case BlockTask::InitialK:
                part_slots[static_cast<size_t>(ti)] = initial_block(
                    net, problem,
                    std::span<const EvalPoint>(sets.initial).subspan(
                        static_cast<size_t>(t.begin), static_cast<size_t>(t.end - t.begin)),
                    mu_b_over_ni, gslot);
                break;
        }
    });

    // Fixed merge order keeps results identical across thread counts.
    LossParts parts;
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        const LossParts& p = part_slots[ti];
        parts.interior += p.interior;
        parts.boundary += p.boundary;
        parts.initial += p.initial;
        parts.velocity += p.velocity;
    }
    parts.interior *= mu_over_n;
    parts.boundary *= mu_b_over_nb;
    parts.initial *= mu_b_over_ni;
    parts.velocity *= mu_b_over_ni;
    if (grads)
        for (size_t ti = 0; ti < tasks.size(); ++ti) grads->add(grad_slots[ti]);

    const double total = parts.total();
    if (!std::isfinite(total)) throw NumericError("non-finite loss");
    return parts;
}

double relative_error(const EffectiveNet& net, const PointSets& sets) {
    require_arg(!sets.test.empty(), "test set must be nonempty");
    const int n = static_cast<int>(sets.test.size());
    const int nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> num_slots(static_cast<size_t>(nblocks), 0.0);
    std::vector<double> den_slots(static_cast<size_t>(nblocks), 0.0);
    parallel_blocks(nblocks, [&](int bi) {
        const int begin = bi * kBlock;
        const int end = std::min(begin + kBlock, n);
        ValueCache cache;
        forward_values(net,
                       std::span<const EvalPoint>(sets.test).subspan(
                           static_cast<size_t>(begin), static_cast<size_t>(end - begin)),
                       cache);
        double num = 0.0, den = 0.0;
        for (int p = begin; p < end; ++p) {
            const double exact = sets.test_values[static_cast<size_t>(p)];
            const double diff = cache.u[static_cast<size_t>(p - begin)] - exact;
            num += diff * diff;
            den += exact * exact;
        }
        num_slots[static_cast<size_t>(bi)] = num;
        den_slots[static_cast<size_t>(bi)] = den;
    });
    double num = 0.0, den = 0.0;
    for (int bi = 0; bi < nblocks; ++bi) {
        num += num_slots[static_cast<size_t>(bi)];
        den += den_slots[static_cast<size_t>(bi)];
    }
    if (den == 0.0) throw NumericError("relative error undefined: exact values are all zero");
    return std::sqrt(num / den);
}

PinnEvaluator::PinnEvaluator(const MlpParams& params, std::vector<LoraSvdAdapter> adapters,
                             PdeProblem problem, PointSets sets, LossWeights weights)
    : params_(&params),
      adapters_(std::move(adapters)),
      problem_(problem),
      sets_(std::move(sets)),
      weights_(weights) {
    // Fold masks into values; derivatives are then taken on the unmasked
    // loss at the effective sigma.
    for (auto& ad : adapters_) {
        ad.sigma = ad.masked_sigma();
        std::fill(ad.active.begin(), ad.active.end(), std::uint8_t{1});
    }
    map_ = SigmaIndexMap::build(adapters_);
    sigma_ = map_.gather(adapters_);
}

double PinnEvaluator::loss_at(const Vec& sigma) {
    map_.scatter(sigma, adapters_);
    update_effective(net_, *params_, adapters_);
    const double value = pinn_loss(net_, problem_, sets_, weights_).total();
    map_.scatter(sigma_, adapters_);
    return value;
}

Vec PinnEvaluator::sigma_gradient_at(const Vec& sigma) {
    map_.scatter(sigma, adapters_);
    update_effective(net_, *params_, adapters_);
    std::vector<std::uint8_t> want(static_cast<size_t>(params_->layer_count()), 0);
    for (const auto& ad : adapters_) want[static_cast<size_t>(ad.layer)] = 1;
    grads_.init(*params_, want, false);
    pinn_loss(net_, problem_, sets_, weights_, &grads_);
    const LoraGrads lg = project_lora_grads(grads_, adapters_);
    Vec out;
    out.reserve(static_cast<size_t>(map_.total()));
    for (const auto& gs : lg.gsigma) out.insert(out.end(), gs.begin(), gs.end());
    map_.scatter(sigma_, adapters_);
    return out;
}

FdHessianResult PinnEvaluator::sigma_hessian(double eps) {
    return fd_hessian([this](const Vec& s) { return sigma_gradient_at(s); }, sigma_, eps);
}

Vec PinnEvaluator::hessian_diagonal(double eps) {
    const int n = map_.total();
    Vec diag(static_cast<size_t>(n), 0.0);
    const double base = loss_at(sigma_);
    Vec probe = sigma_;
    for (int j = 0; j < n; ++j) {
        const double step = eps * (1.0 + std::fabs(sigma_[static_cast<size_t>(j)]));
        probe[static_cast<size_t>(j)] = sigma_[static_cast<size_t>(j)] + step;
        const double lp = loss_at(probe);
        probe[static_cast<size_t>(j)] = sigma_[static_cast<size_t>(j)] - step;
        const double lm = loss_at(probe);
        probe[static_cast<size_t>(j)] = sigma_[static_cast<size_t>(j)];
        diag[static_cast<size_t>(j)] = (lp - 2.0 * base + lm) / (step * step);
    }
    return diag;
}

}  // namespace sublora
