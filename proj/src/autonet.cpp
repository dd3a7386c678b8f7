#include "sublora/autonet.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "sublora/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace sublora {

void MlpParams::validate() const {
    require_arg(widths.size() >= 2, "network needs at least one layer");
    require_arg(widths.back() == 1, "network output must be scalar");
    require_arg(weights.size() == widths.size() - 1 && biases.size() == weights.size(),
                "layer container sizes inconsistent");
    for (size_t l = 0; l < weights.size(); ++l) {
        require_arg(weights[l].rows == widths[l + 1] && weights[l].cols == widths[l],
                    "weight shape inconsistent with widths");
        require_arg(static_cast<int>(biases[l].size()) == widths[l + 1], "bias size inconsistent");
        require_arg(all_finite(weights[l]) && all_finite(biases[l]), "parameters must be finite");
    }
}

MlpParams init_mlp(const std::vector<int>& widths, std::uint64_t seed) {
    require_arg(widths.size() >= 2, "network needs at least one layer");
    MlpParams p;
    p.widths = widths;
    Rng rng(mix_seed(seed, 0x11a9));
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        Mat w(widths[l + 1], widths[l]);
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        for (double& v : w.a) v = scale * rng.gaussian();
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(static_cast<size_t>(widths[l + 1]), 0.0);
    }
    p.validate();
    return p;
}

Vec LoraSvdAdapter::masked_sigma() const {
    Vec s = sigma;
    for (size_t k = 0; k < s.size(); ++k)
        if (!active[k]) s[k] = 0.0;
    return s;
}

std::vector<LoraSvdAdapter> init_lora(const MlpParams& params, const std::vector<int>& layers,
                                      int rank, std::uint64_t seed) {
    std::vector<LoraSvdAdapter> out;
    for (int l : layers) {
        require_arg(l >= 0 && l < params.layer_count(), "adapted layer does not exist");
        const int n_out = params.widths[static_cast<size_t>(l) + 1];
        const int n_in = params.widths[static_cast<size_t>(l)];
        require_arg(rank >= 0 && rank <= std::min(n_in, n_out), "rank exceeds layer dimensions");
        LoraSvdAdapter ad;
        ad.layer = l;
        ad.u = Mat(n_out, rank);
        ad.v = Mat(rank, n_in);
        ad.sigma.assign(static_cast<size_t>(rank), 0.0);
        ad.active.assign(static_cast<size_t>(rank), 1);
        Rng rng(mix_seed(seed, 0x10aa + static_cast<std::uint64_t>(l)));
        const double su = 1.0 / std::sqrt(static_cast<double>(n_out));
        for (double& v : ad.u.a) v = su * rng.gaussian();
        const double sv = 1.0 / std::sqrt(static_cast<double>(n_in));
        for (double& v : ad.v.a) v = sv * rng.gaussian();
        out.push_back(std::move(ad));
    }
    return out;
}

SigmaIndexMap SigmaIndexMap::build(const std::vector<LoraSvdAdapter>& adapters) {
    SigmaIndexMap map;
    for (size_t slot = 0; slot < adapters.size(); ++slot) {
        map.offsets.push_back(static_cast<int>(map.entries.size()));
        for (int k = 0; k < adapters[slot].rank(); ++k)
            map.entries.emplace_back(static_cast<int>(slot), k);
    }
    return map;
}

Vec SigmaIndexMap::gather(const std::vector<LoraSvdAdapter>& adapters) const {
    Vec sigma(entries.size());
    for (size_t g = 0; g < entries.size(); ++g)
        sigma[g] = adapters[static_cast<size_t>(entries[g].first)]
                       .sigma[static_cast<size_t>(entries[g].second)];
    return sigma;
}

void SigmaIndexMap::scatter(const Vec& sigma, std::vector<LoraSvdAdapter>& adapters) const {
    require_arg(sigma.size() == entries.size(), "sigma vector length mismatch");
    for (size_t g = 0; g < entries.size(); ++g)
        adapters[static_cast<size_t>(entries[g].first)]
            .sigma[static_cast<size_t>(entries[g].second)] = sigma[g];
}

std::vector<int> SigmaIndexMap::per_layer_counts(std::span<const int> kept) const {
    std::vector<int> counts(offsets.size(), 0);
    for (int g : kept) {
        require_arg(g >= 0 && g < total(), "global index out of range");
        counts[static_cast<size_t>(entries[static_cast<size_t>(g)].first)] += 1;
    }
    return counts;
}

namespace {

void apply_adapters(std::vector<Mat>& w, const MlpParams& params,
                    const std::vector<LoraSvdAdapter>& adapters) {
    for (const auto& ad : adapters) {
        require_arg(ad.layer >= 0 && ad.layer < params.layer_count(), "adapter layer out of range");
        Mat& wl = w[static_cast<size_t>(ad.layer)];
        require_arg(ad.u.rows == wl.rows && ad.v.cols == wl.cols && ad.u.cols == ad.rank() &&
                        ad.v.rows == ad.rank(),
                    "adapter shape mismatch");
        const Vec s = ad.masked_sigma();
        for (int k = 0; k < ad.rank(); ++k) {
            const double sk = s[static_cast<size_t>(k)];
            if (sk == 0.0) continue;
            for (int i = 0; i < wl.rows; ++i) {
                const double usk = ad.u(i, k) * sk;
                double* wrow = wl.row(i);
                const double* vrow = ad.v.row(k);
                for (int j = 0; j < wl.cols; ++j) wrow[j] += usk * vrow[j];
            }
        }
    }
}

}  // namespace

std::vector<Mat> effective_weights(const MlpParams& params,
                                   const std::vector<LoraSvdAdapter>& adapters) {
    std::vector<Mat> w = params.weights;
    apply_adapters(w, params, adapters);
    return w;
}

EffectiveNet make_effective(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters) {
    EffectiveNet net;
    net.base = &params;
    net.weights = effective_weights(params, adapters);
    return net;
}

void update_effective(EffectiveNet& net, const MlpParams& params,
                      const std::vector<LoraSvdAdapter>& adapters) {
    net.base = &params;
    net.weights.resize(params.weights.size());
    for (size_t l = 0; l < params.weights.size(); ++l) {
        net.weights[l].reshape(params.weights[l].rows, params.weights[l].cols);
        std::copy(params.weights[l].a.begin(), params.weights[l].a.end(), net.weights[l].a.begin());
    }
    apply_adapters(net.weights, params, adapters);
}

namespace {

// The engine reshapes persistent buffers instead of allocating fresh
// matrices; block-sized temporaries dominate the flop count and fresh
// allocations of that size fall through to mmap page faulting.

void build_input_block(std::span<const EvalPoint> pts, int dim, Mat& x) {
    x.reshape(dim, static_cast<int>(pts.size()));
    for (size_t p = 0; p < pts.size(); ++p) {
        require_arg(pts[p].dim() == dim, "point dimension does not match the network input");
        x(0, static_cast<int>(p)) = pts[p].x1;
        x(1, static_cast<int>(p)) = pts[p].x2;
        if (dim == 3) x(2, static_cast<int>(p)) = pts[p].t;
    }
}

void affine(const Mat& w, const Vec& b, const Mat& a, Mat& out) {
    out.reshape(w.rows, a.cols);
    for (int i = 0; i < w.rows; ++i) {
        double* row = out.row(i);
        std::fill(row, row + out.cols, b[static_cast<size_t>(i)]);
    }
    gemm_acc(w, a, out);
}

void linear(const Mat& w, const Mat& a, Mat& out) {
    out.reshape(w.rows, a.cols);
    out.zero();
    gemm_acc(w, a, out);
}

}  // namespace

void forward_values(const EffectiveNet& net, std::span<const EvalPoint> pts, ValueCache& cache) {
    const int L = net.layer_count();
    const int n = static_cast<int>(pts.size());
    cache.npts = n;
    cache.in_a.resize(static_cast<size_t>(L));
    build_input_block(pts, net.input_dim(), cache.in_a[0]);
    static thread_local Mat s;
    for (int l = 0; l < L; ++l) {
        affine(net.weights[static_cast<size_t>(l)], net.base->biases[static_cast<size_t>(l)],
               cache.in_a[static_cast<size_t>(l)], s);
        if (l + 1 < L) {
            Mat& a = cache.in_a[static_cast<size_t>(l) + 1];
            a.reshape(s.rows, s.cols);
            for (size_t k = 0; k < s.a.size(); ++k) a.a[k] = std::tanh(s.a[k]);
        } else {
            cache.u.assign(s.row(0), s.row(0) + n);
        }
    }
}

void backward_values(const EffectiveNet& net, const ValueCache& cache, const Vec& weight,
                     GradBuffers& grads) {
    const int L = net.layer_count();
    const int n = cache.npts;
    static thread_local Mat p, pa;
    p.reshape(1, n);
    for (int q = 0; q < n; ++q) p(0, q) = weight[static_cast<size_t>(q)];
    for (int l = L - 1; l >= 0; --l) {
        if (grads.want_w[static_cast<size_t>(l)])
            gemm_nt_acc(p, cache.in_a[static_cast<size_t>(l)], grads.gw[static_cast<size_t>(l)]);
        if (grads.want_b) {
            Vec& gb = grads.gb[static_cast<size_t>(l)];
            for (int i = 0; i < p.rows; ++i) {
                const double* row = p.row(i);
                double s = 0.0;
                for (int q = 0; q < n; ++q) s += row[q];
                gb[static_cast<size_t>(i)] += s;
            }
        }
        if (l == 0) break;
        pa.reshape(net.weights[static_cast<size_t>(l)].cols, n);
        pa.zero();
        gemm_tn_acc(net.weights[static_cast<size_t>(l)], p, pa);
        // through tanh: adjoint scales by 1 - T^2
        const Mat& t = cache.in_a[static_cast<size_t>(l)];
        p.reshape(pa.rows, n);
        for (size_t k = 0; k < pa.a.size(); ++k) p.a[k] = pa.a[k] * (1.0 - t.a[k] * t.a[k]);
    }
}

void forward_dual2(const EffectiveNet& net, std::span<const EvalPoint> pts, int dir,
                   Dual2Cache& cache) {
    const int L = net.layer_count();
    const int dim = net.input_dim();
    const int n = static_cast<int>(pts.size());
    require_arg(dir >= 0 && dir < dim, "derivative direction out of range");
    cache.npts = n;
    cache.in_a.resize(static_cast<size_t>(L));
    cache.in_ad.resize(static_cast<size_t>(L));
    cache.in_add.resize(static_cast<size_t>(L));
    cache.hid_sd.resize(static_cast<size_t>(L - 1));
    cache.hid_sdd.resize(static_cast<size_t>(L - 1));
    build_input_block(pts, dim, cache.in_a[0]);
    cache.in_ad[0].reshape(dim, n);
    cache.in_ad[0].zero();
    for (int q = 0; q < n; ++q) cache.in_ad[0](dir, q) = 1.0;
    cache.in_add[0].reshape(dim, n);
    cache.in_add[0].zero();

    static thread_local Mat s, sd, sdd;
    for (int l = 0; l < L; ++l) {
        const Mat& w = net.weights[static_cast<size_t>(l)];
        affine(w, net.base->biases[static_cast<size_t>(l)], cache.in_a[static_cast<size_t>(l)], s);
        linear(w, cache.in_ad[static_cast<size_t>(l)], sd);
        linear(w, cache.in_add[static_cast<size_t>(l)], sdd);
        if (l + 1 < L) {
            Mat& a = cache.in_a[static_cast<size_t>(l) + 1];
            Mat& ad = cache.in_ad[static_cast<size_t>(l) + 1];
            Mat& add = cache.in_add[static_cast<size_t>(l) + 1];
            a.reshape(s.rows, n);
            ad.reshape(s.rows, n);
            add.reshape(s.rows, n);
            for (size_t k = 0; k < s.a.size(); ++k) {
                const double t = std::tanh(s.a[k]);
                const double p1 = 1.0 - t * t;          // tanh'
                const double p2 = -2.0 * t * p1;        // tanh''
                const double dv = sd.a[k];
                a.a[k] = t;
                ad.a[k] = p1 * dv;
                add.a[k] = p2 * dv * dv + p1 * sdd.a[k];
            }
            std::swap(cache.hid_sd[static_cast<size_t>(l)], sd);
            std::swap(cache.hid_sdd[static_cast<size_t>(l)], sdd);
        } else {
            cache.u.assign(s.row(0), s.row(0) + n);
            cache.ud.assign(sd.row(0), sd.row(0) + n);
            cache.udd.assign(sdd.row(0), sdd.row(0) + n);
        }
    }
}

void backward_dual2(const EffectiveNet& net, const Dual2Cache& cache, const Vec& wa, const Vec& wb,
                    const Vec& wc, GradBuffers& grads) {
    const int L = net.layer_count();
    const int n = cache.npts;
    static thread_local Mat p, q, r, pa, qa, ra;
    p.reshape(1, n);
    q.reshape(1, n);
    r.reshape(1, n);
    for (int k = 0; k < n; ++k) {
        p(0, k) = wa[static_cast<size_t>(k)];
        q(0, k) = wb[static_cast<size_t>(k)];
        r(0, k) = wc[static_cast<size_t>(k)];
    }
    for (int l = L - 1; l >= 0; --l) {
        if (grads.want_w[static_cast<size_t>(l)]) {
            Mat& gw = grads.gw[static_cast<size_t>(l)];
            gemm_nt_acc(p, cache.in_a[static_cast<size_t>(l)], gw);
            gemm_nt_acc(q, cache.in_ad[static_cast<size_t>(l)], gw);
            gemm_nt_acc(r, cache.in_add[static_cast<size_t>(l)], gw);
        }
        if (grads.want_b) {
            Vec& gb = grads.gb[static_cast<size_t>(l)];
            for (int i = 0; i < p.rows; ++i) {
                const double* row = p.row(i);
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += row[k];
                gb[static_cast<size_t>(i)] += s;
            }
        }
        if (l == 0) break;
        const Mat& w = net.weights[static_cast<size_t>(l)];
        pa.reshape(w.cols, n);
        qa.reshape(w.cols, n);
        ra.reshape(w.cols, n);
        pa.zero();
        qa.zero();
        ra.zero();
        gemm_tn_acc(w, p, pa);
        gemm_tn_acc(w, q, qa);
        gemm_tn_acc(w, r, ra);
        // through tanh with cached T, Sdot, Sddot:
        //   a   = tanh(s)
        //   a'  = p1 s'
        //   a'' = p2 s'^2 + p1 s''
        // where p1 = 1-t^2, p2 = -2 t p1, p3 = -2 p1 (1 - 3 t^2).
        const Mat& tmat = cache.in_a[static_cast<size_t>(l)];
        const Mat& sd = cache.hid_sd[static_cast<size_t>(l) - 1];
        const Mat& sdd = cache.hid_sdd[static_cast<size_t>(l) - 1];
        p.reshape(pa.rows, n);
        q.reshape(pa.rows, n);
        r.reshape(pa.rows, n);
        for (size_t k = 0; k < pa.a.size(); ++k) {
            const double t = tmat.a[k];
            const double p1 = 1.0 - t * t;
            const double p2 = -2.0 * t * p1;
            const double p3 = -2.0 * p1 * (1.0 - 3.0 * t * t);
            const double dv = sd.a[k];
            const double ddv = sdd.a[k];
            p.a[k] = pa.a[k] * p1 + qa.a[k] * p2 * dv + ra.a[k] * (p3 * dv * dv + p2 * ddv);
            q.a[k] = qa.a[k] * p1 + ra.a[k] * 2.0 * p2 * dv;
            r.a[k] = ra.a[k] * p1;
        }
    }
}

void GradBuffers::init(const MlpParams& base, const std::vector<std::uint8_t>& want_weights,
                       bool want_bias) {
    const int L = base.layer_count();
    require_arg(static_cast<int>(want_weights.size()) == L, "want_weights size mismatch");
    want_w = want_weights;
    want_b = want_bias;
    gw.resize(static_cast<size_t>(L));
    gb.resize(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        Mat& g = gw[static_cast<size_t>(l)];
        if (want_w[static_cast<size_t>(l)]) {
            g.reshape(base.widths[static_cast<size_t>(l) + 1], base.widths[static_cast<size_t>(l)]);
            g.zero();
        } else {
            g.reshape(0, 0);
        }
        if (want_b)
            gb[static_cast<size_t>(l)].assign(
                static_cast<size_t>(base.widths[static_cast<size_t>(l) + 1]), 0.0);
        else
            gb[static_cast<size_t>(l)].clear();
    }
}

void GradBuffers::add(const GradBuffers& other) {
    for (size_t l = 0; l < gw.size(); ++l) {
        if (want_w[l])
            for (size_t k = 0; k < gw[l].a.size(); ++k) gw[l].a[k] += other.gw[l].a[k];
        if (want_b)
            for (size_t k = 0; k < gb[l].size(); ++k) gb[l][k] += other.gb[l][k];
    }
}

LoraGrads project_lora_grads(const GradBuffers& grads,
                             const std::vector<LoraSvdAdapter>& adapters) {
    LoraGrads out;
    for (const auto& ad : adapters) {
        const Mat& gw = grads.gw[static_cast<size_t>(ad.layer)];
        require_arg(!gw.empty(), "effective-weight gradient missing for adapted layer");
        const int r = ad.rank();
        const Vec s = ad.masked_sigma();
        Mat gwvt(gw.rows, r);   // GW V^T
        gemm_nt_acc(gw, ad.v, gwvt);
        Mat gu(gw.rows, r);
        Vec gsigma(static_cast<size_t>(r), 0.0);
        for (int k = 0; k < r; ++k) {
            double acc = 0.0;
            for (int i = 0; i < gw.rows; ++i) {
                gu(i, k) = gwvt(i, k) * s[static_cast<size_t>(k)];
                acc += ad.u(i, k) * gwvt(i, k);
            }
            gsigma[static_cast<size_t>(k)] = acc;
        }
        Mat gv(r, gw.cols);     // diag(s) U^T GW
        gemm_tn_acc(ad.u, gw, gv);
        for (int k = 0; k < r; ++k) {
            double* row = gv.row(k);
            for (int j = 0; j < gw.cols; ++j) row[j] *= s[static_cast<size_t>(k)];
        }
        out.gu.push_back(std::move(gu));
        out.gv.push_back(std::move(gv));
        out.gsigma.push_back(std::move(gsigma));
    }
    return out;
}

double forward(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
               const EvalPoint& point) {
    require_arg(point.dim() == params.input_dim(), "point dimension does not match the network input");
    const EffectiveNet net = make_effective(params, adapters);
    ValueCache cache;
    forward_values(net, std::span<const EvalPoint>(&point, 1), cache);
    return cache.u[0];
}

FieldDerivs input_derivatives(const MlpParams& params, const std::vector<LoraSvdAdapter>& adapters,
                              const EvalPoint& point) {
    require_arg(point.dim() == params.input_dim(), "point dimension does not match the network input");
    const EffectiveNet net = make_effective(params, adapters);
    FieldDerivs f;
    Dual2Cache cache;
    forward_dual2(net, std::span<const EvalPoint>(&point, 1), 0, cache);
    f.u = cache.u[0];
    f.gx = cache.ud[0];
    f.lap = cache.udd[0];
    forward_dual2(net, std::span<const EvalPoint>(&point, 1), 1, cache);
    f.gy = cache.ud[0];
    f.lap += cache.udd[0];
    if (point.has_time) {
        forward_dual2(net, std::span<const EvalPoint>(&point, 1), 2, cache);
        f.set_time(cache.ud[0], cache.udd[0]);
    }
    return f;
}

FdHessianResult fd_hessian(const std::function<Vec(const Vec&)>& grad_fn, const Vec& sigma,
                           double eps) {
    const int n = static_cast<int>(sigma.size());
    Mat h(n, n);
    Vec probe = sigma;
    for (int j = 0; j < n; ++j) {
        const double step = eps * (1.0 + std::fabs(sigma[static_cast<size_t>(j)]));
        probe[static_cast<size_t>(j)] = sigma[static_cast<size_t>(j)] + step;
        const Vec gp = grad_fn(probe);
        probe[static_cast<size_t>(j)] = sigma[static_cast<size_t>(j)] - step;
        const Vec gm = grad_fn(probe);
        probe[static_cast<size_t>(j)] = sigma[static_cast<size_t>(j)];
        for (int i = 0; i < n; ++i) {
            const double v = (gp[static_cast<size_t>(i)] - gm[static_cast<size_t>(i)]) / (2.0 * step);
            if (!std::isfinite(v)) throw NumericError("non-finite Hessian entry");
            h(i, j) = v;
        }
    }
    FdHessianResult result;
    result.asymmetry = max_asymmetry(h);
    symmetrize(h);
    result.hess = std::move(h);
    return result;
}

// ---------------------------------------------------------------------
// Checkpoints

namespace {

struct BlobWriter {
    std::ofstream out;
    std::uint64_t offset = 0;
    nlohmann::json tensors = nlohmann::json::array();

    void tensor(const std::string& name, int rows, int cols, const double* data, size_t count) {
        tensors.push_back({{"name", name},
                           {"rows", rows},
                           {"cols", cols},
                           {"offset", offset},
                           {"count", count}});
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(count * sizeof(double)));
        offset += count * sizeof(double);
    }
};

Vec read_tensor(std::ifstream& in, const nlohmann::json& t) {
    Vec data(t.at("count").get<size_t>());
    in.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw NumericError("checkpoint blob truncated");
    return data;
}

}  // namespace

void save_checkpoint(const std::string& stem, const Checkpoint& ckpt) {
    ckpt.params.validate();
    const std::string blob_path = stem + ".bin";
    BlobWriter blob;
    blob.out.open(blob_path, std::ios::binary | std::ios::trunc);
    if (!blob.out) throw NumericError("cannot open checkpoint blob for writing: " + blob_path);

    const int L = ckpt.params.layer_count();
    for (int l = 0; l < L; ++l) {
        const Mat& w = ckpt.params.weights[static_cast<size_t>(l)];
        blob.tensor("W" + std::to_string(l), w.rows, w.cols, w.a.data(), w.a.size());
    }
    for (int l = 0; l < L; ++l) {
        const Vec& b = ckpt.params.biases[static_cast<size_t>(l)];
        blob.tensor("b" + std::to_string(l), static_cast<int>(b.size()), 1, b.data(), b.size());
    }
    nlohmann::json masks = nlohmann::json::array();
    nlohmann::json adapted = nlohmann::json::array();
    nlohmann::json ranks = nlohmann::json::array();
    for (const auto& ad : ckpt.adapters) {
        const std::string tag = std::to_string(ad.layer);
        blob.tensor("U" + tag, ad.u.rows, ad.u.cols, ad.u.a.data(), ad.u.a.size());
        blob.tensor("V" + tag, ad.v.rows, ad.v.cols, ad.v.a.data(), ad.v.a.size());
        blob.tensor("sigma" + tag, ad.rank(), 1, ad.sigma.data(), ad.sigma.size());
        masks.push_back(std::vector<int>(ad.active.begin(), ad.active.end()));
        adapted.push_back(ad.layer);
        ranks.push_back(ad.rank());
    }
    blob.out.close();

    nlohmann::json manifest{
        {"schema", "sublora-checkpoint-v1"},
        {"widths", ckpt.params.widths},
        {"activation", "tanh"},
        {"adapted_layers", adapted},
        {"ranks", ranks},
        {"masks", masks},
        {"seed", ckpt.seed},
        {"metadata", ckpt.metadata.is_null() ? nlohmann::json::object() : ckpt.metadata},
        {"blob", std::filesystem::path(blob_path).filename().string()},
        {"tensors", blob.tensors}};
    std::ofstream mf(stem + ".json", std::ios::trunc);
    if (!mf) throw NumericError("cannot open checkpoint manifest for writing");
    mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& stem) {
    std::ifstream mf(stem + ".json");
    require_arg(static_cast<bool>(mf), "checkpoint manifest not found: " + stem + ".json");
    nlohmann::json manifest;
    mf >> manifest;
    require_arg(manifest.at("schema") == "sublora-checkpoint-v1", "unknown checkpoint schema");
    require_arg(manifest.at("activation") == "tanh", "unknown activation tag");

    const auto blob_name = manifest.at("blob").get<std::string>();
    const auto blob_path = std::filesystem::path(stem + ".json").parent_path() / blob_name;
    std::ifstream blob(blob_path, std::ios::binary);
    require_arg(static_cast<bool>(blob), "checkpoint blob not found: " + blob_path.string());

    std::map<std::string, nlohmann::json> index;
    for (const auto& t : manifest.at("tensors")) index[t.at("name").get<std::string>()] = t;
    auto fetch = [&](const std::string& name, int rows, int cols) {
        auto it = index.find(name);
        require_arg(it != index.end(), "checkpoint tensor missing: " + name);
        Mat m(rows, cols);
        m.a = read_tensor(blob, it->second);
        require_arg(static_cast<int>(m.a.size()) == rows * cols, "tensor size mismatch: " + name);
        return m;
    };

    Checkpoint ckpt;
    ckpt.params.widths = manifest.at("widths").get<std::vector<int>>();
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.metadata = manifest.at("metadata");
    const int L = static_cast<int>(ckpt.params.widths.size()) - 1;
    for (int l = 0; l < L; ++l) {
        ckpt.params.weights.push_back(fetch("W" + std::to_string(l),
                                            ckpt.params.widths[static_cast<size_t>(l) + 1],
                                            ckpt.params.widths[static_cast<size_t>(l)]));
        Mat b = fetch("b" + std::to_string(l), ckpt.params.widths[static_cast<size_t>(l) + 1], 1);
        ckpt.params.biases.push_back(std::move(b.a));
    }
    ckpt.params.validate();

    const auto adapted = manifest.at("adapted_layers").get<std::vector<int>>();
    const auto ranks = manifest.at("ranks").get<std::vector<int>>();
    const auto masks = manifest.at("masks");
    for (size_t i = 0; i < adapted.size(); ++i) {
        LoraSvdAdapter ad;
        ad.layer = adapted[i];
        const std::string tag = std::to_string(ad.layer);
        const int n_out = ckpt.params.widths[static_cast<size_t>(ad.layer) + 1];
        const int n_in = ckpt.params.widths[static_cast<size_t>(ad.layer)];
        ad.u = fetch("U" + tag, n_out, ranks[i]);
        ad.v = fetch("V" + tag, ranks[i], n_in);
        Mat s = fetch("sigma" + tag, ranks[i], 1);
        ad.sigma = std::move(s.a);
        const auto mask = masks.at(i).get<std::vector<int>>();
        ad.active.assign(mask.begin(), mask.end());
        require_arg(ad.active.size() == ad.sigma.size(), "mask length mismatch");
        ckpt.adapters.push_back(std::move(ad));
    }
    return ckpt;
}

}  // namespace sublora
