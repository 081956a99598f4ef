#include "proxyfed/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace proxyfed {

bool same_architecture(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (!a.layers[i].W.same_shape(b.layers[i].W) || a.layers[i].b.size() != b.layers[i].b.size())
            return false;
    return a.proxies.same_shape(b.proxies);
}

long long param_count(const ModelParams& p) {
    long long n = 0;
    for (const DenseLayer& l : p.layers) n += static_cast<long long>(l.W.a.size()) + static_cast<long long>(l.b.size());
    return n + static_cast<long long>(p.proxies.a.size());
}

ModelParams make_model(int input_dim, const std::vector<int>& dims, int num_classes, Rng& rng) {
    if (input_dim < 1) throw std::invalid_argument("make_model: input_dim must be >= 1");
    if (dims.empty()) throw std::invalid_argument("make_model: need at least one layer");
    if (num_classes < 1) throw std::invalid_argument("make_model: num_classes must be >= 1");

    ModelParams p;
    int fan_in = input_dim;
    for (int out : dims) {
        if (out < 1) throw std::invalid_argument("make_model: layer dims must be >= 1");
        DenseLayer l;
        l.W = Mat(out, fan_in);
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& w : l.W.a) w = scale * rng.normal();
        l.b.assign(out, 0.0);
        p.layers.push_back(std::move(l));
        fan_in = out;
    }
    p.proxies = Mat(num_classes, fan_in);
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : p.proxies.a) w = scale * rng.normal();
    return p;
}

ForwardTrace forward_extract(const ModelParams& params, const Vec& x) {
    if (params.layers.empty()) throw std::invalid_argument("forward_extract: model has no layers");
    if (static_cast<int>(x.size()) != params.input_dim())
        throw std::invalid_argument("forward_extract: input dimension mismatch");

    ForwardTrace t;
    t.input = x;
    const Vec* cur = &t.input;
    const std::size_t L = params.layers.size();
    t.pre.reserve(L);
    t.act.reserve(L);
    for (std::size_t i = 0; i < L; ++i) {
        Vec pre = matvec(params.layers[i].W, *cur);
        axpy(1.0, params.layers[i].b, pre);
        Vec act = pre;
        if (i + 1 < L)  // last layer is linear
            for (double& v : act) v = std::tanh(v);
        t.pre.push_back(std::move(pre));
        t.act.push_back(std::move(act));
        cur = &t.act.back();
    }
    return t;
}

std::pair<Vec, Vec> classify(const ModelParams& params, const Vec& z) {
    if (static_cast<int>(z.size()) != params.proxies.cols)
        throw std::invalid_argument("classify: feature dimension mismatch");
    Vec logits = matvec(params.proxies, z);
    Vec probs = softmax(logits);
    return {std::move(logits), std::move(probs)};
}

ForwardTrace forward_full(const ModelParams& params, const Vec& x) {
    ForwardTrace t = forward_extract(params, x);
    auto [logits, probs] = classify(params, t.features());
    t.logits = std::move(logits);
    t.probs = std::move(probs);
    return t;
}

GradientBuffer GradientBuffer::zeros_like(const ModelParams& p) {
    GradientBuffer g;
    g.layers.reserve(p.layers.size());
    for (const DenseLayer& l : p.layers) {
        DenseLayer z;
        z.W = Mat(l.W.rows, l.W.cols);
        z.b.assign(l.b.size(), 0.0);
        g.layers.push_back(std::move(z));
    }
    g.proxies = Mat(p.proxies.rows, p.proxies.cols);
    return g;
}

void GradientBuffer::add(const GradientBuffer& o) { add_scaled(o, 1.0); }

void GradientBuffer::add_scaled(const GradientBuffer& o, double s) {
    if (layers.size() != o.layers.size()) throw std::invalid_argument("GradientBuffer::add: shape mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (std::size_t j = 0; j < layers[i].W.a.size(); ++j) layers[i].W.a[j] += s * o.layers[i].W.a[j];
        for (std::size_t j = 0; j < layers[i].b.size(); ++j) layers[i].b[j] += s * o.layers[i].b[j];
    }
    for (std::size_t j = 0; j < proxies.a.size(); ++j) proxies.a[j] += s * o.proxies.a[j];
}

double GradientBuffer::abs_max() const {
    double m = 0.0;
    for (const DenseLayer& l : layers) {
        for (double v : l.W.a) m = std::max(m, std::fabs(v));
        for (double v : l.b) m = std::max(m, std::fabs(v));
    }
    for (double v : proxies.a) m = std::max(m, std::fabs(v));
    return m;
}

void backprop_feature(const ModelParams& params, const ForwardTrace& trace, const Vec& dz,
                      GradientBuffer& out) {
    const std::size_t L = params.layers.size();
    if (trace.act.size() != L) throw std::invalid_argument("backprop_feature: trace does not match model");
    if (dz.size() != trace.act.back().size())
        throw std::invalid_argument("backprop_feature: upstream gradient dimension mismatch");

    Vec d = dz;  // gradient w.r.t. current layer's post-activation output
    for (std::size_t i = L; i-- > 0;) {
        if (i + 1 < L)  // undo tanh: d/dpre = (1 - tanh^2) = 1 - act^2
            for (std::size_t j = 0; j < d.size(); ++j) d[j] *= 1.0 - trace.act[i][j] * trace.act[i][j];
        const Vec& in = (i == 0) ? trace.input : trace.act[i - 1];
        outer_acc(out.layers[i].W, d, in);
        axpy(1.0, d, out.layers[i].b);
        if (i > 0) d = matvec_t(params.layers[i].W, d);
    }
}

ModelParams sgd_step(const ModelParams& params, const GradientBuffer& grads, double lr) {
    ModelParams p = params;
    sgd_step_inplace(p, grads, lr);
    return p;
}

void sgd_step_inplace(ModelParams& params, const GradientBuffer& grads, double lr) {
    if (params.layers.size() != grads.layers.size()) throw std::invalid_argument("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        DenseLayer& l = params.layers[i];
        const DenseLayer& g = grads.layers[i];
        if (!l.W.same_shape(g.W) || l.b.size() != g.b.size()) throw std::invalid_argument("sgd_step: shape mismatch");
        for (std::size_t j = 0; j < l.W.a.size(); ++j) l.W.a[j] -= lr * g.W.a[j];
        for (std::size_t j = 0; j < l.b.size(); ++j) l.b[j] -= lr * g.b[j];
    }
    if (!params.proxies.same_shape(grads.proxies)) throw std::invalid_argument("sgd_step: shape mismatch");
    for (std::size_t j = 0; j < params.proxies.a.size(); ++j) params.proxies.a[j] -= lr * grads.proxies.a[j];
}

namespace {

// All scalar parameters of a model as mutable pointers, in a fixed order
// shared with GradientBuffer's layout.
std::vector<double*> param_pointers(ModelParams& p) {
    std::vector<double*> ptrs;
    for (DenseLayer& l : p.layers) {
        for (double& v : l.W.a) ptrs.push_back(&v);
        for (double& v : l.b) ptrs.push_back(&v);
    }
    for (double& v : p.proxies.a) ptrs.push_back(&v);
    return ptrs;
}

std::vector<const double*> grad_pointers(const GradientBuffer& g) {
    std::vector<const double*> ptrs;
    for (const DenseLayer& l : g.layers) {
        for (const double& v : l.W.a) ptrs.push_back(&v);
        for (const double& v : l.b) ptrs.push_back(&v);
    }
    for (const double& v : g.proxies.a) ptrs.push_back(&v);
    return ptrs;
}

double guarded_rel_err(double a, double n) {
    return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

}  // namespace

GradCheckReport grad_check(const std::function<double(const ModelParams&)>& loss_value,
                           const ModelParams& at, const GradientBuffer& analytic, double h) {
    ModelParams work = at;
    std::vector<double*> params = param_pointers(work);
    std::vector<const double*> grads = grad_pointers(analytic);
    if (params.size() != grads.size())
        throw std::invalid_argument("grad_check: gradient buffer does not match model");

    GradCheckReport rep;
    rep.n_checked = params.size();
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = *params[i];
        *params[i] = saved + h;
        double fp = loss_value(work);
        *params[i] = saved - h;
        double fm = loss_value(work);
        *params[i] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double err = guarded_rel_err(*grads[i], numeric);
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_index = i;
        }
    }
    return rep;
}

GradCheckReport grad_check_mat(const std::function<double(const Mat&)>& loss_value, const Mat& at,
                               const Mat& analytic, double h) {
    if (!at.same_shape(analytic)) throw std::invalid_argument("grad_check_mat: shape mismatch");
    Mat work = at;
    GradCheckReport rep;
    rep.n_checked = work.a.size();
    for (std::size_t i = 0; i < work.a.size(); ++i) {
        double saved = work.a[i];
        work.a[i] = saved + h;
        double fp = loss_value(work);
        work.a[i] = saved - h;
        double fm = loss_value(work);
        work.a[i] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double err = guarded_rel_err(analytic.a[i], numeric);
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_index = i;
        }
    }
    return rep;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x50584644;  // "PXFD"
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    put_u32(os, kCheckpointMagic);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(params.layers.size()));
    put_u32(os, static_cast<std::uint32_t>(params.input_dim()));
    for (const DenseLayer& l : params.layers) put_u32(os, static_cast<std::uint32_t>(l.W.rows));
    put_u32(os, static_cast<std::uint32_t>(params.num_classes()));
    put_u32(os, static_cast<std::uint32_t>(params.feature_dim()));
    for (const DenseLayer& l : params.layers) {
        for (double v : l.W.a) put_f64(os, v);
        for (double v : l.b) put_f64(os, v);
    }
    for (double v : params.proxies.a) put_f64(os, v);
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    if (get_u32(is) != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
    if (get_u32(is) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version in " + path);
    std::uint32_t n_layers = get_u32(is);
    if (n_layers == 0 || n_layers > 64) throw std::runtime_error("checkpoint: implausible layer count in " + path);
    std::uint32_t in_dim = get_u32(is);
    std::vector<std::uint32_t> out_dims(n_layers);
    for (auto& d : out_dims) d = get_u32(is);
    std::uint32_t C = get_u32(is);
    std::uint32_t d_feat = get_u32(is);
    if (d_feat != out_dims.back()) throw std::runtime_error("checkpoint: inconsistent feature dim in " + path);

    ModelParams p;
    std::uint32_t fan_in = in_dim;
    for (std::uint32_t out : out_dims) {
        DenseLayer l;
        l.W = Mat(static_cast<int>(out), static_cast<int>(fan_in));
        for (double& v : l.W.a) v = get_f64(is);
        l.b.resize(out);
        for (double& v : l.b) v = get_f64(is);
        p.layers.push_back(std::move(l));
        fan_in = out;
    }
    p.proxies = Mat(static_cast<int>(C), static_cast<int>(d_feat));
    for (double& v : p.proxies.a) v = get_f64(is);
    return p;
}

}  // namespace proxyfed
