#include "proxyfed/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace proxyfed {

Vec mixed_proxy(const Mat& proxies, const std::vector<std::pair<int, double>>& mix) {
    Vec p(proxies.cols, 0.0);
    for (const auto& [c, w] : mix) {
        if (c < 0 || c >= proxies.rows) throw std::invalid_argument("mixed_proxy: class row out of range");
        const double* row = proxies.row(c);
        for (int j = 0; j < proxies.cols; ++j) p[j] += w * row[j];
    }
    return p;
}

namespace {

// Shared by the supervised and pseudo-label losses: mean of
// LSE(logits) − logits[target] with the standard softmax gradient.
std::pair<double, GradientBuffer> cross_entropy_batch(const ModelParams& params,
                                                      const std::vector<std::pair<Vec, int>>& batch) {
    GradientBuffer g = GradientBuffer::zeros_like(params);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& [x, label] : batch) {
        if (label < 0 || label >= params.num_classes())
            throw std::invalid_argument("cross_entropy: label out of range");
        ForwardTrace t = forward_full(params, x);
        total += inv_n * (log_sum_exp(t.logits) - t.logits[label]);

        Vec dlogits = t.probs;  // softmax − one-hot, scaled by 1/n
        dlogits[label] -= 1.0;
        for (double& v : dlogits) v *= inv_n;

        outer_acc(g.proxies, dlogits, t.features());
        Vec dz = matvec_t(params.proxies, dlogits);
        backprop_feature(params, t, dz, g);
    }
    return {total, std::move(g)};
}

}  // namespace

std::pair<double, GradientBuffer> loss_supervised(const ModelParams& params,
                                                  const std::vector<std::pair<Vec, int>>& batch) {
    if (batch.empty()) throw std::invalid_argument("loss_supervised: empty batch (caller must skip the term)");
    return cross_entropy_batch(params, batch);
}

std::pair<double, GradientBuffer> loss_unsupervised(const ModelParams& params,
                                                    const std::vector<std::pair<Vec, int>>& batch) {
    if (batch.empty()) return {0.0, GradientBuffer::zeros_like(params)};
    return cross_entropy_batch(params, batch);
}

std::pair<double, GradientBuffer> loss_icpl(const ModelParams& params, const ProxyPool& pool,
                                            const std::vector<ForwardTrace>& traces) {
    GradientBuffer g = GradientBuffer::zeros_like(params);

    // Anchors without negatives carry no contrast and are excluded from
    // their half's average as well as its sum.
    int n_hc = 0, n_lc = 0;
    for (const PoolAnchor& a : pool.anchors) {
        if (a.negatives.empty()) continue;
        (a.is_hc ? n_hc : n_lc)++;
    }
    if (n_hc == 0 && n_lc == 0) return {0.0, std::move(g)};

    const int d = params.proxies.cols;
    std::vector<Vec> dz(traces.size());  // accumulated feature gradients, lazily allocated
    auto dz_at = [&](int idx) -> Vec& {
        if (dz[idx].empty()) dz[idx].assign(d, 0.0);
        return dz[idx];
    };

    double total = 0.0;
    for (const PoolAnchor& a : pool.anchors) {
        if (a.negatives.empty()) continue;
        if (a.feature_index < 0 || a.feature_index >= static_cast<int>(traces.size()))
            throw std::invalid_argument("loss_icpl: anchor index out of range");
        const double w = a.is_hc ? 1.0 / n_hc : 1.0 / n_lc;
        const Vec& zi = traces[a.feature_index].features();
        Vec pos = mixed_proxy(params.proxies, a.proxy_mix);

        // scores[0] is the positive similarity, the rest follow a.negatives.
        Vec scores(a.negatives.size() + 1);
        scores[0] = dot(zi, pos);
        for (std::size_t j = 0; j < a.negatives.size(); ++j) {
            int nj = a.negatives[j];
            if (nj < 0 || nj >= static_cast<int>(traces.size()) || nj == a.feature_index)
                throw std::invalid_argument("loss_icpl: negative index invalid");
            scores[j + 1] = dot(zi, traces[nj].features());
        }
        double lse = log_sum_exp(scores);
        total += w * (lse - scores[0]);

        Vec coef = softmax(scores);  // dL/dscores before the −scores[0] correction
        coef[0] -= 1.0;

        Vec& dzi = dz_at(a.feature_index);
        for (int j = 0; j < d; ++j) dzi[j] += w * coef[0] * pos[j];
        for (std::size_t j = 0; j < a.negatives.size(); ++j) {
            const Vec& zj = traces[a.negatives[j]].features();
            double cj = w * coef[j + 1];
            for (int t = 0; t < d; ++t) dzi[t] += cj * zj[t];
            Vec& dzj = dz_at(a.negatives[j]);
            for (int t = 0; t < d; ++t) dzj[t] += cj * zi[t];
        }

        // d/dpos = w · coef[0] · z_i, routed to Ω rows with the mix weights
        // held constant (stop-gradient on the soft assignment).
        for (const auto& [c, mw] : a.proxy_mix) {
            double* row = g.proxies.row(c);
            double s = w * coef[0] * mw;
            for (int t = 0; t < d; ++t) row[t] += s * zi[t];
        }
    }

    for (std::size_t i = 0; i < traces.size(); ++i)
        if (!dz[i].empty()) backprop_feature(params, traces[i], dz[i], g);

    return {total, std::move(g)};
}

namespace {

void check_gpt_shapes(const Mat& G, const std::vector<Mat>& clients) {
    if (G.rows < 1) throw std::invalid_argument("loss_gpt: need at least one class");
    if (clients.empty()) throw std::invalid_argument("loss_gpt: need at least one client proxy matrix");
    for (const Mat& m : clients)
        if (!m.same_shape(G)) throw std::invalid_argument("loss_gpt: proxy shape mismatch");
}

double metric_value(const double* u, const double* v, int d, GptMetric metric) {
    if (metric == GptMetric::squared_euclidean) return sq_dist(u, v, d);
    double nu = norm2(u, d), nv = norm2(v, d);
    if (nu < 1e-300 || nv < 1e-300)
        throw std::invalid_argument("loss_gpt: cosine metric undefined for zero vectors");
    return 1.0 - dot(u, v, d) / (nu * nv);
}

// d metric / d u, written into out.
void metric_grad_u(const double* u, const double* v, int d, GptMetric metric, Vec& out) {
    if (metric == GptMetric::squared_euclidean) {
        for (int j = 0; j < d; ++j) out[j] = 2.0 * (u[j] - v[j]);
        return;
    }
    double nu = norm2(u, d), nv = norm2(v, d);
    double uv = dot(u, v, d);
    for (int j = 0; j < d; ++j) out[j] = -(v[j] / (nu * nv) - uv * u[j] / (nu * nu * nu * nv));
}

}  // namespace

double loss_gpt_value(const Mat& G, const std::vector<Mat>& clients, GptMetric metric) {
    check_gpt_shapes(G, clients);
    const int C = G.rows, d = G.cols;
    if (C == 1) return 0.0;  // no other class to repel: every term is −log(1)

    double total = 0.0;
    Vec scores(C);
    for (int c = 0; c < C; ++c) {
        for (const Mat& m : clients) {
            for (int c2 = 0; c2 < C; ++c2) scores[c2] = -metric_value(G.row(c), m.row(c2), d, metric);
            total += log_sum_exp(scores) - scores[c];
        }
    }
    return total;
}

std::pair<double, Mat> loss_gpt(const Mat& G, const std::vector<Mat>& clients, GptMetric metric) {
    check_gpt_shapes(G, clients);
    const int C = G.rows, d = G.cols;
    Mat grad(C, d);
    if (C == 1) return {0.0, std::move(grad)};

    double total = 0.0;
    Vec scores(C), mg(d);
    for (int c = 0; c < C; ++c) {
        for (const Mat& m : clients) {
            for (int c2 = 0; c2 < C; ++c2) scores[c2] = -metric_value(G.row(c), m.row(c2), d, metric);
            double lse = log_sum_exp(scores);
            total += lse - scores[c];

            // dL/dscores = softmax(scores) − one-hot(c); scores = −metric.
            Vec coef = softmax(scores);
            coef[c] -= 1.0;
            double* grow = grad.row(c);
            for (int c2 = 0; c2 < C; ++c2) {
                metric_grad_u(G.row(c), m.row(c2), d, metric, mg);
                for (int j = 0; j < d; ++j) grow[j] -= coef[c2] * mg[j];
            }
        }
    }
    return {total, std::move(grad)};
}

}  // namespace proxyfed
