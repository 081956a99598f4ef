#pragma once

#include <utility>
#include <vector>

#include "proxyfed/linalg.hpp"
#include "proxyfed/model.hpp"

namespace proxyfed {

struct LossWeights {
    double alpha = 1.0;  // weight of the pseudo-label term
    double beta = 1.0;   // weight of the contrastive proxy term
};

// One contrastive anchor. `proxy_mix` states how the positive proxy is
// assembled from rows of Ω: a high-confidence anchor is {(pseudo_label, 1)},
// a low-confidence anchor holds its indecisive categories with renormalized
// probability weights. The mix weights are constants during backprop
// (stop-gradient); the rows themselves are not.
struct PoolAnchor {
    int feature_index = -1;  // into the batch's trace list
    bool is_hc = false;
    std::vector<std::pair<int, double>> proxy_mix;  // (class row, weight)
    std::vector<int> negatives;                     // trace indices with non-overlapping category sets
};

// Built per batch by the client module; consumed by loss_icpl.
struct ProxyPool {
    std::vector<PoolAnchor> anchors;
};

Vec mixed_proxy(const Mat& proxies, const std::vector<std::pair<int, double>>& mix);

// Mean cross-entropy −log p(label) over the batch; gradient w.r.t. all
// parameters including Ω. Throws on an empty batch — the caller must skip
// the term instead.
std::pair<double, GradientBuffer> loss_supervised(const ModelParams& params,
                                                  const std::vector<std::pair<Vec, int>>& batch);

// Same cross-entropy against fixed pseudo-labels on strong-augmented inputs.
// An empty batch is legitimate (no high-confidence samples) and contributes
// zero.
std::pair<double, GradientBuffer> loss_unsupervised(const ModelParams& params,
                                                    const std::vector<std::pair<Vec, int>>& batch);

// Contrastive proxy loss over a prepared pool. Each anchor contrasts
// exp(z_i·pos) against exp(z_i·z_j) for its negatives; the high- and
// low-confidence halves are averaged separately over the anchors that
// actually carry negatives, then summed. Gradients flow into anchor
// features, negative features (through θ), and the proxy rows named by each
// anchor's mix.
std::pair<double, GradientBuffer> loss_icpl(const ModelParams& params, const ProxyPool& pool,
                                            const std::vector<ForwardTrace>& traces);

enum class GptMetric { squared_euclidean, cosine };

// Server-side proxy-tuning loss: for every class c and client m, an
// InfoNCE-style term attracting the global proxy row to the client's row of
// the same class and repelling it from the client's other rows. Gradient is
// w.r.t. the global proxies only.
std::pair<double, Mat> loss_gpt(const Mat& global_proxies, const std::vector<Mat>& client_proxies,
                                GptMetric metric);

double loss_gpt_value(const Mat& global_proxies, const std::vector<Mat>& client_proxies,
                      GptMetric metric);

}  // namespace proxyfed
