#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "proxyfed/client.hpp"
#include "proxyfed/losses.hpp"
#include "proxyfed/model.hpp"

namespace proxyfed {

// Uniform sample of M distinct client ids, returned sorted; depends only on
// (master_seed, round).
std::vector<int> sample_clients(int K, int M, long long round, std::uint64_t master_seed);

// FedAvg-style elementwise weighted mean with weights proportional to each
// client's total (labeled + unlabeled) sample count. The averaged proxy
// matrix is the tuning initialization.
ModelParams aggregate_params(const std::vector<ModelParams>& client_params,
                             const std::vector<long long>& client_sizes);

// Unweighted mean of the clients' normalized count vectors — deliberately
// not size-weighted, unlike parameter aggregation.
Vec aggregate_prior(const std::vector<PriorStats>& stats);

struct GptConfig {
    double lr = 0.005;
    int epochs = 100;  // Q; 0 disables tuning
    GptMetric metric = GptMetric::squared_euclidean;
};

struct GptResult {
    Mat proxies;
    std::vector<double> trace;  // loss before tuning, then after each accepted step
    int halvings = 0;
    bool halving_exhausted = false;
    double final_lr = 0.0;
};

// Q full-batch gradient-descent steps on the proxy-tuning loss. A step that
// would raise the loss is retried with the rate halved (the halved rate
// persists); after 20 halvings tuning aborts and returns the best point
// found with the exhausted flag set.
GptResult tune_global_proxies(const Mat& init, const std::vector<Mat>& client_proxies,
                              const GptConfig& cfg,
                              const std::function<void(const Mat&, double)>& on_step = {});

// Per-round traffic in scalar units: M uploads of (P + C) plus one broadcast
// of (P + C), where P counts every model parameter and C the prior vector.
long long comm_cost(long long param_count, long long num_classes, long long sampled_clients);

// Relative work estimate for tuning: Q steps × M clients × C² proxy pairs ×
// d-dimensional metric evaluations.
long long gpt_flops_estimate(long long Q, long long M, long long C, long long d);

}  // namespace proxyfed
