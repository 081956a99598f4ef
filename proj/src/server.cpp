#include "proxyfed/server.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "proxyfed/rng.hpp"

namespace proxyfed {

std::vector<int> sample_clients(int K, int M, long long round, std::uint64_t master_seed) {
    if (K < 1 || M < 1 || M > K) throw std::invalid_argument("sample_clients: need 1 <= M <= K");
    Rng rng(mix_seed(master_seed, 0x5e1ec7ull, static_cast<std::uint64_t>(round)));

    // Partial Fisher-Yates: the first M slots end up a uniform sample
    // without replacement.
    std::vector<int> ids(K);
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < M; ++i) {
        int j = i + rng.uniform_int(K - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(M);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ModelParams aggregate_params(const std::vector<ModelParams>& client_params,
                             const std::vector<long long>& client_sizes) {
    if (client_params.empty()) throw std::invalid_argument("aggregate_params: no clients");
    if (client_params.size() != client_sizes.size())
        throw std::invalid_argument("aggregate_params: params/sizes length mismatch");
    for (const ModelParams& p : client_params)
        if (!same_architecture(p, client_params.front()))
            throw std::invalid_argument("aggregate_params: architecture mismatch");

    long long total = 0;
    for (long long s : client_sizes) {
        if (s <= 0) throw std::invalid_argument("aggregate_params: client sizes must be positive");
        total += s;
    }

    ModelParams out = client_params.front();
    for (DenseLayer& l : out.layers) {
        std::fill(l.W.a.begin(), l.W.a.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::fill(out.proxies.a.begin(), out.proxies.a.end(), 0.0);

    for (std::size_t m = 0; m < client_params.size(); ++m) {
        double gamma = static_cast<double>(client_sizes[m]) / static_cast<double>(total);
        const ModelParams& p = client_params[m];
        for (std::size_t i = 0; i < out.layers.size(); ++i) {
            for (std::size_t j = 0; j < out.layers[i].W.a.size(); ++j)
                out.layers[i].W.a[j] += gamma * p.layers[i].W.a[j];
            for (std::size_t j = 0; j < out.layers[i].b.size(); ++j)
                out.layers[i].b[j] += gamma * p.layers[i].b[j];
        }
        for (std::size_t j = 0; j < out.proxies.a.size(); ++j) out.proxies.a[j] += gamma * p.proxies.a[j];
    }
    return out;
}

Vec aggregate_prior(const std::vector<PriorStats>& stats) {
    if (stats.empty()) throw std::invalid_argument("aggregate_prior: no client statistics");
    Vec acc = stats.front().normalized();
    for (std::size_t m = 1; m < stats.size(); ++m) {
        Vec p = stats[m].normalized();
        if (p.size() != acc.size()) throw std::invalid_argument("aggregate_prior: class count mismatch");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
    for (double& v : acc) v /= static_cast<double>(stats.size());
    return acc;
}

GptResult tune_global_proxies(const Mat& init, const std::vector<Mat>& client_proxies,
                              const GptConfig& cfg,
                              const std::function<void(const Mat&, double)>& on_step) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("tune_global_proxies: lr must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("tune_global_proxies: epochs must be >= 0");

    GptResult res;
    res.proxies = init;
    res.final_lr = cfg.lr;
    if (cfg.epochs == 0) return res;

    double current = loss_gpt_value(init, client_proxies, cfg.metric);
    res.trace.push_back(current);

    const int max_halvings = 20;
    for (int q = 0; q < cfg.epochs; ++q) {
        auto [value, grad] = loss_gpt(res.proxies, client_proxies, cfg.metric);
        (void)value;
        for (;;) {
            Mat candidate = res.proxies;
            for (std::size_t i = 0; i < candidate.a.size(); ++i) candidate.a[i] -= res.final_lr * grad.a[i];
            double next = loss_gpt_value(candidate, client_proxies, cfg.metric);
            if (next <= current) {
                res.proxies = std::move(candidate);
                current = next;
                res.trace.push_back(next);
                if (on_step) on_step(res.proxies, next);
                break;
            }
            res.final_lr *= 0.5;
            if (++res.halvings > max_halvings) {
                res.halving_exhausted = true;
                return res;  // best point found so far — the trace never rose
            }
        }
    }
    return res;
}

long long comm_cost(long long param_count, long long num_classes, long long sampled_clients) {
    if (param_count < 1 || num_classes < 1 || sampled_clients < 1)
        throw std::invalid_argument("comm_cost: all arguments must be positive");
    return sampled_clients * (param_count + num_classes) + (param_count + num_classes);
}

long long gpt_flops_estimate(long long Q, long long M, long long C, long long d) {
    if (Q < 1 || M < 1 || C < 1 || d < 1)
        throw std::invalid_argument("gpt_flops_estimate: all arguments must be positive");
    return Q * M * C * C * d;
}

}  // namespace proxyfed
