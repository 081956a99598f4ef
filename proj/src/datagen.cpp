#include "proxyfed/datagen.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace proxyfed {

void DatasetSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("DatasetSpec: input_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("DatasetSpec: num_classes must be >= 2");
    if (samples_per_class < 1) throw std::invalid_argument("DatasetSpec: samples_per_class must be >= 1");
    if (class_sphere_radius <= 0.0) throw std::invalid_argument("DatasetSpec: class_sphere_radius must be positive");
    if (class_noise_std < 0.0) throw std::invalid_argument("DatasetSpec: class_noise_std must be non-negative");
    if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
        throw std::invalid_argument("DatasetSpec: labeled_fraction must be in (0,1]");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("DatasetSpec: test_fraction must be in (0,1)");
}

void AugmentConfig::validate() const {
    if (weak_noise_std < 0.0 || strong_noise_std < 0.0)
        throw std::invalid_argument("AugmentConfig: noise stds must be non-negative");
    if (strong_noise_std < weak_noise_std)
        throw std::invalid_argument("AugmentConfig: strong_noise_std must be >= weak_noise_std");
    if (strong_mask_prob < 0.0 || strong_mask_prob >= 1.0)
        throw std::invalid_argument("AugmentConfig: strong_mask_prob must be in [0,1)");
}

namespace {

// Uniform direction on the unit sphere: normalized isotropic Gaussian.
// Redraw the (measure-zero) degenerate case rather than dividing by ~0.
Vec sphere_point(int dim, double radius, Rng& rng) {
    for (;;) {
        Vec v(dim);
        for (double& x : v) x = rng.normal();
        double n = norm2(v);
        if (n > 1e-12) {
            for (double& x : v) x *= radius / n;
            return v;
        }
    }
}

}  // namespace

std::pair<std::vector<Sample>, std::vector<Sample>> generate_blobs(const DatasetSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const int C = spec.num_classes;
    const int n = spec.samples_per_class;

    std::vector<Vec> means(C);
    for (int c = 0; c < C; ++c) means[c] = sphere_point(spec.input_dim, spec.class_sphere_radius, rng);

    std::vector<Sample> train, test;
    const int n_test = static_cast<int>(std::lround(spec.test_fraction * n));

    for (int c = 0; c < C; ++c) {
        std::vector<Sample> pool(n);
        for (int i = 0; i < n; ++i) {
            Sample& s = pool[i];
            s.features = means[c];
            for (double& x : s.features) x += spec.class_noise_std * rng.normal();
            s.true_label = c;
            s.is_labeled = false;
        }

        // Stratified test split, then a stratified labeled fraction of the
        // per-class train remainder.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);

        const int n_train = n - n_test;
        const int n_labeled = static_cast<int>(std::lround(spec.labeled_fraction * n_train));
        for (int i = 0; i < n; ++i) {
            Sample s = std::move(pool[order[i]]);
            if (i < n_test) {
                test.push_back(std::move(s));
            } else {
                s.is_labeled = (i - n_test) < n_labeled;
                train.push_back(std::move(s));
            }
        }
    }
    return {std::move(train), std::move(test)};
}

std::vector<ClientDataset> partition_dirichlet(const std::vector<Sample>& train, int K,
                                               double dirichlet_alpha, std::uint64_t seed) {
    if (K <= 0) throw std::invalid_argument("partition_dirichlet: K must be positive");
    if (dirichlet_alpha <= 0.0) throw std::invalid_argument("partition_dirichlet: dirichlet_alpha must be positive");
    if (train.empty()) throw std::invalid_argument("partition_dirichlet: empty train set");

    int C = 0;
    for (const Sample& s : train) C = std::max(C, s.true_label + 1);

    std::vector<std::vector<int>> labeled_by_class(C), unlabeled_by_class(C);
    long long total_labeled = 0;
    for (int i = 0; i < static_cast<int>(train.size()); ++i) {
        if (train[i].is_labeled) {
            labeled_by_class[train[i].true_label].push_back(i);
            ++total_labeled;
        } else {
            unlabeled_by_class[train[i].true_label].push_back(i);
        }
    }
    if (total_labeled < K)
        throw std::invalid_argument("partition_dirichlet: fewer labeled samples than clients; no valid assignment exists");

    Rng rng(seed);

    auto assign_pool = [&](const std::vector<std::vector<int>>& by_class,
                           std::vector<std::vector<int>>& client_indices) {
        for (int c = 0; c < C; ++c) {
            if (by_class[c].empty()) continue;
            Vec share = rng.dirichlet(dirichlet_alpha, K);
            for (int idx : by_class[c]) {
                // categorical draw by inverse CDF
                double u = rng.uniform();
                double acc = 0.0;
                int k = K - 1;
                for (int j = 0; j < K; ++j) {
                    acc += share[j];
                    if (u < acc) {
                        k = j;
                        break;
                    }
                }
                client_indices[k].push_back(idx);
            }
        }
    };

    // Labeled pool: redraw the whole assignment until no client is left
    // without a labeled sample (the supervised loss is undefined otherwise).
    std::vector<std::vector<int>> labeled_assign;
    const int max_attempts = 10000;
    int attempt = 0;
    for (;; ++attempt) {
        if (attempt >= max_attempts)
            throw std::runtime_error("partition_dirichlet: could not cover all clients with labeled samples after " +
                                     std::to_string(max_attempts) + " attempts");
        labeled_assign.assign(K, {});
        assign_pool(labeled_by_class, labeled_assign);
        bool ok = true;
        for (const auto& v : labeled_assign)
            if (v.empty()) ok = false;
        if (ok) break;
    }

    std::vector<std::vector<int>> unlabeled_assign(K);
    assign_pool(unlabeled_by_class, unlabeled_assign);

    std::vector<ClientDataset> clients(K);
    for (int k = 0; k < K; ++k) {
        for (int idx : labeled_assign[k]) clients[k].labeled.push_back(train[idx]);
        for (int idx : unlabeled_assign[k]) clients[k].unlabeled.push_back(train[idx]);
    }
    return clients;
}

Vec augment_weak(const Vec& x, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    Vec y = x;
    if (cfg.weak_noise_std > 0.0)
        for (double& v : y) v += cfg.weak_noise_std * rng.normal();
    return y;
}

Vec augment_strong(const Vec& x, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    Vec y = x;
    if (cfg.strong_noise_std > 0.0)
        for (double& v : y) v += cfg.strong_noise_std * rng.normal();
    if (cfg.strong_mask_prob > 0.0)
        for (double& v : y)
            if (rng.uniform() < cfg.strong_mask_prob) v = 0.0;
    return y;
}

}  // namespace proxyfed
