#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "proxyfed/datagen.hpp"

using namespace proxyfed;

namespace {

DatasetSpec small_spec(std::uint64_t seed = 7) {
    DatasetSpec s;
    s.input_dim = 4;
    s.num_classes = 5;
    s.samples_per_class = 100;
    s.class_sphere_radius = 3.0;
    s.class_noise_std = 0.5;
    s.labeled_fraction = 0.1;
    s.test_fraction = 0.2;
    s.seed = seed;
    return s;
}

// Sortable flat form of a sample for multiset comparisons.
std::vector<double> flat(const Sample& s) {
    std::vector<double> v = s.features;
    v.push_back(static_cast<double>(s.true_label));
    v.push_back(s.is_labeled ? 1.0 : 0.0);
    return v;
}

}  // namespace

TEST_CASE("generate_blobs rejects invalid specs") {
    DatasetSpec s = small_spec();
    s.num_classes = 1;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
    s = small_spec();
    s.input_dim = 0;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
    s = small_spec();
    s.labeled_fraction = 0.0;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
    s = small_spec();
    s.labeled_fraction = 1.5;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
    s = small_spec();
    s.test_fraction = 0.0;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
    s = small_spec();
    s.test_fraction = 1.0;
    CHECK_THROWS_AS(generate_blobs(s), std::invalid_argument);
}

TEST_CASE("stratified split sizes: test count and per-class labeled count") {
    auto [train, test] = generate_blobs(small_spec());
    CHECK(test.size() == 100);        // 0.2 · 500
    CHECK(train.size() == 400);

    std::map<int, int> per_class_train, per_class_labeled, per_class_test;
    for (const Sample& s : train) {
        per_class_train[s.true_label]++;
        if (s.is_labeled) per_class_labeled[s.true_label]++;
    }
    for (const Sample& s : test) per_class_test[s.true_label]++;
    for (int c = 0; c < 5; ++c) {
        CHECK(per_class_train[c] == 80);
        CHECK(per_class_labeled[c] == 8);  // round(0.1 · 80)
        CHECK(per_class_test[c] == 20);
    }
}

TEST_CASE("zero noise collapses every class onto its mean, and means sit on the sphere") {
    DatasetSpec s = small_spec();
    s.class_noise_std = 0.0;
    auto [train, test] = generate_blobs(s);

    std::map<int, Vec> mean_of;
    for (const Sample& smp : train) {
        auto it = mean_of.find(smp.true_label);
        if (it == mean_of.end()) {
            mean_of[smp.true_label] = smp.features;
            CHECK(norm2(smp.features) == doctest::Approx(3.0).epsilon(1e-12));
        } else {
            CHECK(smp.features == it->second);
        }
    }
    for (const Sample& smp : test) CHECK(smp.features == mean_of[smp.true_label]);

    // means are distinct vectors
    std::vector<Vec> means;
    for (auto& [c, m] : mean_of) means.push_back(m);
    for (std::size_t i = 0; i < means.size(); ++i)
        for (std::size_t j = i + 1; j < means.size(); ++j) CHECK(means[i] != means[j]);
}

TEST_CASE("generation is deterministic in the seed") {
    auto [train1, test1] = generate_blobs(small_spec(11));
    auto [train2, test2] = generate_blobs(small_spec(11));
    auto [train3, test3] = generate_blobs(small_spec(12));
    REQUIRE(train1.size() == train2.size());
    for (std::size_t i = 0; i < train1.size(); ++i) CHECK(train1[i].features == train2[i].features);
    bool any_diff = false;
    for (std::size_t i = 0; i < train1.size() && i < train3.size(); ++i)
        if (train1[i].features != train3[i].features) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("partition: K=1 degenerates to one client holding everything") {
    auto [train, test] = generate_blobs(small_spec());
    auto clients = partition_dirichlet(train, 1, 0.5, 99);
    REQUIRE(clients.size() == 1);
    CHECK(clients[0].total_size() == static_cast<long long>(train.size()));
}

TEST_CASE("partition is complete, disjoint, and leaves no client without labeled data") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto [train, test] = generate_blobs(small_spec(seed));
        auto clients = partition_dirichlet(train, 8, 0.1, seed * 31 + 5);
        REQUIRE(clients.size() == 8);

        std::vector<std::vector<double>> got, want;
        for (const ClientDataset& c : clients) {
            CHECK(!c.labeled.empty());
            for (const Sample& s : c.labeled) {
                CHECK(s.is_labeled);
                got.push_back(flat(s));
            }
            for (const Sample& s : c.unlabeled) {
                CHECK(!s.is_labeled);
                got.push_back(flat(s));
            }
        }
        for (const Sample& s : train) want.push_back(flat(s));
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        CHECK(got == want);
    }
}

TEST_CASE("partition errors") {
    auto [train, test] = generate_blobs(small_spec());
    CHECK_THROWS_AS(partition_dirichlet(train, 0, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(partition_dirichlet(train, 4, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(partition_dirichlet({}, 4, 0.5, 1), std::invalid_argument);

    // 5 classes · 8 labeled = 40 labeled samples cannot cover 41 clients
    CHECK_THROWS_AS(partition_dirichlet(train, 41, 0.5, 1), std::invalid_argument);
}

TEST_CASE("near-infinite concentration gives near-uniform client shares") {
    DatasetSpec s = small_spec(1);
    s.num_classes = 3;
    s.samples_per_class = 10000;
    s.labeled_fraction = 0.5;
    auto [train, test] = generate_blobs(s);
    auto clients = partition_dirichlet(train, 4, 1e6, 17);

    std::map<int, long long> class_total;
    for (const Sample& smp : train) class_total[smp.true_label]++;
    for (const ClientDataset& c : clients) {
        std::map<int, long long> class_here;
        for (const Sample& smp : c.labeled) class_here[smp.true_label]++;
        for (const Sample& smp : c.unlabeled) class_here[smp.true_label]++;
        for (int cls = 0; cls < 3; ++cls) {
            double share = static_cast<double>(class_here[cls]) / static_cast<double>(class_total[cls]);
            CHECK(std::fabs(share - 0.25) < 0.02);
        }
    }
}

TEST_CASE("smaller concentration means more heterogeneous clients (20 seeds)") {
    auto mean_tv = [](double alpha) {
        double acc = 0.0;
        int n = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            DatasetSpec s = small_spec(seed);
            auto [train, test] = generate_blobs(s);
            Vec global(5, 0.0);
            for (const Sample& smp : train) global[smp.true_label] += 1.0;
            for (double& v : global) v /= static_cast<double>(train.size());

            auto clients = partition_dirichlet(train, 10, alpha, seed + 1000);
            for (const ClientDataset& c : clients) {
                Vec local(5, 0.0);
                for (const Sample& smp : c.labeled) local[smp.true_label] += 1.0;
                for (const Sample& smp : c.unlabeled) local[smp.true_label] += 1.0;
                double total = static_cast<double>(c.total_size());
                double tv = 0.0;
                for (int cls = 0; cls < 5; ++cls) tv += std::fabs(local[cls] / total - global[cls]);
                acc += 0.5 * tv;
                ++n;
            }
        }
        return acc / n;
    };
    CHECK(mean_tv(0.1) > mean_tv(10.0));
}

TEST_CASE("augmentation: zero-noise configs are identities, bad configs rejected") {
    Vec x = {1.0, -2.0, 3.5};
    Rng rng(5);

    AugmentConfig id_cfg;
    id_cfg.weak_noise_std = 0.0;
    id_cfg.strong_noise_std = 0.0;
    id_cfg.strong_mask_prob = 0.0;
    CHECK(augment_weak(x, id_cfg, rng) == x);
    CHECK(augment_strong(x, id_cfg, rng) == x);

    AugmentConfig bad = id_cfg;
    bad.strong_mask_prob = 1.0;
    CHECK_THROWS_AS(augment_strong(x, bad, rng), std::invalid_argument);
    bad = id_cfg;
    bad.weak_noise_std = 0.3;
    bad.strong_noise_std = 0.1;  // strong must perturb at least as much as weak
    CHECK_THROWS_AS(augment_weak(x, bad, rng), std::invalid_argument);
}

TEST_CASE("augmentation is deterministic given the rng stream") {
    Vec x = {0.5, 0.5, 0.5, 0.5};
    AugmentConfig cfg;
    cfg.weak_noise_std = 0.1;
    cfg.strong_noise_std = 0.4;
    cfg.strong_mask_prob = 0.5;

    Rng a(42), b(42);
    CHECK(augment_weak(x, cfg, a) == augment_weak(x, cfg, b));
    CHECK(augment_strong(x, cfg, a) == augment_strong(x, cfg, b));

    // masking really zeroes coordinates at high probability
    cfg.strong_mask_prob = 0.95;
    Rng c(1);
    Vec y = augment_strong(x, cfg, c);
    CHECK(std::count(y.begin(), y.end(), 0.0) > 0);
}
