#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "proxyfed/federation.hpp"

using namespace proxyfed;

namespace {

FederationConfig small_cfg(std::uint64_t seed = 1) {
    FederationConfig cfg;
    cfg.data.input_dim = 6;
    cfg.data.num_classes = 3;
    cfg.data.samples_per_class = 60;
    cfg.data.class_sphere_radius = 3.0;
    cfg.data.class_noise_std = 0.5;
    cfg.data.labeled_fraction = 0.2;
    cfg.data.test_fraction = 0.2;
    cfg.dirichlet_alpha = 1.0;
    cfg.hidden_dim = 8;
    cfg.feature_dim = 4;
    cfg.clients = 4;
    cfg.sampled_per_round = 2;
    cfg.rounds = 3;
    cfg.client.epochs = 1;
    cfg.client.batch_size = 16;
    cfg.client.lr = 0.05;
    cfg.client.aug.weak_noise_std = 0.02;
    cfg.client.aug.strong_noise_std = 0.1;
    cfg.client.aug.strong_mask_prob = 0.1;
    cfg.gpt.epochs = 10;
    cfg.master_seed = seed;
    cfg.threads = 1;
    return cfg;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.proxies.a != b.proxies.a) return false;
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].W.a != b.layers[l].W.a || a.layers[l].b != b.layers[l].b) return false;
    return true;
}

}  // namespace

TEST_CASE("zero rounds: initial state, uniform prior, empty metrics") {
    FederationConfig cfg = small_cfg();
    cfg.rounds = 0;
    FederationResult r = run_federation(cfg);
    CHECK(r.rounds.empty());
    REQUIRE(r.state.prior.size() == 3);
    for (double v : r.state.prior) CHECK(v == doctest::Approx(1.0 / 3.0));
    CHECK(r.state.params.input_dim() == 6);
    CHECK(r.state.params.feature_dim() == 4);
    CHECK(r.state.params.num_classes() == 3);
    CHECK(r.clients.size() == 4);
    CHECK(!r.test_set.empty());
}

TEST_CASE("round metrics: one row per round with sane fields") {
    FederationConfig cfg = small_cfg(3);
    FederationResult r = run_federation(cfg);
    REQUIRE(r.rounds.size() == 3);
    long long P = param_count(r.state.params);
    for (int t = 0; t < 3; ++t) {
        const RoundMetrics& m = r.rounds[static_cast<std::size_t>(t)];
        CHECK(m.round == t);
        CHECK(m.test_accuracy >= 0.0);
        CHECK(m.test_accuracy <= 1.0);
        CHECK(m.excluded_count >= 0);
        CHECK(m.comm_cost == comm_cost(P, 3, 2));
        CHECK(m.wall_time >= 0.0);
        CHECK(std::isfinite(m.loss_s));
        CHECK(m.loss_gpt >= 0.0);
        if (m.pl_defined)
            CHECK(m.pseudo_label_accuracy >= 0.0);
        else
            CHECK(std::isnan(m.pseudo_label_accuracy));
        CHECK(m.hc_count + m.lc_count >= 0);
    }
}

TEST_CASE("the run is deterministic and the thread count is invisible in the output") {
    FederationConfig cfg = small_cfg(9);
    cfg.clients = 6;
    cfg.sampled_per_round = 4;
    cfg.threads = 1;
    FederationResult a = run_federation(cfg);
    cfg.threads = 4;
    FederationResult b = run_federation(cfg);

    REQUIRE(a.rounds.size() == b.rounds.size());
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        CHECK(a.rounds[i].test_accuracy == b.rounds[i].test_accuracy);
        CHECK(a.rounds[i].loss_s == b.rounds[i].loss_s);
        CHECK(a.rounds[i].loss_u == b.rounds[i].loss_u);
        CHECK(a.rounds[i].loss_icpl == b.rounds[i].loss_icpl);
        CHECK(a.rounds[i].loss_gpt == b.rounds[i].loss_gpt);
        CHECK(a.rounds[i].excluded_count == b.rounds[i].excluded_count);
    }
    CHECK(params_equal(a.state.params, b.state.params));
    CHECK(a.state.prior == b.state.prior);

    // a different master seed changes the trajectory
    cfg.master_seed = 10;
    FederationResult c = run_federation(cfg);
    CHECK_FALSE(params_equal(a.state.params, c.state.params));
}

TEST_CASE("disabling proxy tuning changes proxies but keeps the loop running") {
    FederationConfig cfg = small_cfg(12);
    FederationResult with = run_federation(cfg);
    cfg.gpt_enabled = false;
    FederationResult without = run_federation(cfg);
    REQUIRE(without.rounds.size() == 3);
    // same data and sampling; the proxy matrices must diverge once tuning is off
    CHECK_FALSE(params_equal(with.state.params, without.state.params));
}

TEST_CASE("evaluation: degenerate classifiers score exactly as expected") {
    Rng rng(2);
    ModelParams p = make_model(4, {5, 3}, 4, rng);

    std::vector<Sample> test;
    for (int i = 0; i < 40; ++i) {
        Sample s;
        s.features = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        s.true_label = i % 4;
        test.push_back(s);
    }

    // zero proxies ⇒ all logits zero ⇒ argmax is class 0 everywhere ⇒ 1/C
    ModelParams zero = p;
    std::fill(zero.proxies.a.begin(), zero.proxies.a.end(), 0.0);
    CHECK(evaluate_global(zero, test) == doctest::Approx(0.25));

    // all-zero labels make the same classifier perfect
    for (Sample& s : test) s.true_label = 0;
    CHECK(evaluate_global(zero, test) == doctest::Approx(1.0));

    CHECK_THROWS_AS(evaluate_global(p, {}), std::invalid_argument);
}

TEST_CASE("easy well-separated blobs are learned to high accuracy") {
    FederationConfig cfg = small_cfg(7);
    cfg.data.class_sphere_radius = 4.0;
    cfg.data.class_noise_std = 0.3;
    cfg.data.samples_per_class = 80;
    cfg.rounds = 12;
    cfg.sampled_per_round = 4;
    cfg.client.epochs = 3;
    cfg.client.lr = 0.1;
    FederationResult r = run_federation(cfg);
    CHECK(r.rounds.back().test_accuracy >= 0.95);
}

TEST_CASE("an unreachable confidence threshold leaves pseudo-label accuracy undefined") {
    FederationConfig cfg = small_cfg(5);
    cfg.client.tau = 0.999999;
    cfg.rounds = 1;
    cfg.client.epochs = 1;
    FederationResult r = run_federation(cfg);
    REQUIRE(r.rounds.size() == 1);
    CHECK_FALSE(r.rounds[0].pl_defined);
    CHECK(std::isnan(r.rounds[0].pseudo_label_accuracy));
    // everything unlabeled was excluded
    long long total_unlabeled = 0;
    for (const ClientDataset& c : r.clients) total_unlabeled += static_cast<long long>(c.unlabeled.size());
    CHECK(r.rounds[0].excluded_count > 0);
    CHECK(r.rounds[0].excluded_count <= total_unlabeled);
}

TEST_CASE("config validation rejects inconsistent settings") {
    FederationConfig cfg = small_cfg();
    cfg.sampled_per_round = 10;  // > clients
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_cfg();
    cfg.rounds = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_cfg();
    cfg.feature_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_cfg();
    Rng rng(1);
    cfg.init_params = make_model(5, {8, 4}, 3, rng);  // input_dim mismatch
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint restore: init_params short-circuits random initialization") {
    FederationConfig cfg = small_cfg(21);
    cfg.rounds = 0;
    FederationResult base = run_federation(cfg);

    cfg.init_params = base.state.params;
    FederationResult resumed = run_federation(cfg);
    CHECK(params_equal(resumed.state.params, base.state.params));
}

TEST_CASE("resolve_threads falls back sanely") {
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) >= 1);
}
