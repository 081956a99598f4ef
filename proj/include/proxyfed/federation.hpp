#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "proxyfed/client.hpp"
#include "proxyfed/datagen.hpp"
#include "proxyfed/server.hpp"

namespace proxyfed {

struct GlobalState {
    ModelParams params;
    Vec prior;  // per-class dynamic thresholds, uniform before round 0
};

struct FederationConfig {
    DatasetSpec data;  // data.seed is derived from master_seed, not user-set
    double dirichlet_alpha = 0.5;
    int hidden_dim = 32;
    int feature_dim = 16;
    int clients = 20;           // K
    int sampled_per_round = 8;  // M
    int rounds = 50;            // T
    ClientConfig client;
    GptConfig gpt;
    bool gpt_enabled = true;
    std::uint64_t master_seed = 0;
    int threads = 0;  // 0 → PROXYFED_THREADS env var, else hardware count
    std::optional<ModelParams> init_params;  // checkpoint restore; replaces random init

    void validate() const;
};

struct RoundMetrics {
    int round = 0;
    double test_accuracy = 0.0;
    // Pooled over clients; NaN (pl_defined=false) when no sample cleared the
    // confidence threshold — absence is not zero accuracy.
    double pseudo_label_accuracy = std::numeric_limits<double>::quiet_NaN();
    bool pl_defined = false;
    long long excluded_count = 0;
    double loss_s = 0.0, loss_u = 0.0, loss_icpl = 0.0;
    double loss_gpt = 0.0;  // at the round's final proxies vs this round's client proxies
    long long comm_cost = 0;
    double wall_time = 0.0;  // seconds

    // Diagnostics beyond the CSV schema: indecisive-set recall material.
    long long hc_count = 0, hc_correct = 0;
    long long lc_count = 0, lc_truth_in_xi = 0, lc_top1_correct = 0;
};

struct FederationResult {
    GlobalState state;
    std::vector<RoundMetrics> rounds;
    std::vector<Sample> test_set;
    std::vector<ClientDataset> clients;  // kept for post-run diagnostics
};

// Algorithm loop: sample clients → broadcast → parallel local training →
// weighted aggregation → proxy tuning (if enabled) → prior aggregation →
// evaluation. Bit-identical output for a given config regardless of the
// worker thread count.
FederationResult run_federation(const FederationConfig& cfg);

// Fraction of test samples whose argmax class matches the truth; no
// augmentation at test time.
double evaluate_global(const ModelParams& params, const std::vector<Sample>& test);

int resolve_threads(int requested);

}  // namespace proxyfed
