#include "proxyfed/federation.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace proxyfed {

namespace {

// Fixed stream tags; every RNG consumer is keyed by value, never by call
// order, so threading cannot change results.
constexpr std::uint64_t kTagData = 0xda7a5e7dull;
constexpr std::uint64_t kTagPartition = 0x9a47171full;
constexpr std::uint64_t kTagInit = 0x1417a3b5ull;
constexpr std::uint64_t kTagClient = 0xc11e47ull;

}  // namespace

void FederationConfig::validate() const {
    data.validate();
    client.validate();
    if (dirichlet_alpha <= 0.0) throw std::invalid_argument("FederationConfig: dirichlet_alpha must be positive");
    if (hidden_dim < 1 || feature_dim < 1)
        throw std::invalid_argument("FederationConfig: model dims must be >= 1");
    if (clients < 1) throw std::invalid_argument("FederationConfig: clients must be >= 1");
    if (sampled_per_round < 1 || sampled_per_round > clients)
        throw std::invalid_argument("FederationConfig: need 1 <= sampled_per_round <= clients");
    if (rounds < 0) throw std::invalid_argument("FederationConfig: rounds must be >= 0");
    if (gpt.lr <= 0.0) throw std::invalid_argument("FederationConfig: gpt lr must be positive");
    if (gpt.epochs < 0) throw std::invalid_argument("FederationConfig: gpt epochs must be >= 0");
    if (threads < 0) throw std::invalid_argument("FederationConfig: threads must be >= 0");
    if (init_params) {
        if (init_params->input_dim() != data.input_dim || init_params->num_classes() != data.num_classes ||
            init_params->feature_dim() != feature_dim)
            throw std::invalid_argument("FederationConfig: init_params do not match the configured architecture");
    }
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PROXYFED_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

double evaluate_global(const ModelParams& params, const std::vector<Sample>& test) {
    if (test.empty()) throw std::invalid_argument("evaluate_global: empty test set");
    long long correct = 0;
    for (const Sample& s : test) {
        ForwardTrace t = forward_full(params, s.features);
        if (argmax(t.probs) == s.true_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

FederationResult run_federation(const FederationConfig& cfg) {
    cfg.validate();

    DatasetSpec dspec = cfg.data;
    dspec.seed = mix_seed(cfg.master_seed, kTagData);
    auto [train, test] = generate_blobs(dspec);
    std::vector<ClientDataset> clients =
        partition_dirichlet(train, cfg.clients, cfg.dirichlet_alpha, mix_seed(cfg.master_seed, kTagPartition));

    const int C = cfg.data.num_classes;

    GlobalState state;
    if (cfg.init_params) {
        state.params = *cfg.init_params;
    } else {
        Rng init_rng(mix_seed(cfg.master_seed, kTagInit));
        state.params = make_model(cfg.data.input_dim, {cfg.hidden_dim, cfg.feature_dim}, C, init_rng);
    }
    state.prior.assign(C, 1.0 / static_cast<double>(C));

    const long long P = param_count(state.params);
    const int M = cfg.sampled_per_round;

    FederationResult out;
    out.rounds.reserve(cfg.rounds);

    for (int round = 0; round < cfg.rounds; ++round) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<int> ids = sample_clients(cfg.clients, M, round, cfg.master_seed);

        // Clients run independently: read-only broadcast in, one result slot
        // each, per-client RNG keyed by (seed, round, id). Results are merged
        // in id order below, so scheduling never shows in the output.
        std::vector<std::optional<LocalTrainResult>> slots(M);
        auto run_client = [&](int i) {
            Rng crng(mix_seed(cfg.master_seed, kTagClient, static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(ids[i])));
            slots[i] = local_train(state.params, clients[ids[i]], state.prior, cfg.client, crng);
        };

        int n_workers = std::min(resolve_threads(cfg.threads), M);
        if (n_workers <= 1) {
            for (int i = 0; i < M; ++i) run_client(i);
        } else {
            std::atomic<int> next{0};
            std::exception_ptr first_error = nullptr;
            std::mutex error_mu;
            std::vector<std::thread> workers;
            workers.reserve(n_workers);
            for (int w = 0; w < n_workers; ++w) {
                workers.emplace_back([&] {
                    for (;;) {
                        int i = next.fetch_add(1);
                        if (i >= M) return;
                        try {
                            run_client(i);
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(error_mu);
                            if (!first_error) first_error = std::current_exception();
                            return;
                        }
                    }
                });
            }
            for (std::thread& t : workers) t.join();
            if (first_error) std::rethrow_exception(first_error);
        }

        std::vector<ModelParams> params_list;
        std::vector<long long> sizes;
        std::vector<Mat> client_proxies;
        std::vector<PriorStats> prior_stats;
        params_list.reserve(M);
        for (int i = 0; i < M; ++i) {
            LocalTrainResult& r = *slots[i];
            sizes.push_back(clients[ids[i]].total_size());
            client_proxies.push_back(r.params.proxies);
            prior_stats.push_back(std::move(r.prior_stats));
            params_list.push_back(std::move(r.params));
        }

        ModelParams aggregated = aggregate_params(params_list, sizes);
        if (cfg.gpt_enabled && cfg.gpt.epochs > 0) {
            GptResult tuned = tune_global_proxies(aggregated.proxies, client_proxies, cfg.gpt);
            aggregated.proxies = std::move(tuned.proxies);
        }
        state.params = std::move(aggregated);

        RoundMetrics rm;
        rm.round = round;
        for (int i = 0; i < M; ++i) {
            const LocalRoundStats& st = slots[i]->stats;
            rm.excluded_count += st.excluded;
            rm.hc_count += st.hc_count;
            rm.hc_correct += st.hc_correct;
            rm.lc_count += st.lc_count;
            rm.lc_truth_in_xi += st.lc_truth_in_xi;
            rm.lc_top1_correct += st.lc_top1_correct;
            rm.loss_s += st.mean_loss_s / M;
            rm.loss_u += st.mean_loss_u / M;
            rm.loss_icpl += st.mean_loss_icpl / M;
        }
        if (rm.hc_count > 0) {
            rm.pl_defined = true;
            rm.pseudo_label_accuracy = static_cast<double>(rm.hc_correct) / static_cast<double>(rm.hc_count);
        }
        rm.loss_gpt = loss_gpt_value(state.params.proxies, client_proxies, cfg.gpt.metric);
        rm.test_accuracy = evaluate_global(state.params, test);
        rm.comm_cost = comm_cost(P, C, M);

        state.prior = aggregate_prior(prior_stats);

        rm.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.rounds.push_back(rm);
    }

    out.state = std::move(state);
    out.test_set = std::move(test);
    out.clients = std::move(clients);
    return out;
}

}  // namespace proxyfed
