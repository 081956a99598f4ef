#pragma once

#include <cstdint>
#include <vector>

#include "proxyfed/datagen.hpp"
#include "proxyfed/losses.hpp"
#include "proxyfed/model.hpp"
#include "proxyfed/rng.hpp"

namespace proxyfed {

enum class SampleKind { Labeled, HighConf, LowConf };

// What to do with low-confidence unlabeled samples:
//   discard — drop them from training (FixMatch-style baseline),
//   direct  — give them argmax pseudo-labels anyway and feed the
//             pseudo-label loss,
//   icpl    — keep them as contrastive anchors with indecisive-category
//             positives (the full method).
enum class LowConfMode { discard, direct, icpl };

// How a low-confidence sample's category set is built: classes beating the
// global per-class prior, the top-1 class, or the top-5 classes.
enum class XiRule { prior, top1, top5 };

// Label evidence for one sample: a singleton for labeled and
// high-confidence samples, the indecisive-categories set for the rest.
struct CategorySet {
    SampleKind kind = SampleKind::LowConf;
    std::vector<int> categories;  // sorted ascending; may be empty for LowConf
};

// Per-class counts of labeled ground truths and high-confidence
// pseudo-labels, the raw material of the global prior.
struct PriorStats {
    std::vector<long long> counts;
    long long total = 0;

    // Simplex form; a client with nothing to report counts as uniform.
    Vec normalized() const;
};

struct TriageResult {
    Vec weak;         // the weak view, shared by the global prediction and
                      // the local feature so both see the same input
    Vec y_bar;        // global-model probabilities on the weak view
    bool hc = false;  // max(y_bar) > tau
    int pseudo_label = 0;  // argmax(y_bar), lowest index on ties
};

// Runs the broadcast global model over weak views of the unlabeled samples.
// One weak view is drawn per sample (consumed in storage order).
std::vector<TriageResult> triage_confidence(const ModelParams& global_params,
                                            const std::vector<Sample>& unlabeled, double tau,
                                            const AugmentConfig& aug, Rng& rng);

// Labeled → {true_label}; HighConf → {argmax ȳ}; LowConf → the rule's
// category set (strictly-above-prior comparison for XiRule::prior).
CategorySet build_category_set(SampleKind verdict, const Vec& y_bar, const Vec& prior,
                               int true_label, XiRule rule);

PriorStats collect_prior_stats(const std::vector<int>& labeled_truths,
                               const std::vector<int>& hc_pseudo_labels, int C);

// Assembles contrastive anchors over one batch. `sets` and `local_probs`
// are parallel to the batch's trace list; labeled entries participate as
// negatives only. Low-confidence anchors mix the proxy rows of their
// category set with renormalized local probabilities; empty-set anchors are
// dropped. A negative is any other batch member whose category set is
// disjoint from the anchor's.
ProxyPool build_proxy_pool(const std::vector<CategorySet>& sets,
                           const std::vector<Vec>& local_probs, bool include_lc_anchors);

struct ClientConfig {
    int epochs = 5;
    int batch_size = 32;
    double lr = 0.1;
    double tau = 0.95;
    double alpha = 1.0;
    double beta = 1.0;
    LowConfMode low_conf_mode = LowConfMode::icpl;
    XiRule xi_rule = XiRule::prior;
    AugmentConfig aug;

    void validate() const;
};

struct LocalRoundStats {
    long long excluded = 0;  // low-confidence samples seen this round
    long long hc_count = 0, hc_correct = 0;
    long long lc_count = 0, lc_truth_in_xi = 0, lc_top1_correct = 0;
    long long n_labeled = 0, n_unlabeled = 0;
    double mean_loss_s = 0.0, mean_loss_u = 0.0, mean_loss_icpl = 0.0;
};

// Round-fixed client state: weak views, triage verdicts against the
// broadcast model, category sets, and the round's prior statistics. Batches
// and strong views vary per epoch; these do not.
struct RoundPlan {
    std::vector<Vec> labeled_weak;
    std::vector<TriageResult> triage;
    std::vector<CategorySet> labeled_sets;
    std::vector<CategorySet> unlabeled_sets;
    PriorStats prior_stats;
    LocalRoundStats stats;
};

RoundPlan prepare_round(const ModelParams& broadcast, const ClientDataset& data, const Vec& prior,
                        const ClientConfig& cfg, Rng& rng);

struct LocalTrainResult {
    ModelParams params;
    PriorStats prior_stats;
    LocalRoundStats stats;
};

// One client round: E epochs of mini-batch SGD on
// L_s + alpha·L_u + beta·L_ICPL, starting from the broadcast parameters.
LocalTrainResult local_train(const ModelParams& broadcast, const ClientDataset& data,
                             const Vec& prior, const ClientConfig& cfg, Rng& rng);

// Deterministic full-batch descent with every round-auxiliary quantity
// (views, triage, pools, mixing weights) frozen at the broadcast model, so
// the local objective is one fixed smooth function. The learning rate is
// halved and the step retried whenever the loss would rise; `monotone`
// reports whether the recorded trace ever increased anyway.
struct DescentTrace {
    std::vector<double> losses;
    bool monotone = true;
    int halvings = 0;
    double final_lr = 0.0;
};

DescentTrace descent_run(const ModelParams& broadcast, const ClientDataset& data, const Vec& prior,
                         const ClientConfig& cfg, int steps, Rng& rng);

}  // namespace proxyfed
