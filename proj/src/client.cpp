#include "proxyfed/client.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace proxyfed {

Vec PriorStats::normalized() const {
    if (counts.empty()) throw std::logic_error("PriorStats: uninitialized");
    Vec p(counts.size());
    if (total <= 0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(counts.size()));
        return p;
    }
    for (std::size_t i = 0; i < counts.size(); ++i)
        p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return p;
}

void ClientConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("ClientConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("ClientConfig: batch_size must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("ClientConfig: lr must be positive");
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("ClientConfig: tau must be in (0,1)");
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("ClientConfig: loss weights must be non-negative");
    aug.validate();
}

std::vector<TriageResult> triage_confidence(const ModelParams& global_params,
                                            const std::vector<Sample>& unlabeled, double tau,
                                            const AugmentConfig& aug, Rng& rng) {
    std::vector<TriageResult> out;
    out.reserve(unlabeled.size());
    for (const Sample& s : unlabeled) {
        TriageResult r;
        r.weak = augment_weak(s.features, aug, rng);
        ForwardTrace t = forward_full(global_params, r.weak);
        r.y_bar = t.probs;
        r.pseudo_label = argmax(r.y_bar);
        r.hc = r.y_bar[r.pseudo_label] > tau;
        out.push_back(std::move(r));
    }
    return out;
}

CategorySet build_category_set(SampleKind verdict, const Vec& y_bar, const Vec& prior,
                               int true_label, XiRule rule) {
    CategorySet cs;
    cs.kind = verdict;
    if (verdict == SampleKind::Labeled) {
        cs.categories = {true_label};
        return cs;
    }
    if (verdict == SampleKind::HighConf) {
        cs.categories = {argmax(y_bar)};
        return cs;
    }
    const int C = static_cast<int>(y_bar.size());
    switch (rule) {
        case XiRule::prior: {
            if (prior.size() != y_bar.size())
                throw std::invalid_argument("build_category_set: prior length mismatch");
            for (int c = 0; c < C; ++c)
                if (y_bar[c] > prior[c]) cs.categories.push_back(c);  // strict comparison
            break;
        }
        case XiRule::top1:
            cs.categories = {argmax(y_bar)};
            break;
        case XiRule::top5: {
            std::vector<int> order(C);
            for (int c = 0; c < C; ++c) order[c] = c;
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return y_bar[a] > y_bar[b]; });
            order.resize(std::min(5, C));
            std::sort(order.begin(), order.end());
            cs.categories = std::move(order);
            break;
        }
    }
    return cs;
}

PriorStats collect_prior_stats(const std::vector<int>& labeled_truths,
                               const std::vector<int>& hc_pseudo_labels, int C) {
    if (C < 1) throw std::invalid_argument("collect_prior_stats: C must be >= 1");
    PriorStats st;
    st.counts.assign(C, 0);
    for (int y : labeled_truths) {
        if (y < 0 || y >= C) throw std::invalid_argument("collect_prior_stats: label out of range");
        ++st.counts[y];
    }
    for (int y : hc_pseudo_labels) {
        if (y < 0 || y >= C) throw std::invalid_argument("collect_prior_stats: pseudo-label out of range");
        ++st.counts[y];
    }
    st.total = static_cast<long long>(labeled_truths.size() + hc_pseudo_labels.size());
    return st;
}

namespace {

// Both inputs sorted ascending.
bool disjoint_sorted(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return false;
        if (a[i] < b[j])
            ++i;
        else
            ++j;
    }
    return true;
}

}  // namespace

ProxyPool build_proxy_pool(const std::vector<CategorySet>& sets, const std::vector<Vec>& local_probs,
                           bool include_lc_anchors) {
    if (sets.size() != local_probs.size())
        throw std::invalid_argument("build_proxy_pool: sets/probs length mismatch");

    ProxyPool pool;
    const int n = static_cast<int>(sets.size());
    for (int i = 0; i < n; ++i) {
        const CategorySet& cs = sets[i];
        if (cs.kind == SampleKind::Labeled) continue;
        if (cs.kind == SampleKind::LowConf && (!include_lc_anchors || cs.categories.empty())) continue;

        PoolAnchor a;
        a.feature_index = i;
        a.is_hc = cs.kind == SampleKind::HighConf;
        if (a.is_hc) {
            a.proxy_mix = {{cs.categories.front(), 1.0}};
        } else {
            // Soft positive: proxy rows of the indecisive set, weighted by
            // the local probabilities renormalized over that set.
            const Vec& p = local_probs[i];
            double mass = 0.0;
            for (int c : cs.categories) mass += p[c];
            for (int c : cs.categories) a.proxy_mix.emplace_back(c, p[c] / mass);
        }
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (disjoint_sorted(cs.categories, sets[j].categories)) a.negatives.push_back(j);
        }
        pool.anchors.push_back(std::move(a));
    }
    return pool;
}

RoundPlan prepare_round(const ModelParams& broadcast, const ClientDataset& data, const Vec& prior,
                        const ClientConfig& cfg, Rng& rng) {
    cfg.validate();
    if (data.labeled.empty())
        throw std::invalid_argument("prepare_round: client has no labeled samples");
    const int C = broadcast.num_classes();

    RoundPlan plan;
    plan.labeled_weak.reserve(data.labeled.size());
    for (const Sample& s : data.labeled) plan.labeled_weak.push_back(augment_weak(s.features, cfg.aug, rng));

    plan.triage = triage_confidence(broadcast, data.unlabeled, cfg.tau, cfg.aug, rng);

    plan.labeled_sets.reserve(data.labeled.size());
    for (const Sample& s : data.labeled)
        plan.labeled_sets.push_back(build_category_set(SampleKind::Labeled, {}, prior, s.true_label, cfg.xi_rule));

    std::vector<int> labeled_truths, hc_pseudo;
    for (const Sample& s : data.labeled) labeled_truths.push_back(s.true_label);

    plan.unlabeled_sets.reserve(data.unlabeled.size());
    for (std::size_t i = 0; i < data.unlabeled.size(); ++i) {
        const TriageResult& t = plan.triage[i];
        SampleKind kind = t.hc ? SampleKind::HighConf : SampleKind::LowConf;
        CategorySet cs = build_category_set(kind, t.y_bar, prior, -1, cfg.xi_rule);
        const int truth = data.unlabeled[i].true_label;
        if (t.hc) {
            hc_pseudo.push_back(t.pseudo_label);
            ++plan.stats.hc_count;
            if (t.pseudo_label == truth) ++plan.stats.hc_correct;
        } else {
            ++plan.stats.lc_count;
            ++plan.stats.excluded;
            if (t.pseudo_label == truth) ++plan.stats.lc_top1_correct;
            if (std::binary_search(cs.categories.begin(), cs.categories.end(), truth))
                ++plan.stats.lc_truth_in_xi;
        }
        plan.unlabeled_sets.push_back(std::move(cs));
    }

    plan.prior_stats = collect_prior_stats(labeled_truths, hc_pseudo, C);
    plan.stats.n_labeled = static_cast<long long>(data.labeled.size());
    plan.stats.n_unlabeled = static_cast<long long>(data.unlabeled.size());
    return plan;
}

namespace {

// A mini-batch as index lists into the client's labeled/unlabeled stores.
struct BatchIndices {
    std::vector<int> labeled;
    std::vector<int> unlabeled;
};

struct BatchTerms {
    double loss_s = 0.0;
    bool has_labeled = false;
    double loss_u = 0.0;
    double loss_icpl = 0.0;
};

// Evaluates the three local terms on one batch under `params`, accumulating
// alpha/beta-weighted gradients into `grad`. Strong views are indexed by the
// unlabeled sample's storage index.
BatchTerms batch_terms(const ModelParams& params, const ClientDataset& data, const RoundPlan& plan,
                       const BatchIndices& batch, const std::vector<Vec>& strong_views,
                       const ClientConfig& cfg, GradientBuffer& grad) {
    BatchTerms out;

    if (!batch.labeled.empty()) {
        std::vector<std::pair<Vec, int>> sup;
        sup.reserve(batch.labeled.size());
        for (int idx : batch.labeled) sup.emplace_back(data.labeled[idx].features, data.labeled[idx].true_label);
        auto [v, g] = loss_supervised(params, sup);
        out.loss_s = v;
        out.has_labeled = true;
        grad.add(g);
    }

    std::vector<std::pair<Vec, int>> pseudo;
    for (int idx : batch.unlabeled) {
        const TriageResult& t = plan.triage[idx];
        if (t.hc || cfg.low_conf_mode == LowConfMode::direct)
            pseudo.emplace_back(strong_views[idx], t.pseudo_label);
    }
    if (!pseudo.empty()) {
        auto [v, g] = loss_unsupervised(params, pseudo);
        out.loss_u = v;
        grad.add_scaled(g, cfg.alpha);
    }

    if (cfg.beta > 0.0) {
        // Trace list: labeled entries first, then unlabeled, all on weak
        // views under the current local parameters.
        std::vector<ForwardTrace> traces;
        std::vector<CategorySet> sets;
        std::vector<Vec> probs;
        traces.reserve(batch.labeled.size() + batch.unlabeled.size());
        for (int idx : batch.labeled) {
            traces.push_back(forward_full(params, plan.labeled_weak[idx]));
            sets.push_back(plan.labeled_sets[idx]);
            probs.push_back(traces.back().probs);
        }
        for (int idx : batch.unlabeled) {
            traces.push_back(forward_full(params, plan.triage[idx].weak));
            sets.push_back(plan.unlabeled_sets[idx]);
            probs.push_back(traces.back().probs);
        }
        ProxyPool pool = build_proxy_pool(sets, probs, cfg.low_conf_mode == LowConfMode::icpl);
        auto [v, g] = loss_icpl(params, pool, traces);
        out.loss_icpl = v;
        grad.add_scaled(g, cfg.beta);
    }
    return out;
}

std::vector<Vec> draw_strong_views(const ClientDataset& data, const ClientConfig& cfg, Rng& rng) {
    std::vector<Vec> views;
    views.reserve(data.unlabeled.size());
    for (const Sample& s : data.unlabeled) views.push_back(augment_strong(s.features, cfg.aug, rng));
    return views;
}

}  // namespace

LocalTrainResult local_train(const ModelParams& broadcast, const ClientDataset& data,
                             const Vec& prior, const ClientConfig& cfg, Rng& rng) {
    RoundPlan plan = prepare_round(broadcast, data, prior, cfg, rng);

    ModelParams params = broadcast;
    double sum_s = 0.0, sum_u = 0.0, sum_icpl = 0.0;
    long long batches_with_labeled = 0, batches_total = 0;

    const int n_lab = static_cast<int>(data.labeled.size());
    const int n_unl = static_cast<int>(data.unlabeled.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fresh strong views each epoch; weak views stay round-fixed.
        std::vector<Vec> strong_views = draw_strong_views(data, cfg, rng);

        // One merged shuffle of both streams, chunked into batches.
        std::vector<int> order(n_lab + n_unl);
        for (int i = 0; i < n_lab + n_unl; ++i) order[i] = i;
        rng.shuffle(order);

        for (int start = 0; start < static_cast<int>(order.size()); start += cfg.batch_size) {
            int end = std::min<int>(start + cfg.batch_size, static_cast<int>(order.size()));
            BatchIndices batch;
            for (int i = start; i < end; ++i) {
                if (order[i] < n_lab)
                    batch.labeled.push_back(order[i]);
                else
                    batch.unlabeled.push_back(order[i] - n_lab);
            }

            GradientBuffer grad = GradientBuffer::zeros_like(params);
            BatchTerms terms = batch_terms(params, data, plan, batch, strong_views, cfg, grad);
            sgd_step_inplace(params, grad, cfg.lr);

            ++batches_total;
            if (terms.has_labeled) {
                sum_s += terms.loss_s;
                ++batches_with_labeled;
            }
            sum_u += terms.loss_u;
            sum_icpl += terms.loss_icpl;
        }
    }

    LocalTrainResult res{std::move(params), std::move(plan.prior_stats), plan.stats};
    if (batches_with_labeled > 0) res.stats.mean_loss_s = sum_s / static_cast<double>(batches_with_labeled);
    if (batches_total > 0) {
        res.stats.mean_loss_u = sum_u / static_cast<double>(batches_total);
        res.stats.mean_loss_icpl = sum_icpl / static_cast<double>(batches_total);
    }
    return res;
}

DescentTrace descent_run(const ModelParams& broadcast, const ClientDataset& data, const Vec& prior,
                         const ClientConfig& cfg, int steps, Rng& rng) {
    RoundPlan plan = prepare_round(broadcast, data, prior, cfg, rng);
    std::vector<Vec> strong_views = draw_strong_views(data, cfg, rng);  // drawn once, then frozen

    BatchIndices batch;
    for (int i = 0; i < static_cast<int>(data.labeled.size()); ++i) batch.labeled.push_back(i);
    for (int i = 0; i < static_cast<int>(data.unlabeled.size()); ++i) batch.unlabeled.push_back(i);

    // Freeze the pool (anchor structure and mixing weights) at the broadcast
    // model so every step descends the same objective.
    std::vector<CategorySet> sets;
    std::vector<Vec> probs0;
    std::vector<Vec> weak_inputs;
    for (int idx : batch.labeled) {
        weak_inputs.push_back(plan.labeled_weak[idx]);
        sets.push_back(plan.labeled_sets[idx]);
    }
    for (int idx : batch.unlabeled) {
        weak_inputs.push_back(plan.triage[idx].weak);
        sets.push_back(plan.unlabeled_sets[idx]);
    }
    for (const Vec& x : weak_inputs) probs0.push_back(forward_full(broadcast, x).probs);
    ProxyPool pool = build_proxy_pool(sets, probs0, cfg.low_conf_mode == LowConfMode::icpl);

    std::vector<std::pair<Vec, int>> sup, pseudo;
    for (int idx : batch.labeled) sup.emplace_back(data.labeled[idx].features, data.labeled[idx].true_label);
    for (int idx : batch.unlabeled) {
        const TriageResult& t = plan.triage[idx];
        if (t.hc || cfg.low_conf_mode == LowConfMode::direct)
            pseudo.emplace_back(strong_views[idx], t.pseudo_label);
    }

    auto objective = [&](const ModelParams& p, GradientBuffer* grad) {
        double total = 0.0;
        if (!sup.empty()) {
            auto [v, g] = loss_supervised(p, sup);
            total += v;
            if (grad) grad->add(g);
        }
        if (!pseudo.empty()) {
            auto [v, g] = loss_unsupervised(p, pseudo);
            total += cfg.alpha * v;
            if (grad) grad->add_scaled(g, cfg.alpha);
        }
        if (cfg.beta > 0.0) {
            std::vector<ForwardTrace> traces;
            traces.reserve(weak_inputs.size());
            for (const Vec& x : weak_inputs) traces.push_back(forward_extract(p, x));
            auto [v, g] = loss_icpl(p, pool, traces);
            total += cfg.beta * v;
            if (grad) grad->add_scaled(g, cfg.beta);
        }
        return total;
    };

    DescentTrace trace;
    trace.final_lr = cfg.lr;
    ModelParams params = broadcast;
    double current = objective(params, nullptr);
    trace.losses.push_back(current);

    const int max_halvings = 60;
    for (int s = 0; s < steps; ++s) {
        GradientBuffer grad = GradientBuffer::zeros_like(params);
        objective(params, &grad);
        for (;;) {
            ModelParams candidate = sgd_step(params, grad, trace.final_lr);
            double next = objective(candidate, nullptr);
            if (next <= current) {
                params = std::move(candidate);
                current = next;
                trace.losses.push_back(next);
                break;
            }
            trace.final_lr *= 0.5;
            if (++trace.halvings > max_halvings) {
                trace.monotone = false;
                return trace;
            }
        }
    }
    for (std::size_t i = 1; i < trace.losses.size(); ++i)
        if (trace.losses[i] > trace.losses[i - 1]) trace.monotone = false;
    return trace;
}

}  // namespace proxyfed
