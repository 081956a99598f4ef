#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "proxyfed/linalg.hpp"
#include "proxyfed/rng.hpp"

namespace proxyfed {

// y = W x + b, tanh applied after every layer except the last (the feature
// layer stays linear).
struct DenseLayer {
    Mat W;
    Vec b;
};

// Extractor θ plus the proxy matrix Ω. Ω is literally the final classifier
// weight matrix (no bias): logits = Ω z, and row c is class c's proxy.
struct ModelParams {
    std::vector<DenseLayer> layers;
    Mat proxies;  // C × d

    int input_dim() const { return layers.empty() ? 0 : layers.front().W.cols; }
    int feature_dim() const { return layers.empty() ? 0 : layers.back().W.rows; }
    int num_classes() const { return proxies.rows; }
};

bool same_architecture(const ModelParams& a, const ModelParams& b);
long long param_count(const ModelParams& p);  // every weight, bias, and proxy entry

// Fresh random model: weights N(0, 1/fan_in), biases 0, proxies N(0, 1/d).
// dims = {hidden..., feature_dim}; e.g. {32, 16} gives D→32(tanh)→16(linear).
ModelParams make_model(int input_dim, const std::vector<int>& dims, int num_classes, Rng& rng);

// Everything forward computes, kept so backprop can run without re-deriving
// intermediates. `pre` holds pre-activation values, `act` post-activation
// (act.back() is the feature z).
struct ForwardTrace {
    Vec input;
    std::vector<Vec> pre;
    std::vector<Vec> act;
    Vec logits;
    Vec probs;

    const Vec& features() const { return act.back(); }
};

ForwardTrace forward_extract(const ModelParams& params, const Vec& x);

// logits = Ω z; probs via max-subtracted softmax.
std::pair<Vec, Vec> classify(const ModelParams& params, const Vec& z);

// Convenience: forward + classify, trace carries logits/probs.
ForwardTrace forward_full(const ModelParams& params, const Vec& x);

// Same shape as ModelParams; accumulates gradients across loss terms.
struct GradientBuffer {
    std::vector<DenseLayer> layers;
    Mat proxies;

    static GradientBuffer zeros_like(const ModelParams& p);
    void add(const GradientBuffer& o);
    void add_scaled(const GradientBuffer& o, double s);
    double abs_max() const;
};

// Backprop of dL/dz through the extractor for one trace; accumulates layer
// gradients into `out`. Proxy-row gradients are the caller's job (each loss
// touches Ω differently).
void backprop_feature(const ModelParams& params, const ForwardTrace& trace, const Vec& dz,
                      GradientBuffer& out);

// params - lr * grads, as a new value.
ModelParams sgd_step(const ModelParams& params, const GradientBuffer& grads, double lr);
void sgd_step_inplace(ModelParams& params, const GradientBuffer& grads, double lr);

// Central-difference verification of an analytic gradient. The error is
// |analytic − numeric| / max(1, |analytic|, |numeric|), i.e. relative for
// large entries and absolute near zero.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    std::size_t n_checked = 0;

    bool pass(double tol) const { return max_rel_err < tol; }
};

GradCheckReport grad_check(const std::function<double(const ModelParams&)>& loss_value,
                           const ModelParams& at, const GradientBuffer& analytic, double h = 1e-6);

// Same harness for losses whose parameter is a bare matrix (the server-side
// proxy objective).
GradCheckReport grad_check_mat(const std::function<double(const Mat&)>& loss_value, const Mat& at,
                               const Mat& analytic, double h = 1e-6);

// Flat binary checkpoint: header (magic, version, dims) then 64-bit
// little-endian doubles, layer-major, row-major, proxies last.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace proxyfed
