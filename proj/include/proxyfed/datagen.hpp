#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "proxyfed/linalg.hpp"
#include "proxyfed/rng.hpp"

namespace proxyfed {

// Synthetic stand-in for an image dataset: C Gaussian blobs whose means sit
// on a shared sphere, so shrinking the radius (or growing the noise) creates
// genuinely confusable class pairs.
struct DatasetSpec {
    int input_dim = 16;
    int num_classes = 5;
    int samples_per_class = 200;
    double class_sphere_radius = 3.0;
    double class_noise_std = 1.0;   // 0 collapses each class onto its mean
    double labeled_fraction = 0.1;  // in (0, 1], stratified per class
    double test_fraction = 0.2;     // in (0, 1), stratified per class
    std::uint64_t seed = 0;

    void validate() const;
};

struct Sample {
    Vec features;
    int true_label = 0;       // retained for unlabeled samples too, but only
                              // evaluation/recall metrics may look at it
    bool is_labeled = false;
};

struct ClientDataset {
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;

    long long total_size() const {
        return static_cast<long long>(labeled.size()) + static_cast<long long>(unlabeled.size());
    }
};

struct AugmentConfig {
    double weak_noise_std = 0.05;
    double strong_noise_std = 0.2;   // must be >= weak_noise_std
    double strong_mask_prob = 0.2;   // in [0, 1)

    void validate() const;
};

// Draws class means uniformly on the sphere of radius class_sphere_radius,
// samples mean + isotropic Gaussian noise, splits a stratified test set, and
// marks a stratified labeled fraction inside the remaining train set.
std::pair<std::vector<Sample>, std::vector<Sample>>  // (train, test)
generate_blobs(const DatasetSpec& spec);

// Per class, the labeled pool and the unlabeled pool each get an independent
// Dirichlet(alpha) share vector over the K clients; samples are then assigned
// multinomially. The labeled assignment is redrawn wholesale until every
// client holds at least one labeled sample.
std::vector<ClientDataset> partition_dirichlet(const std::vector<Sample>& train, int K,
                                               double dirichlet_alpha, std::uint64_t seed);

Vec augment_weak(const Vec& x, const AugmentConfig& cfg, Rng& rng);
Vec augment_strong(const Vec& x, const AugmentConfig& cfg, Rng& rng);

}  // namespace proxyfed
