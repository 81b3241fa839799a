#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hydrodeep/dataset.hpp"
#include "hydrodeep/model.hpp"

namespace hydrodeep {

/// One iteration is one full pass over the training samples in seeded
/// shuffled mini-batches. Groups named in `freeze` receive no optimizer
/// updates and keep their moment state untouched.
struct TrainConfig {
    std::size_t iterations = 300;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::set<std::string> freeze;

    void validate() const;
};

struct TrainReport {
    std::vector<double> iteration_loss;  // mean training MSE per iteration
    double wall_seconds = 0.0;
    TrainConfig config;
};

/// Mean squared error; throws on empty or mismatched inputs.
double mse_loss(std::span<const double> pred, std::span<const double> target);

/// First/second moment accumulators aligned with param_refs order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState init(const Model& model);
};

/// One bias-corrected Adam update at step index t (1-based). Frozen groups
/// are skipped entirely.
void adam_step(Model& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config, std::uint64_t t);

/// Per-slot forward/backward state reused across mini-batches.
struct BatchWorkspace {
    std::vector<ModelCache> caches;
    std::vector<ModelGrads> grads;
    std::vector<double> sq_err;
};

/// Gradients of the batch MSE for samples[indices]. Per-sample passes run
/// in parallel (OpenMP); the reduction into `out` is in sample order, so
/// results are bit-identical for any thread count. Returns the batch MSE.
double batch_gradients(const Model& model, std::span<const WindowedSample> samples,
                       std::span<const std::size_t> indices, ModelGrads& out,
                       const GradRequest& request, BatchWorkspace& workspace);
double batch_gradients(const Model& model, std::span<const WindowedSample> samples,
                       std::span<const std::size_t> indices, ModelGrads& out,
                       const GradRequest& request = {});

/// Mini-batch MSE training. Deterministic for a fixed (model, samples,
/// config.seed) regardless of thread count: per-sample gradients are
/// computed in parallel but reduced in sample order.
TrainReport train(Model& model, std::span<const WindowedSample> samples,
                  const TrainConfig& config);

/// Hyperparameter ranges for random search. Architecture fields are
/// categorical; the learning rate is log-uniform.
struct SearchSpace {
    double log10_lr_min = -4.0;
    double log10_lr_max = -2.0;
    std::vector<std::vector<ConvLayerSpec>> conv_options;
    std::vector<std::vector<std::size_t>> lstm_options;
    std::vector<std::size_t> target_branch_options;
    std::vector<std::vector<std::size_t>> head_options;
    std::vector<std::size_t> batch_options;
    std::size_t trials = 20;
    std::size_t trial_iterations = 30;
    std::uint64_t seed = 0;

    void validate() const;

    static SearchSpace default_space();
};

struct SearchTrial {
    ArchSpec arch;
    TrainConfig config;
    std::uint64_t model_seed = 0;
    double validation_nse = 0.0;
};

struct SearchResult {
    std::vector<SearchTrial> trials;
    std::size_t best_index = 0;

    const SearchTrial& best() const { return trials[best_index]; }
};

/// Draws `space.trials` seeded configurations, trains each for
/// space.trial_iterations and scores validation NSE (de-normalized via
/// `stats`); returns the argmax with the full trial log. Trial RNG streams
/// are pre-split from the search seed.
SearchResult random_search(const SearchSpace& space,
                           std::span<const WindowedSample> train_samples,
                           std::span<const WindowedSample> validation_samples,
                           const NormStats& stats);

}  // namespace hydrodeep
