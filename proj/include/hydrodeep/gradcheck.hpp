#pragma once

#include <cstdint>

#include "hydrodeep/layers.hpp"
#include "hydrodeep/model.hpp"
#include "hydrodeep/rng.hpp"

namespace hydrodeep {

/// Random small layer of the given kind (dims <= 8) with uniform [-1, 1]
/// parameters, plus a matching input drawn from the same stream.
LayerParams random_conv_layer(Rng& rng, Tensor* input);
LayerParams random_lstm_layer(Rng& rng, Tensor* input);
LayerParams random_dense_layer(Rng& rng, Tensor* input);

/// Random normalized sample for a watershed with `grids` cells.
WindowedSample random_sample(std::size_t grids, Rng& rng);

/// Random tiny architecture for composed-model checks.
ArchSpec random_tiny_arch(Rng& rng);

/// Max relative error between analytic parameter gradients of the model
/// prediction and central finite differences.
double model_grad_check(const Model& model, const WindowedSample& sample, double epsilon);

struct GradcheckSummary {
    double conv_max = 0.0;
    double lstm_max = 0.0;
    double dense_max = 0.0;
    double model_max = 0.0;

    double worst() const;
};

/// Runs `configs_per_kind` seeded random gradient checks per layer kind and
/// `model_configs` composed-model checks (2-grid samples, tiny archs).
GradcheckSummary run_gradcheck_suite(std::uint64_t seed, std::size_t configs_per_kind,
                                     std::size_t model_configs, double epsilon);

}  // namespace hydrodeep
