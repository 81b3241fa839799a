#pragma once

#include <cstddef>
#include <span>

#include "hydrodeep/dataset.hpp"
#include "hydrodeep/model.hpp"

namespace hydrodeep {

struct EvalResult {
    double nse = 0.0;    // <= 1, 1 is perfect
    double rmse = 0.0;   // de-normalized discharge units
    std::size_t n_points = 0;
};

/// Nash-Sutcliffe efficiency: 1 - sum((obs-sim)^2) / sum((obs-mean)^2).
/// Throws if fewer than two points or if `observed` is constant.
double nse(std::span<const double> observed, std::span<const double> simulated);

double rmse(std::span<const double> observed, std::span<const double> simulated);

/// 100 * (updated - baseline) / |baseline|; throws on zero baseline.
double relative_improvement(double baseline_nse, double new_nse);

/// Runs the model on every sample, de-normalizes predictions and labels via
/// `stats`, and scores NSE/RMSE on the de-normalized values.
EvalResult evaluate(const Model& model, std::span<const WindowedSample> samples,
                    const NormStats& stats);

}  // namespace hydrodeep
