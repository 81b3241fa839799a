#include "hydrodeep/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace hydrodeep {

double nse(std::span<const double> observed, std::span<const double> simulated) {
    if (observed.size() != simulated.size()) {
        throw std::invalid_argument("nse: length mismatch, " + std::to_string(observed.size()) +
                                    " vs " + std::to_string(simulated.size()));
    }
    if (observed.size() < 2) {
        throw std::invalid_argument("nse: need at least 2 points");
    }
    double mean = 0.0;
    for (double v : observed) mean += v;
    mean /= static_cast<double>(observed.size());

    double err = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = observed[i] - simulated[i];
        const double d = observed[i] - mean;
        err += e * e;
        var += d * d;
    }
    if (!(var > 0.0)) {
        throw std::invalid_argument("nse: observed series is constant, NSE undefined");
    }
    return 1.0 - err / var;
}

double rmse(std::span<const double> observed, std::span<const double> simulated) {
    if (observed.size() != simulated.size()) {
        throw std::invalid_argument("rmse: length mismatch, " +
                                    std::to_string(observed.size()) + " vs " +
                                    std::to_string(simulated.size()));
    }
    if (observed.empty()) {
        throw std::invalid_argument("rmse: empty input");
    }
    double err = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = observed[i] - simulated[i];
        err += e * e;
    }
    return std::sqrt(err / static_cast<double>(observed.size()));
}

double relative_improvement(double baseline_nse, double new_nse) {
    if (baseline_nse == 0.0) {
        throw std::invalid_argument("relative_improvement: zero baseline");
    }
    return 100.0 * (new_nse - baseline_nse) / std::fabs(baseline_nse);
}

EvalResult evaluate(const Model& model, std::span<const WindowedSample> samples,
                    const NormStats& stats) {
    if (samples.empty()) {
        throw std::invalid_argument("evaluate: no samples");
    }
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    std::vector<double> observed(samples.size());
    std::vector<double> simulated(samples.size());
#pragma omp parallel
    {
        ModelCache cache;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const double pred = model_forward_cached(model, samples[i], cache);
            simulated[i] = NormStats::unscale(pred, stats.discharge);
            observed[i] = NormStats::unscale(samples[i].label, stats.discharge);
        }
    }
    EvalResult result;
    result.nse = nse(observed, simulated);
    result.rmse = rmse(observed, simulated);
    result.n_points = samples.size();
    return result;
}

}  // namespace hydrodeep
