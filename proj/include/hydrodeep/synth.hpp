#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hydrodeep/dataset.hpp"
#include "hydrodeep/rng.hpp"

namespace hydrodeep {

struct ClimateSpec {
    double mean_precip_mm = 3.0;       // mean daily precipitation level
    double seasonal_amplitude = 0.4;   // 0..1 fraction of the mean
    double seasonal_phase_days = 90.0;
    double storm_rate_per_day = 0.04;  // Bernoulli arrival probability
    double storm_scale_mm = 4.0;       // exponential storm magnitude
};

struct SoilSpec {
    double capacity_mm = 150.0;
    double threshold = 0.4;        // theta in (0,1)
    double quickflow_coeff = 0.3;  // k in (0,1]
    double baseflow_coeff = 0.05;  // b in (0,1)
};

struct RoutingSpec {
    double delay_days_per_unit = 0.2;  // days of lag per distance unit
    double gauge_noise_frac = 0.05;    // multiplicative log-normal noise
};

/// Full recipe for one synthetic watershed. Generation is a pure function
/// of this spec.
struct SynthSpec {
    std::string name;
    std::size_t grid_count = 1;
    std::uint64_t seed = 0;
    std::size_t days = 365;
    ClimateSpec climate;
    SoilSpec soil;
    RoutingSpec routing;

    void validate() const;  // throws on out-of-range fields

    static SynthSpec defaults(std::string name, std::size_t grid_count, std::uint64_t seed,
                              std::size_t days);
};

struct BucketStep {
    double storage_after = 0.0;
    double runoff = 0.0;
};

/// Daily soil-bucket update: threshold quickflow plus linear baseflow.
/// quick = k * max(0, S + p - theta*cap); base = b * min(S + p, theta*cap);
/// S' = min(cap, S + p - quick - base).
BucketStep bucket_step(double storage, double precip_mm, const SoilSpec& soil);

/// Daily precipitation series: seasonal sinusoid around the mean plus a
/// Bernoulli/exponential storm process, scaled by a per-grid factor in
/// [0.9, 1.1] drawn first from `rng`.
std::vector<double> gen_precip(const SynthSpec& spec, Rng& rng);

/// Sums per-grid runoff into gauge discharge, delaying each grid by
/// round(delay_per_unit * dist_to_river) days; days delayed past the start
/// read zero. Applies mean-one multiplicative log-normal noise last.
std::vector<double> route_discharge(const Tensor& runoff, std::span<const GridCell> grids,
                                    const RoutingSpec& routing, Rng& rng);

/// Grids on a seeded jittered lattice with distances uniform in [0.5, 10],
/// then gen_precip -> bucket_step -> route_discharge.
WatershedDataset generate_watershed(const SynthSpec& spec);

/// Target spec sharing the base's soil and routing; only the seasonal phase
/// shifts (at most 15 days) and the grid layout changes.
SynthSpec make_related(const SynthSpec& base, std::string name, std::size_t grid_count,
                       std::uint64_t seed);

/// Target spec with soil threshold/quickflow and climate amplitude/phase
/// redrawn, emulating a hydrologically distant watershed.
SynthSpec make_distant(const SynthSpec& base, std::string name, std::size_t grid_count,
                       std::uint64_t seed);

}  // namespace hydrodeep
