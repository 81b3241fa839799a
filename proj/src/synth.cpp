#include "hydrodeep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hydrodeep {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// RNG stream ids within a watershed seed.
constexpr std::uint64_t kStreamLayout = 0;
constexpr std::uint64_t kStreamRouting = 1;
constexpr std::uint64_t kStreamGridBase = 16;

// Synthetic series start on 2000-01-01, matching a multi-year daily record.
const Date kStartDate(2000, 1, 1);

}  // namespace

void SynthSpec::validate() const {
    auto in_open = [](double v) { return v > 0.0 && v < 1.0; };
    if (grid_count < 1) throw std::invalid_argument("synth spec: grid_count must be >= 1");
    if (days < 30) throw std::invalid_argument("synth spec: days must be >= 30");
    if (!(climate.mean_precip_mm > 0.0)) {
        throw std::invalid_argument("synth spec: mean precip must be positive");
    }
    if (climate.seasonal_amplitude < 0.0 || climate.seasonal_amplitude > 1.0) {
        throw std::invalid_argument("synth spec: seasonal amplitude must lie in [0, 1]");
    }
    if (climate.storm_rate_per_day < 0.0 || climate.storm_rate_per_day > 1.0) {
        throw std::invalid_argument("synth spec: storm rate must lie in [0, 1]");
    }
    if (climate.storm_scale_mm < 0.0) {
        throw std::invalid_argument("synth spec: storm scale must be >= 0");
    }
    if (!(soil.capacity_mm > 0.0)) {
        throw std::invalid_argument("synth spec: soil capacity must be positive");
    }
    if (!in_open(soil.threshold)) {
        throw std::invalid_argument("synth spec: soil threshold must lie in (0, 1)");
    }
    if (!(soil.quickflow_coeff > 0.0 && soil.quickflow_coeff <= 1.0)) {
        throw std::invalid_argument("synth spec: quickflow coefficient must lie in (0, 1]");
    }
    if (!in_open(soil.baseflow_coeff)) {
        throw std::invalid_argument("synth spec: baseflow coefficient must lie in (0, 1)");
    }
    if (routing.delay_days_per_unit < 0.0) {
        throw std::invalid_argument("synth spec: routing delay must be >= 0");
    }
    if (routing.gauge_noise_frac < 0.0) {
        throw std::invalid_argument("synth spec: gauge noise must be >= 0");
    }
}

SynthSpec SynthSpec::defaults(std::string name, std::size_t grid_count, std::uint64_t seed,
                              std::size_t days) {
    SynthSpec spec;
    spec.name = std::move(name);
    spec.grid_count = grid_count;
    spec.seed = seed;
    spec.days = days;
    return spec;
}

BucketStep bucket_step(double storage, double precip_mm, const SoilSpec& soil) {
    const double wet = storage + precip_mm;
    const double threshold_mm = soil.threshold * soil.capacity_mm;
    const double quick = soil.quickflow_coeff * std::max(0.0, wet - threshold_mm);
    const double base = soil.baseflow_coeff * std::min(wet, threshold_mm);
    BucketStep out;
    out.runoff = quick + base;
    out.storage_after = std::min(soil.capacity_mm, wet - out.runoff);
    return out;
}

std::vector<double> gen_precip(const SynthSpec& spec, Rng& rng) {
    const double factor = rng.uniform(0.9, 1.1);
    const ClimateSpec& c = spec.climate;
    std::vector<double> out(spec.days);
    for (std::size_t t = 0; t < spec.days; ++t) {
        const double seasonal =
            c.mean_precip_mm *
            (1.0 + c.seasonal_amplitude *
                       std::sin(kTwoPi * (static_cast<double>(t) - c.seasonal_phase_days) /
                                365.0));
        double storm = 0.0;
        if (rng.bernoulli(c.storm_rate_per_day)) {
            storm = rng.exponential(c.storm_scale_mm);
        }
        out[t] = std::max(0.0, factor * seasonal + storm);
    }
    return out;
}

std::vector<double> route_discharge(const Tensor& runoff, std::span<const GridCell> grids,
                                    const RoutingSpec& routing, Rng& rng) {
    if (runoff.rank() != 2 || runoff.dims()[0] != grids.size()) {
        throw std::invalid_argument("route_discharge: runoff shape " +
                                    shape_string(runoff.dims()) + " does not match " +
                                    std::to_string(grids.size()) + " grids");
    }
    const std::size_t l = grids.size();
    const std::size_t t_len = runoff.dims()[1];

    // Unit conversion from mm*grid to m^3/s; NSE is scale-free so the
    // constant is kept at 1.
    const double unit = 1.0;

    std::vector<double> discharge(t_len, 0.0);
    for (std::size_t g = 0; g < l; ++g) {
        const auto delay = static_cast<std::size_t>(
            std::llround(routing.delay_days_per_unit * grids[g].dist_to_river));
        const double* row = runoff.data() + g * t_len;
        for (std::size_t t = delay; t < t_len; ++t) {
            discharge[t] += unit * row[t - delay];
        }
    }
    if (routing.gauge_noise_frac > 0.0) {
        const double sigma = routing.gauge_noise_frac;
        for (double& d : discharge) {
            d *= std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
        }
    }
    return discharge;
}

WatershedDataset generate_watershed(const SynthSpec& spec) {
    spec.validate();
    WatershedDataset ds;
    ds.name = spec.name;
    const std::size_t l = spec.grid_count;
    const std::size_t t_len = spec.days;

    // Jittered lattice placement; distances drawn independently of position.
    Rng layout(derive_seed(spec.seed, kStreamLayout));
    const auto side = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(l))));
    ds.grids.reserve(l);
    for (std::size_t i = 0; i < l; ++i) {
        GridCell g;
        g.grid_id = static_cast<std::uint32_t>(i);
        g.x = static_cast<double>(i % side) + layout.uniform(-0.25, 0.25);
        g.y = static_cast<double>(i / side) + layout.uniform(-0.25, 0.25);
        g.dist_to_river = layout.uniform(0.5, 10.0);
        ds.grids.push_back(g);
    }

    ds.dates.reserve(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        ds.dates.push_back(kStartDate.plus_days(static_cast<std::int64_t>(t)));
    }

    ds.precip.reset({l, t_len});
    ds.runoff.reset({l, t_len});
    for (std::size_t g = 0; g < l; ++g) {
        Rng grid_rng(derive_seed(spec.seed, kStreamGridBase + g));
        const std::vector<double> p = gen_precip(spec, grid_rng);
        double storage = 0.0;
        double* prow = ds.precip.data() + g * t_len;
        double* rrow = ds.runoff.data() + g * t_len;
        for (std::size_t t = 0; t < t_len; ++t) {
            prow[t] = p[t];
            const BucketStep step = bucket_step(storage, p[t], spec.soil);
            storage = step.storage_after;
            rrow[t] = step.runoff;
        }
    }

    Rng routing_rng(derive_seed(spec.seed, kStreamRouting));
    ds.discharge = route_discharge(ds.runoff, ds.grids, spec.routing, routing_rng);

    ds.validate();
    return ds;
}

SynthSpec make_related(const SynthSpec& base, std::string name, std::size_t grid_count,
                       std::uint64_t seed) {
    SynthSpec spec = base;
    spec.name = std::move(name);
    spec.grid_count = grid_count;
    spec.seed = seed;
    Rng rng(derive_seed(seed, 0x52454cULL));
    spec.climate.seasonal_phase_days = base.climate.seasonal_phase_days +
                                       rng.uniform(-15.0, 15.0);
    return spec;
}

SynthSpec make_distant(const SynthSpec& base, std::string name, std::size_t grid_count,
                       std::uint64_t seed) {
    SynthSpec spec = base;
    spec.name = std::move(name);
    spec.grid_count = grid_count;
    spec.seed = seed;
    Rng rng(derive_seed(seed, 0x444953ULL));
    spec.soil.threshold = rng.uniform(0.2, 0.8);
    spec.soil.quickflow_coeff = rng.uniform(0.1, 0.9);
    spec.climate.seasonal_amplitude = rng.uniform(0.0, 0.8);
    spec.climate.seasonal_phase_days = rng.uniform(0.0, 365.0);
    return spec;
}

}  // namespace hydrodeep
