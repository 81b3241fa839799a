#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydrodeep/date.hpp"
#include "hydrodeep/tensor.hpp"

namespace hydrodeep {

struct GridCell {
    std::uint32_t grid_id = 0;
    double x = 0.0;
    double y = 0.0;
    double dist_to_river = 0.0;  // same (arbitrary) unit as x, y
};

/// One watershed: its grid cells plus daily per-grid precipitation/runoff
/// series and the gauge discharge label series. Dates are consecutive
/// calendar days; precip/runoff are [L x T], discharge is [T].
struct WatershedDataset {
    std::string name;
    std::vector<GridCell> grids;
    std::vector<Date> dates;
    Tensor precip;   // [L x T], mm/day
    Tensor runoff;   // [L x T], mm/day
    std::vector<double> discharge;  // [T], m^3/s

    std::size_t grid_count() const { return grids.size(); }
    std::size_t day_count() const { return dates.size(); }

    std::optional<std::size_t> date_index(const Date& d) const;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

/// Per-grid multipliers emphasizing precipitation close to the river.
/// Positive, sum to L, and antitone in distance.
struct DistanceWeights {
    std::vector<double> weights;
};

/// w_i = L * (1/(d_i + eps)) / sum_j (1/(d_j + eps)).
DistanceWeights distance_weights(std::span<const double> distances, double epsilon = 1e-6);

/// out[i, t] = w_i * precip[i, t].
Tensor apply_weights(const Tensor& precip, const DistanceWeights& w);

/// Inclusive span of calendar days.
struct DateRange {
    Date first;
    Date last;

    std::size_t length() const {
        const auto n = last.days_since(first) + 1;
        return n > 0 ? static_cast<std::size_t>(n) : 0;
    }
    bool contains(const Date& d) const { return first <= d && d <= last; }
};

/// Min-max scaling statistics per channel kind, fitted on a training range
/// only. A degenerate channel (max == min) scales everything to 0.
struct NormStats {
    struct Channel {
        double min = 0.0;
        double max = 0.0;
        bool degenerate() const { return !(max > min); }
    };
    Channel weighted_precip;
    Channel runoff;
    Channel discharge;

    static double scale(double v, const Channel& c) {
        return c.degenerate() ? 0.0 : (v - c.min) / (c.max - c.min);
    }
    static double unscale(double v, const Channel& c) {
        return c.degenerate() ? c.min : c.min + v * (c.max - c.min);
    }
};

NormStats normalize_fit(const WatershedDataset& ds, const DistanceWeights& w,
                        const DateRange& train_range);

/// Seven-day history window plus target-day inputs and discharge label,
/// all min-max scaled. history is [L x 2 x 7] with channel 0 = weighted
/// precipitation and channel 1 = runoff, columns ordered t_p-7 .. t_p-1;
/// target_day is [L x 2] on day t_p.
struct WindowedSample {
    Tensor history;
    Tensor target_day;
    double label = 0.0;
    Date t_p;
};

/// One sample per day t_p whose full window t_p-7 .. t_p lies inside
/// `range`; count is max(0, range length - 7). Ranges of 7 or fewer days
/// yield an empty list.
std::vector<WindowedSample> window_samples(const WatershedDataset& ds,
                                           const DistanceWeights& w, const NormStats& stats,
                                           const DateRange& range);

/// Reads grids.csv, series.csv, discharge.csv from `dir` and validates the
/// result. Errors name the offending file and line.
WatershedDataset load_watershed(const std::filesystem::path& dir);

/// Writes the three-file CSV layout read back by load_watershed.
void write_watershed(const WatershedDataset& ds, const std::filesystem::path& dir);

}  // namespace hydrodeep
