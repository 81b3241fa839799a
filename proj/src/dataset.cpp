#include "hydrodeep/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hydrodeep {

std::optional<std::size_t> WatershedDataset::date_index(const Date& d) const {
    if (dates.empty() || d < dates.front() || d > dates.back()) return std::nullopt;
    return static_cast<std::size_t>(d.days_since(dates.front()));
}

void WatershedDataset::validate() const {
    const std::size_t l = grids.size();
    const std::size_t t = dates.size();
    if (l == 0) throw std::invalid_argument("watershed '" + name + "': no grids");
    if (t == 0) throw std::invalid_argument("watershed '" + name + "': no dates");
    for (std::size_t i = 1; i < t; ++i) {
        if (dates[i].days_since(dates[i - 1]) != 1) {
            throw std::invalid_argument("watershed '" + name + "': date gap between " +
                                        dates[i - 1].to_string() + " and " +
                                        dates[i].to_string());
        }
    }
    std::vector<std::uint32_t> ids;
    ids.reserve(l);
    for (const GridCell& g : grids) {
        if (g.dist_to_river < 0.0) {
            throw std::invalid_argument("watershed '" + name + "': grid " +
                                        std::to_string(g.grid_id) + " has negative distance");
        }
        ids.push_back(g.grid_id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw std::invalid_argument("watershed '" + name + "': duplicate grid_id");
    }
    const std::vector<std::size_t> want{l, t};
    if (precip.dims() != want || runoff.dims() != want) {
        throw std::invalid_argument("watershed '" + name + "': series shape mismatch, want " +
                                    shape_string(want));
    }
    if (discharge.size() != t) {
        throw std::invalid_argument("watershed '" + name + "': discharge length " +
                                    std::to_string(discharge.size()) + " != day count " +
                                    std::to_string(t));
    }
    for (std::size_t i = 0; i < precip.size(); ++i) {
        if (!(precip[i] >= 0.0)) {
            throw std::invalid_argument("watershed '" + name + "': negative or non-finite precip");
        }
        if (!(runoff[i] >= 0.0)) {
            throw std::invalid_argument("watershed '" + name + "': negative or non-finite runoff");
        }
    }
    check_finite(discharge, "watershed '" + name + "' discharge");
}

DistanceWeights distance_weights(std::span<const double> distances, double epsilon) {
    if (distances.empty()) {
        throw std::invalid_argument("distance_weights: empty distance vector");
    }
    const std::size_t l = distances.size();
    std::vector<double> raw(l);
    double sum = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        if (distances[i] < 0.0) {
            throw std::invalid_argument("distance_weights: negative distance at index " +
                                        std::to_string(i));
        }
        raw[i] = 1.0 / (distances[i] + epsilon);
        sum += raw[i];
    }
    DistanceWeights w;
    w.weights.resize(l);
    const double scale = static_cast<double>(l) / sum;
    for (std::size_t i = 0; i < l; ++i) w.weights[i] = raw[i] * scale;
    return w;
}

Tensor apply_weights(const Tensor& precip, const DistanceWeights& w) {
    if (precip.rank() != 2 || precip.dims()[0] != w.weights.size()) {
        throw std::invalid_argument("apply_weights: precip shape " +
                                    shape_string(precip.dims()) + " does not match " +
                                    std::to_string(w.weights.size()) + " weights");
    }
    const std::size_t l = precip.dims()[0];
    const std::size_t t = precip.dims()[1];
    Tensor out({l, t});
    for (std::size_t i = 0; i < l; ++i) {
        const double wi = w.weights[i];
        const double* src = precip.data() + i * t;
        double* dst = out.data() + i * t;
        for (std::size_t j = 0; j < t; ++j) dst[j] = wi * src[j];
    }
    return out;
}

namespace {

std::pair<std::size_t, std::size_t> range_indices(const WatershedDataset& ds,
                                                  const DateRange& range,
                                                  const char* what) {
    if (range.last < range.first) {
        throw std::invalid_argument(std::string(what) + ": empty date range");
    }
    const auto first = ds.date_index(range.first);
    const auto last = ds.date_index(range.last);
    if (!first || !last) {
        throw std::invalid_argument(std::string(what) + ": range " + range.first.to_string() +
                                    " .. " + range.last.to_string() +
                                    " not within dataset dates");
    }
    return {*first, *last};
}

}  // namespace

NormStats normalize_fit(const WatershedDataset& ds, const DistanceWeights& w,
                        const DateRange& train_range) {
    const auto [i0, i1] = range_indices(ds, train_range, "normalize_fit");
    const std::size_t l = ds.grid_count();
    const std::size_t t = ds.day_count();

    NormStats stats;
    bool started = false;
    for (std::size_t g = 0; g < l; ++g) {
        const double wg = w.weights.at(g);
        const double* prow = ds.precip.data() + g * t;
        const double* rrow = ds.runoff.data() + g * t;
        for (std::size_t i = i0; i <= i1; ++i) {
            const double p = wg * prow[i];
            const double r = rrow[i];
            if (!started) {
                stats.weighted_precip = {p, p};
                stats.runoff = {r, r};
                started = true;
            } else {
                stats.weighted_precip.min = std::min(stats.weighted_precip.min, p);
                stats.weighted_precip.max = std::max(stats.weighted_precip.max, p);
                stats.runoff.min = std::min(stats.runoff.min, r);
                stats.runoff.max = std::max(stats.runoff.max, r);
            }
        }
    }
    stats.discharge = {ds.discharge[i0], ds.discharge[i0]};
    for (std::size_t i = i0; i <= i1; ++i) {
        stats.discharge.min = std::min(stats.discharge.min, ds.discharge[i]);
        stats.discharge.max = std::max(stats.discharge.max, ds.discharge[i]);
    }
    return stats;
}

std::vector<WindowedSample> window_samples(const WatershedDataset& ds,
                                           const DistanceWeights& w, const NormStats& stats,
                                           const DateRange& range) {
    std::vector<WindowedSample> samples;
    if (range.length() <= 7) return samples;
    const auto [i0, i1] = range_indices(ds, range, "window_samples");
    const std::size_t l = ds.grid_count();
    const std::size_t t = ds.day_count();
    if (w.weights.size() != l) {
        throw std::invalid_argument("window_samples: weight count mismatch");
    }

    samples.reserve(i1 - i0 - 6);
    for (std::size_t tp = i0 + 7; tp <= i1; ++tp) {
        WindowedSample s;
        s.history.reset({l, 2, 7});
        s.target_day.reset({l, 2});
        for (std::size_t g = 0; g < l; ++g) {
            const double wg = w.weights[g];
            const double* prow = ds.precip.data() + g * t;
            const double* rrow = ds.runoff.data() + g * t;
            double* hp = s.history.data() + g * 14;
            for (std::size_t d = 0; d < 7; ++d) {
                const std::size_t at = tp - 7 + d;
                hp[d] = NormStats::scale(wg * prow[at], stats.weighted_precip);
                hp[7 + d] = NormStats::scale(rrow[at], stats.runoff);
            }
            s.target_day[g * 2] = NormStats::scale(wg * prow[tp], stats.weighted_precip);
            s.target_day[g * 2 + 1] = NormStats::scale(rrow[tp], stats.runoff);
        }
        s.label = NormStats::scale(ds.discharge[tp], stats.discharge);
        s.t_p = ds.dates[tp];
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---------------------------------------------------------------------------
// CSV ingestion. The schema is deliberately plain: no quoting, `.` decimal
// point, one header line.
// ---------------------------------------------------------------------------

namespace {

struct CsvReader {
    std::filesystem::path path;
    std::ifstream in;
    std::size_t line_no = 0;

    explicit CsvReader(const std::filesystem::path& p) : path(p), in(p) {
        if (!in) {
            throw std::invalid_argument("cannot open " + p.string());
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::invalid_argument(path.filename().string() + ":" + std::to_string(line_no) +
                                    ": " + msg);
    }

    bool next(std::vector<std::string>& fields) {
        std::string line;
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        fields.clear();
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        return true;
    }

    void expect_header(const std::string& want) {
        std::vector<std::string> fields;
        if (!next(fields)) fail("missing header, expected '" + want + "'");
        std::string got;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) got += ',';
            got += fields[i];
        }
        if (got != want) fail("bad header '" + got + "', expected '" + want + "'");
    }

    double parse_double(const std::string& s) {
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
            fail("malformed number '" + s + "'");
        }
        return v;
    }

    std::uint32_t parse_u32(const std::string& s) {
        errno = 0;
        char* end = nullptr;
        const unsigned long v = std::strtoul(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0' || errno == ERANGE || v > UINT32_MAX) {
            fail("malformed id '" + s + "'");
        }
        return static_cast<std::uint32_t>(v);
    }

    Date parse_date(const std::string& s) {
        try {
            return Date::parse(s);
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }
};

}  // namespace

WatershedDataset load_watershed(const std::filesystem::path& dir) {
    WatershedDataset ds;
    ds.name = dir.filename().string();

    {
        CsvReader r(dir / "grids.csv");
        r.expect_header("grid_id,x,y,dist_to_river");
        std::vector<std::string> f;
        while (r.next(f)) {
            if (f.size() == 1 && f[0].empty()) continue;  // trailing newline
            if (f.size() != 4) r.fail("expected 4 fields, got " + std::to_string(f.size()));
            GridCell g;
            g.grid_id = r.parse_u32(f[0]);
            g.x = r.parse_double(f[1]);
            g.y = r.parse_double(f[2]);
            g.dist_to_river = r.parse_double(f[3]);
            if (g.dist_to_river < 0.0) r.fail("negative dist_to_river");
            ds.grids.push_back(g);
        }
        if (ds.grids.empty()) r.fail("no grid rows");
    }

    const std::size_t l = ds.grids.size();
    std::map<std::uint32_t, std::size_t> grid_index;
    for (std::size_t i = 0; i < l; ++i) {
        if (!grid_index.emplace(ds.grids[i].grid_id, i).second) {
            throw std::invalid_argument((dir / "grids.csv").filename().string() +
                                        ": duplicate grid_id " +
                                        std::to_string(ds.grids[i].grid_id));
        }
    }

    // series.csv: exactly L rows per date, dates consecutive.
    std::vector<double> precip_rows;  // [T][L] collected date-major
    std::vector<double> runoff_rows;
    {
        CsvReader r(dir / "series.csv");
        r.expect_header("date,grid_id,precip_mm,runoff_mm");
        std::vector<std::string> f;
        std::vector<bool> seen(l, false);
        std::size_t seen_count = 0;
        bool have_date = false;
        Date current;
        while (r.next(f)) {
            if (f.size() == 1 && f[0].empty()) continue;
            if (f.size() != 4) r.fail("expected 4 fields, got " + std::to_string(f.size()));
            const Date d = r.parse_date(f[0]);
            if (!have_date || d != current) {
                if (have_date) {
                    if (seen_count != l) {
                        r.fail("date " + current.to_string() + " has " +
                               std::to_string(seen_count) + " rows, expected " +
                               std::to_string(l));
                    }
                    if (d.days_since(current) != 1) {
                        r.fail("date gap: " + current.to_string() + " -> " + d.to_string());
                    }
                } else {
                    have_date = true;
                }
                current = d;
                ds.dates.push_back(d);
                std::fill(seen.begin(), seen.end(), false);
                seen_count = 0;
                precip_rows.resize(precip_rows.size() + l, 0.0);
                runoff_rows.resize(runoff_rows.size() + l, 0.0);
            }
            const auto it = grid_index.find(r.parse_u32(f[1]));
            if (it == grid_index.end()) r.fail("unknown grid_id " + f[1]);
            const std::size_t gi = it->second;
            if (seen[gi]) {
                r.fail("duplicate (grid_id " + f[1] + ", date " + current.to_string() + ")");
            }
            seen[gi] = true;
            ++seen_count;
            const double p = r.parse_double(f[2]);
            const double q = r.parse_double(f[3]);
            if (p < 0.0) r.fail("negative precip_mm");
            if (q < 0.0) r.fail("negative runoff_mm");
            const std::size_t base = (ds.dates.size() - 1) * l;
            precip_rows[base + gi] = p;
            runoff_rows[base + gi] = q;
        }
        if (!have_date) r.fail("no data rows");
        if (seen_count != l) {
            r.fail("date " + current.to_string() + " has " + std::to_string(seen_count) +
                   " rows, expected " + std::to_string(l));
        }
    }

    const std::size_t t = ds.dates.size();
    ds.precip.reset({l, t});
    ds.runoff.reset({l, t});
    for (std::size_t day = 0; day < t; ++day) {
        for (std::size_t g = 0; g < l; ++g) {
            ds.precip[g * t + day] = precip_rows[day * l + g];
            ds.runoff[g * t + day] = runoff_rows[day * l + g];
        }
    }

    {
        CsvReader r(dir / "discharge.csv");
        r.expect_header("date,discharge_m3s");
        std::vector<std::string> f;
        std::size_t at = 0;
        while (r.next(f)) {
            if (f.size() == 1 && f[0].empty()) continue;
            if (f.size() != 2) r.fail("expected 2 fields, got " + std::to_string(f.size()));
            const Date d = r.parse_date(f[0]);
            if (at >= t) r.fail("more discharge rows than series dates");
            if (d != ds.dates[at]) {
                r.fail("date " + d.to_string() + " does not match series date " +
                       ds.dates[at].to_string());
            }
            ds.discharge.push_back(r.parse_double(f[1]));
            ++at;
        }
        if (at != t) {
            r.fail("discharge has " + std::to_string(at) + " rows, series has " +
                   std::to_string(t) + " dates");
        }
    }

    ds.validate();
    return ds;
}

namespace {

void write_double(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

}  // namespace

void write_watershed(const WatershedDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    const std::size_t l = ds.grid_count();
    const std::size_t t = ds.day_count();

    {
        std::ofstream out(dir / "grids.csv");
        out << "grid_id,x,y,dist_to_river\n";
        for (const GridCell& g : ds.grids) {
            out << g.grid_id << ',';
            write_double(out, g.x);
            out << ',';
            write_double(out, g.y);
            out << ',';
            write_double(out, g.dist_to_river);
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "series.csv");
        out << "date,grid_id,precip_mm,runoff_mm\n";
        for (std::size_t day = 0; day < t; ++day) {
            const std::string date = ds.dates[day].to_string();
            for (std::size_t g = 0; g < l; ++g) {
                out << date << ',' << ds.grids[g].grid_id << ',';
                write_double(out, ds.precip[g * t + day]);
                out << ',';
                write_double(out, ds.runoff[g * t + day]);
                out << '\n';
            }
        }
    }
    {
        std::ofstream out(dir / "discharge.csv");
        out << "date,discharge_m3s\n";
        for (std::size_t day = 0; day < t; ++day) {
            out << ds.dates[day].to_string() << ',';
            write_double(out, ds.discharge[day]);
            out << '\n';
        }
    }
}

}  // namespace hydrodeep
