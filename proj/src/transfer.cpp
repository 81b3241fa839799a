#include "hydrodeep/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hydrodeep/rng.hpp"

namespace hydrodeep {

std::string_view to_string(TransferMode mode) {
    switch (mode) {
        case TransferMode::thd1: return "T-HD-1";
        case TransferMode::thd2: return "T-HD-2";
        case TransferMode::thd3: return "T-HD-3";
        case TransferMode::thd4: return "T-HD-4";
    }
    return "?";
}

TransferMode transfer_mode_from_string(const std::string& s) {
    for (TransferMode m : kAllTransferModes) {
        if (s == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown transfer mode '" + s + "', expected T-HD-1..T-HD-4");
}

TransferPlan make_transfer_plan(TransferMode mode, std::size_t finetune_iterations) {
    TransferPlan plan;
    plan.mode = mode;
    switch (mode) {
        case TransferMode::thd1:
            plan.frozen = {std::string(kGroupConv), std::string(kGroupLstm),
                           std::string(kGroupTargetBranch), std::string(kGroupHead)};
            plan.finetune_iterations = 0;
            break;
        case TransferMode::thd2:
            plan.frozen = {};
            plan.finetune_iterations = finetune_iterations;
            break;
        case TransferMode::thd3:
            plan.frozen = {std::string(kGroupConv), std::string(kGroupTargetBranch)};
            plan.finetune_iterations = finetune_iterations;
            break;
        case TransferMode::thd4:
            plan.frozen = {std::string(kGroupLstm)};
            plan.finetune_iterations = finetune_iterations;
            break;
    }
    return plan;
}

std::pair<Model, TrainReport> transfer_model(const Model& source, const TransferPlan& plan,
                                             std::span<const WindowedSample> target_train,
                                             TrainConfig config) {
    Model model = source;
    if (plan.mode == TransferMode::thd1 || plan.finetune_iterations == 0) {
        TrainReport report;
        config.iterations = 0;
        config.freeze = plan.frozen;
        report.config = config;
        return {std::move(model), report};
    }
    if (target_train.empty()) {
        throw std::invalid_argument("transfer_model: " + std::string(to_string(plan.mode)) +
                                    " needs target training samples");
    }
    config.iterations = plan.finetune_iterations;
    config.freeze = plan.frozen;
    TrainReport report = train(model, target_train, config);
    return {std::move(model), report};
}

std::pair<DateRange, DateRange> split_dataset(const WatershedDataset& ds,
                                              double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("split_dataset: train fraction must lie in (0, 1)");
    }
    const std::size_t t = ds.day_count();
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(t) * train_fraction));
    n_train = std::clamp<std::size_t>(n_train, 1, t - 1);
    DateRange train{ds.dates.front(), ds.dates[n_train - 1]};
    DateRange test{ds.dates[n_train], ds.dates.back()};
    return {train, test};
}

namespace {

struct PreparedTarget {
    std::string name;
    std::size_t grids = 0;
    NormStats stats;
    std::vector<WindowedSample> train_samples;
    std::vector<WindowedSample> test_samples;
};

PreparedTarget prepare_target(const TransferTarget& target) {
    if (target.dataset == nullptr) {
        throw std::invalid_argument("run_transfer_matrix: target '" + target.name +
                                    "' has no dataset");
    }
    const WatershedDataset& ds = *target.dataset;
    PreparedTarget prep;
    prep.name = target.name;
    prep.grids = ds.grid_count();
    std::vector<double> dists;
    dists.reserve(ds.grid_count());
    for (const GridCell& g : ds.grids) dists.push_back(g.dist_to_river);
    const DistanceWeights w = distance_weights(dists);
    const auto [train_range, test_range] = split_dataset(ds);
    prep.stats = normalize_fit(ds, w, train_range);
    prep.train_samples = window_samples(ds, w, prep.stats, train_range);
    prep.test_samples = window_samples(ds, w, prep.stats, test_range);
    return prep;
}

}  // namespace

TransferMatrix run_transfer_matrix(const Model& source,
                                   std::span<const TransferTarget> targets,
                                   std::span<const TransferMode> modes,
                                   const TrainConfig& base_config,
                                   std::size_t finetune_iterations, bool parallel_cells) {
    std::vector<PreparedTarget> prepared;
    prepared.reserve(targets.size());
    for (const TransferTarget& t : targets) prepared.push_back(prepare_target(t));

    const std::size_t cells_per_target = 1 + modes.size();
    TransferMatrix matrix;
    matrix.cells.resize(targets.size() * cells_per_target);

    const std::int64_t total = static_cast<std::int64_t>(matrix.cells.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel_cells)
    for (std::int64_t flat = 0; flat < total; ++flat) {
        const std::size_t ti = static_cast<std::size_t>(flat) / cells_per_target;
        const std::size_t ci = static_cast<std::size_t>(flat) % cells_per_target;
        const PreparedTarget& prep = prepared[ti];

        MatrixCell& cell = matrix.cells[flat];
        cell.target = prep.name;
        cell.grids = prep.grids;

        TrainConfig config = base_config;
        config.seed = derive_seed(base_config.seed, 64 * ti + ci);

        Model model;
        TrainReport report;
        if (ci == 0) {
            cell.mode = "HD";
            config.iterations = finetune_iterations;
            config.freeze = {};
            model = build_model(source.arch, derive_seed(base_config.seed, 0x4844u + ti));
            report = train(model, prep.train_samples, config);
        } else {
            const TransferMode mode = modes[ci - 1];
            cell.mode = std::string(to_string(mode));
            const TransferPlan plan = make_transfer_plan(mode, finetune_iterations);
            auto [transferred, r] = transfer_model(source, plan, prep.train_samples, config);
            model = std::move(transferred);
            report = std::move(r);
        }
        cell.train_seconds = report.wall_seconds;
        cell.losses = std::move(report.iteration_loss);
        cell.eval = evaluate(model, prep.test_samples, prep.stats);
    }
    return matrix;
}

void write_matrix_csv(const TransferMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::invalid_argument("cannot open results csv for writing: " + path.string());
    }
    out << "target,grids,mode,nse,rmse,train_seconds\n";
    char buf[128];
    for (const MatrixCell& c : matrix.cells) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.6f", c.eval.nse, c.eval.rmse,
                      c.train_seconds);
        out << c.target << ',' << c.grids << ',' << c.mode << ',' << buf << '\n';
    }
}

std::string format_matrix_table(const TransferMatrix& matrix) {
    // Collect per-target rows preserving first-seen order.
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, const MatrixCell*>> rows;
    std::map<std::string, std::size_t> grids;
    for (const MatrixCell& c : matrix.cells) {
        if (!rows.contains(c.target)) order.push_back(c.target);
        rows[c.target][c.mode] = &c;
        grids[c.target] = c.grids;
    }

    const std::vector<std::string> columns = {"HD", "T-HD-1", "T-HD-2", "T-HD-3", "T-HD-4"};
    std::ostringstream out;
    char buf[64];
    out << "target            grids     HD  T-HD-1  T-HD-2  T-HD-3  T-HD-4   time(s)\n";
    for (const std::string& name : order) {
        const auto& row = rows[name];
        double best = 0.0;
        bool have_best = false;
        for (const auto& [mode, cell] : row) {
            if (!have_best || cell->eval.nse > best) {
                best = cell->eval.nse;
                have_best = true;
            }
        }
        std::snprintf(buf, sizeof(buf), "%-16s %6zu", name.c_str(), grids[name]);
        out << buf;
        double time_sum = 0.0;
        std::size_t time_count = 0;
        for (const std::string& col : columns) {
            const auto it = row.find(col);
            if (it == row.end()) {
                out << "       -";
                continue;
            }
            const MatrixCell& cell = *it->second;
            std::snprintf(buf, sizeof(buf), " %6.3f%c", cell.eval.nse,
                          cell.eval.nse == best ? '*' : ' ');
            out << buf;
            if (col != "HD" && !cell.losses.empty()) {
                time_sum += cell.train_seconds;
                ++time_count;
            }
        }
        std::snprintf(buf, sizeof(buf), "  %8.2f",
                      time_count ? time_sum / static_cast<double>(time_count) : 0.0);
        out << buf << '\n';
    }
    return out.str();
}

}  // namespace hydrodeep
