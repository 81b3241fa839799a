#pragma once

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hydrodeep/dataset.hpp"
#include "hydrodeep/metrics.hpp"
#include "hydrodeep/model.hpp"
#include "hydrodeep/train.hpp"

namespace hydrodeep {

/// The four ways of reusing a pretrained model on a new watershed:
///   T-HD-1  evaluate as-is, no training;
///   T-HD-2  finetune everything;
///   T-HD-3  finetune temporal layers (conv and target branch stay frozen);
///   T-HD-4  finetune spatial layers (lstm stays frozen).
enum class TransferMode { thd1, thd2, thd3, thd4 };

inline constexpr std::array<TransferMode, 4> kAllTransferModes = {
    TransferMode::thd1, TransferMode::thd2, TransferMode::thd3, TransferMode::thd4};

std::string_view to_string(TransferMode mode);
TransferMode transfer_mode_from_string(const std::string& s);

struct TransferPlan {
    TransferMode mode = TransferMode::thd1;
    std::set<std::string> frozen;
    std::size_t finetune_iterations = 0;
};

/// Fixed mode -> freeze-mask mapping. `finetune_iterations` applies to the
/// trained modes; T-HD-1 always gets zero iterations.
TransferPlan make_transfer_plan(TransferMode mode, std::size_t finetune_iterations = 20);

/// Applies the plan to a copy of the source model: loads the parameters
/// unchanged, freezes the plan's groups, and finetunes on the target
/// samples. T-HD-1 performs no training at all (no optimizer state is
/// created). `config` supplies optimizer settings and the seed; its
/// iteration count and freeze set are overridden by the plan.
std::pair<Model, TrainReport> transfer_model(const Model& source, const TransferPlan& plan,
                                             std::span<const WindowedSample> target_train,
                                             TrainConfig config);

/// Leading `train_fraction` of the dates, remainder for testing.
std::pair<DateRange, DateRange> split_dataset(const WatershedDataset& ds,
                                              double train_fraction = 0.7);

struct TransferTarget {
    std::string name;
    const WatershedDataset* dataset = nullptr;
};

struct MatrixCell {
    std::string target;
    std::size_t grids = 0;
    std::string mode;  // "HD" or "T-HD-1".."T-HD-4"
    EvalResult eval;
    double train_seconds = 0.0;
    std::vector<double> losses;  // per-iteration training loss
};

struct TransferMatrix {
    std::vector<MatrixCell> cells;  // target-major, HD first then the modes
};

/// Evaluates the from-scratch baseline ("HD", a fresh model trained for the
/// same finetune budget) plus every requested transfer mode on each
/// target's test split. Normalization is refit on each target's training
/// split. With `parallel_cells` the independent (target, mode) cells run
/// concurrently; seeds are pre-split so results match serial execution.
TransferMatrix run_transfer_matrix(const Model& source,
                                   std::span<const TransferTarget> targets,
                                   std::span<const TransferMode> modes,
                                   const TrainConfig& base_config,
                                   std::size_t finetune_iterations,
                                   bool parallel_cells = false);

/// CSV with header target,grids,mode,nse,rmse,train_seconds.
void write_matrix_csv(const TransferMatrix& matrix, const std::filesystem::path& path);

/// Fixed-width text table, one row per target with columns HD, T-HD-1..4
/// and the mean finetune time; the best NSE in each row is marked '*'.
std::string format_matrix_table(const TransferMatrix& matrix);

}  // namespace hydrodeep
