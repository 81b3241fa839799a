#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hydrodeep/config.hpp"
#include "hydrodeep/gradcheck.hpp"
#include "hydrodeep/metrics.hpp"
#include "hydrodeep/transfer.hpp"

namespace hydrodeep {

inline constexpr std::string_view kToolVersion = "hydrodeep 0.1.0";

/// Named evaluation splits: "train" is the leading 70% of dates, "test" the
/// rest, "val" the trailing 15% of the train split.
DateRange named_split(const WatershedDataset& ds, const std::string& name);

struct GenRow {
    std::string name;
    std::size_t grids = 0;
    std::size_t days = 0;
};

/// Generates the declared source and target watersheds under `out_dir`, one
/// CSV directory each. Refuses to write into an existing non-empty directory
/// unless `force` is set.
std::vector<GenRow> cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir,
                            bool force);

struct PretrainResult {
    TrainReport report;
    double train_nse = 0.0;
    double validation_nse = 0.0;
    std::filesystem::path checkpoint_path;
    std::filesystem::path report_path;
};

/// Trains the configured architecture on the train split of `data_dir` and
/// writes the checkpoint plus an iteration,loss report CSV next to it.
PretrainResult cmd_pretrain(const RunConfig& config, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_checkpoint);

struct TransferCmdResult {
    TransferMatrix matrix;
    std::string table;
    std::filesystem::path csv_path;
    std::filesystem::path table_path;
};

/// Runs the HD baseline plus all four transfer modes on every configured
/// target under `targets_dir`; writes results.csv and table.txt to `out_dir`.
TransferCmdResult cmd_transfer(const RunConfig& config,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& targets_dir,
                               const std::filesystem::path& out_dir);

/// Zero-shot evaluation of a checkpoint on a named split. Normalization is
/// always fit on the train split of `data_dir`.
EvalResult cmd_eval(const std::filesystem::path& checkpoint_path,
                    const std::filesystem::path& data_dir, const std::string& split,
                    const std::optional<std::filesystem::path>& out_csv);

struct GradcheckResult {
    GradcheckSummary summary;
    double injected_error = 0.0;  // only meaningful with inject_fault
    bool pass = false;
    double seconds = 0.0;
};

/// Layer-kind and composed-model gradient verification. `inject_fault`
/// deliberately corrupts one analytic gradient; a healthy harness must then
/// report failure.
GradcheckResult cmd_gradcheck(bool inject_fault);

}  // namespace hydrodeep
