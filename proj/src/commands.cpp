#include "hydrodeep/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <list>
#include <stdexcept>

namespace hydrodeep {

namespace {

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const RunConfig& config) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    out << "tool = " << kToolVersion << "\n";
    out << "command = " << command << "\n";
    out << "config_hash = " << config.hash() << "\n";
}

struct LoadedWatershed {
    WatershedDataset dataset;
    DistanceWeights weights;
    DateRange train_range{};
    DateRange test_range{};
    NormStats stats;
};

LoadedWatershed load_prepared(const std::filesystem::path& dir) {
    LoadedWatershed w;
    w.dataset = load_watershed(dir);
    std::vector<double> dists;
    for (const GridCell& g : w.dataset.grids) dists.push_back(g.dist_to_river);
    w.weights = distance_weights(dists);
    const auto [train_range, test_range] = split_dataset(w.dataset);
    w.train_range = train_range;
    w.test_range = test_range;
    w.stats = normalize_fit(w.dataset, w.weights, train_range);
    return w;
}

}  // namespace

DateRange named_split(const WatershedDataset& ds, const std::string& name) {
    const auto [train_range, test_range] = split_dataset(ds);
    if (name == "train") return train_range;
    if (name == "test") return test_range;
    if (name == "val") {
        const std::size_t n_train = train_range.length();
        std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n_train));
        if (n_val < 8) n_val = std::min<std::size_t>(n_train, 8);
        return DateRange{train_range.last.plus_days(-static_cast<std::int64_t>(n_val) + 1),
                         train_range.last};
    }
    throw std::invalid_argument("unknown split '" + name + "', valid splits: train, val, test");
}

std::vector<GenRow> cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir,
                            bool force) {
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir) && !force) {
        throw std::invalid_argument("output directory " + out_dir.string() +
                                    " is not empty (use --force to overwrite)");
    }

    std::vector<SynthSpec> specs;
    specs.push_back(source_spec_from_config(config));
    for (const TargetDecl& decl : target_decls_from_config(config)) {
        specs.push_back(target_spec_from_config(config, decl));
    }

    std::vector<GenRow> rows;
    for (const SynthSpec& spec : specs) {
        const WatershedDataset ds = generate_watershed(spec);
        write_watershed(ds, out_dir / spec.name);
        rows.push_back({spec.name, ds.grid_count(), ds.day_count()});
    }
    write_manifest(out_dir, "gen", config);
    return rows;
}

PretrainResult cmd_pretrain(const RunConfig& config, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_checkpoint) {
    const LoadedWatershed w = load_prepared(data_dir);
    const std::vector<WindowedSample> train_samples =
        window_samples(w.dataset, w.weights, w.stats, w.train_range);
    const std::vector<WindowedSample> val_samples =
        window_samples(w.dataset, w.weights, w.stats, named_split(w.dataset, "val"));

    Model model = build_model(arch_from_config(config), config.get_seed("arch.seed"));
    const TrainConfig tc = train_config_from_config(config);

    PretrainResult result;
    result.report = train(model, train_samples, tc);
    result.train_nse = evaluate(model, train_samples, w.stats).nse;
    result.validation_nse = evaluate(model, val_samples, w.stats).nse;

    if (out_checkpoint.has_parent_path()) {
        std::filesystem::create_directories(out_checkpoint.parent_path());
    }
    save_checkpoint(model, out_checkpoint);
    result.checkpoint_path = out_checkpoint;

    std::filesystem::path report_path = out_checkpoint;
    report_path.replace_extension(".report.csv");
    {
        std::ofstream out(report_path, std::ios::trunc);
        out << "iteration,loss\n";
        char buf[48];
        for (std::size_t i = 0; i < result.report.iteration_loss.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1,
                          result.report.iteration_loss[i]);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", result.train_nse);
        out << "# train_nse = " << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", result.validation_nse);
        out << ", validation_nse = " << buf << "\n";
    }
    result.report_path = report_path;
    write_manifest(out_checkpoint.has_parent_path() ? out_checkpoint.parent_path()
                                                    : std::filesystem::path("."),
                   "pretrain", config);
    return result;
}

TransferCmdResult cmd_transfer(const RunConfig& config,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& targets_dir,
                               const std::filesystem::path& out_dir) {
    const Model source = load_checkpoint(checkpoint_path);
    const std::vector<std::string> names = transfer_target_names(config);

    std::list<WatershedDataset> datasets;  // stable addresses for the targets
    std::vector<TransferTarget> targets;
    for (const std::string& name : names) {
        datasets.push_back(load_watershed(targets_dir / name));
        targets.push_back({name, &datasets.back()});
    }

    const TrainConfig tc = transfer_config_from_config(config);
    const bool parallel = config.get_bool("transfer.parallel_cells", false);

    TransferCmdResult result;
    result.matrix = run_transfer_matrix(source, targets, kAllTransferModes, tc,
                                        transfer_iterations_from_config(config), parallel);
    result.table = format_matrix_table(result.matrix);

    std::filesystem::create_directories(out_dir);
    result.csv_path = out_dir / "results.csv";
    result.table_path = out_dir / "table.txt";
    write_matrix_csv(result.matrix, result.csv_path);
    {
        std::ofstream out(result.table_path, std::ios::trunc);
        out << result.table;
    }
    write_manifest(out_dir, "transfer", config);
    return result;
}

EvalResult cmd_eval(const std::filesystem::path& checkpoint_path,
                    const std::filesystem::path& data_dir, const std::string& split,
                    const std::optional<std::filesystem::path>& out_csv) {
    const Model model = load_checkpoint(checkpoint_path);
    const LoadedWatershed w = load_prepared(data_dir);
    const DateRange range = named_split(w.dataset, split);
    const std::vector<WindowedSample> samples =
        window_samples(w.dataset, w.weights, w.stats, range);
    const EvalResult result = evaluate(model, samples, w.stats);
    if (out_csv) {
        if (out_csv->has_parent_path()) {
            std::filesystem::create_directories(out_csv->parent_path());
        }
        std::ofstream out(*out_csv, std::ios::trunc);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu\n", result.nse, result.rmse,
                      result.n_points);
        out << "nse,rmse,n_points\n" << buf;
    }
    return result;
}

GradcheckResult cmd_gradcheck(bool inject_fault) {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckResult result;
    result.summary = run_gradcheck_suite(20260811, 100, 20, 1e-5);
    result.pass = result.summary.conv_max < 1e-4 && result.summary.lstm_max < 1e-4 &&
                  result.summary.dense_max < 1e-4 && result.summary.model_max < 1e-4;
    if (inject_fault) {
        // A corrupted analytic gradient must trip the harness.
        DenseParams dense;
        dense.weight = Tensor({1, 2}, {1.0, 2.0});
        dense.bias = Tensor({1}, {3.0});
        const Tensor input({2}, {1.0, 1.0});
        GradFault fault;
        fault.enabled = true;
        fault.flat_index = 0;
        fault.scale = 1.5;
        result.injected_error =
            grad_check(LayerParams(dense), input, 1e-5, Activation::identity, fault);
        if (result.injected_error > 1e-2) result.pass = false;
    }
    const auto t1 = std::chrono::steady_clock::now();
    result.seconds = std::chrono::duration<double>(t1 - t0).count();
    return result;
}

}  // namespace hydrodeep
