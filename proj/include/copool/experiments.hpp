#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "copool/train.hpp"

namespace copool {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment drivers: each returns (row key, CV report) pairs in emission
// order, one row per swept value.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string ratio_key(const char* prefix, double ratio) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%g", prefix, ratio);
    return buf;
}

}  // namespace detail

inline const std::vector<double> kPerturbRatios = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
inline const std::vector<double> kIncompleteRatios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
inline const std::vector<double> kGammaSweep = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

/// Edge drop / add-from-empty robustness sweep: per ratio, transform the
/// dataset and run k-fold CV at the given spec.
inline std::vector<std::pair<std::string, CVReport>> run_perturbation(
    const GraphDataset& ds, PerturbMode mode, const TrainSpec& spec, int k, std::uint64_t master_seed,
    int jobs = 1, const std::vector<double>& ratios = kPerturbRatios) {
    std::vector<std::pair<std::string, CVReport>> rows;
    const char* prefix = mode == PerturbMode::drop ? "drop" : "add";
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        GraphDataset transformed =
            perturb_edges(ds, mode, ratios[i], split_seed(master_seed, 7000, i));
        rows.emplace_back(detail::ratio_key(prefix, ratios[i]),
                          grid_search_cv(transformed, {spec}, k, master_seed, jobs));
    }
    return rows;
}

/// Incomplete-attribute sweep (0% to 50% of nodes zeroed).
inline std::vector<std::pair<std::string, CVReport>> run_incomplete(
    const GraphDataset& ds, const TrainSpec& spec, int k, std::uint64_t master_seed, int jobs = 1,
    const std::vector<double>& ratios = kIncompleteRatios) {
    std::vector<std::pair<std::string, CVReport>> rows;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        GraphDataset transformed = make_incomplete(ds, ratios[i], split_seed(master_seed, 8000, i));
        rows.emplace_back(detail::ratio_key("incomplete", ratios[i]),
                          grid_search_cv(transformed, {spec}, k, master_seed, jobs));
    }
    return rows;
}

/// Edge-retaining-ratio sweep gamma = 0.1 .. 1.0.
inline std::vector<std::pair<std::string, CVReport>> run_gamma_sweep(
    const GraphDataset& ds, const TrainSpec& base, int k, std::uint64_t master_seed, int jobs = 1,
    const std::vector<double>& gammas = kGammaSweep) {
    std::vector<std::pair<std::string, CVReport>> rows;
    for (double gamma : gammas) {
        TrainSpec spec = base;
        spec.gamma = gamma;
        rows.emplace_back(detail::ratio_key("gamma", gamma),
                          grid_search_cv(ds, {spec}, k, master_seed, jobs));
    }
    return rows;
}

struct RegressionReport {
    std::vector<double> seed_mae;           // per training seed
    std::vector<double> seed_baseline_mae;  // predict-the-train-mean reference
    double mean_mae = 0.0;
    double std_mae = 0.0;
    double mean_baseline_mae = 0.0;
    std::vector<FoldResult> runs;
};

/// L1-loss regression under four seeds with plateau lr decay; reports the
/// averaged test MAE next to the predict-the-mean baseline.
inline RegressionReport run_regression(const GraphDataset& ds, const TrainSpec& base,
                                       std::uint64_t master_seed, int jobs = 1, int n_seeds = 4) {
    if (ds.task.kind != TaskKind::regression)
        throw std::invalid_argument("run_regression: dataset task is not regression");
    RegressionReport report;
    report.seed_mae.resize(n_seeds);
    report.seed_baseline_mae.resize(n_seeds);
    report.runs.resize(n_seeds);

    parallel_for(n_seeds, jobs, [&](std::size_t s) {
        const std::uint64_t run_seed = split_seed(master_seed, 40, s);
        const auto folds = stratified_kfold(ds, 10, run_seed);  // fold 0: 80/10/10
        const FoldSplit& split = folds[0];
        TrainSpec spec = base;
        spec.seed = run_seed;
        spec.lr_plateau_decay = true;
        TrainResult tr = train_one(ds, split, spec);
        const ModelConfig config = model_config_for(ds, spec);
        EvalResult test = evaluate(ds, split.test_ids, tr.params, config, spec.batch_size);
        report.seed_mae[s] = test.metric;
        report.runs[s] = {static_cast<int>(s), tr.best_epoch, tr.best_val_loss,
                          evaluate(ds, split.val_ids, tr.params, config, spec.batch_size).metric,
                          test.metric, std::move(tr.history)};

        double train_mean = 0.0;
        for (int id : split.train_ids) train_mean += ds.graphs[id].target;
        train_mean /= split.train_ids.size();
        double baseline = 0.0;
        for (int id : split.test_ids) baseline += std::abs(ds.graphs[id].target - train_mean);
        report.seed_baseline_mae[s] = baseline / split.test_ids.size();
    });

    for (int s = 0; s < n_seeds; ++s) {
        report.mean_mae += report.seed_mae[s] / n_seeds;
        report.mean_baseline_mae += report.seed_baseline_mae[s] / n_seeds;
    }
    report.std_mae = sample_std(report.seed_mae);
    return report;
}

// ---------------------------------------------------------------------------
// Result files: table.csv, report.json, history/{fold}.csv
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace detail

struct TableRow {
    std::string key;
    double mean = 0.0;
    double stddev = 0.0;
    std::uint64_t seed = 0;
};

inline void write_table_csv(const std::string& path, const std::vector<TableRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_table_csv: cannot open " + path);
    out << "key,mean,std,seed\n";
    for (const auto& row : rows)
        out << row.key << ',' << detail::format_double(row.mean) << ','
            << detail::format_double(row.stddev) << ',' << row.seed << '\n';
}

inline json spec_to_json(const TrainSpec& s) {
    return json{{"lr", s.lr},
                {"weight_decay", s.weight_decay},
                {"epsilon", s.epsilon},
                {"hidden", s.hidden},
                {"dropout", s.dropout},
                {"gamma", s.gamma},
                {"gpr_steps", s.gpr_steps},
                {"ablation", s.ablation == PoolMode::full       ? "none"
                             : s.ablation == PoolMode::no_gpr   ? "no-gpr"
                                                                : "no-node-view"},
                {"score_extra_self_loop", s.score_extra_self_loop},
                {"max_epochs", s.max_epochs},
                {"patience", s.patience},
                {"batch_size", s.batch_size},
                {"lr_plateau_decay", s.lr_plateau_decay},
                {"seed", s.seed}};
}

inline json report_to_json(const CVReport& r) {
    json folds = json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"fold", f.fold},
                         {"best_epoch", f.best_epoch},
                         {"val_loss", f.val_loss},
                         {"val_metric", f.val_metric},
                         {"test_metric", f.test_metric}});
    json grid = json::array();
    for (const auto& [key, val] : r.grid_val_means) grid.push_back({{"spec", key}, {"val_mean", val}});
    return json{{"dataset", r.dataset},
                {"winning_spec", spec_to_json(r.winning_spec)},
                {"mean_val_metric", r.mean_val_metric},
                {"mean_test_metric", r.mean_test_metric},
                {"std_test_metric", r.std_test_metric},
                {"folds", folds},
                {"grid", grid},
                {"wall_ms", r.wall_ms}};
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

inline void write_history_csv(const std::string& dir, int fold, const std::vector<EpochRow>& history) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + std::to_string(fold) + ".csv");
    if (!out) throw std::runtime_error("write_history_csv: cannot open fold file in " + dir);
    out << "epoch,train_loss,val_loss,val_metric\n";
    for (const auto& row : history)
        out << row.epoch << ',' << detail::format_double(row.train_loss) << ','
            << detail::format_double(row.val_loss) << ',' << detail::format_double(row.val_metric)
            << '\n';
}

}  // namespace copool
