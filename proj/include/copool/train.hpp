#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "copool/dataset.hpp"
#include "copool/model.hpp"

namespace copool {

/// One training configuration. Grid values follow the benchmark protocol:
/// lr in {0.005, 0.0005, 0.001}, weight decay in {0.0001, 0.001}, node
/// pooling ratio in {0.5, 0.25}, hidden in {128, 64}, dropout in {0, 0.5}.
struct TrainSpec {
    double lr = 0.001;
    double weight_decay = 0.0001;
    double epsilon = 0.5;
    int hidden = 64;
    double dropout = 0.0;
    double gamma = 1.0;
    int gpr_steps = 3;
    PoolMode ablation = PoolMode::full;
    bool score_extra_self_loop = true;
    int max_epochs = 300;
    int patience = 50;
    int batch_size = 32;  // <= 0 means full batch
    bool lr_plateau_decay = false;
    int decay_patience = 10;
    double lr_floor = 1e-5;
    std::uint64_t seed = 0;

    std::string key() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "lr%g_wd%g_eps%g_h%d_do%g_g%g", lr, weight_decay, epsilon,
                      hidden, dropout, gamma);
        return buf;
    }
};

inline std::vector<TrainSpec> make_grid(const TrainSpec& base, const std::vector<double>& lrs,
                                        const std::vector<double>& wds,
                                        const std::vector<double>& epsilons,
                                        const std::vector<int>& hiddens,
                                        const std::vector<double>& dropouts) {
    std::vector<TrainSpec> grid;
    for (double lr : lrs)
        for (double wd : wds)
            for (double eps : epsilons)
                for (int hidden : hiddens)
                    for (double dropout : dropouts) {
                        TrainSpec s = base;
                        s.lr = lr;
                        s.weight_decay = wd;
                        s.epsilon = eps;
                        s.hidden = hidden;
                        s.dropout = dropout;
                        grid.push_back(s);
                    }
    return grid;
}

inline std::vector<TrainSpec> standard_grid(const TrainSpec& base) {
    return make_grid(base, {0.005, 0.0005, 0.001}, {0.0001, 0.001}, {0.5, 0.25}, {128, 64}, {0.0, 0.5});
}

/// Reduced profile: lr fixed at 0.001 and hidden at 64.
inline std::vector<TrainSpec> fast_grid(const TrainSpec& base) {
    return make_grid(base, {0.001}, {0.0001, 0.001}, {0.5, 0.25}, {64}, {0.0, 0.5});
}

inline ModelConfig model_config_for(const GraphDataset& ds, const TrainSpec& spec) {
    ModelConfig config;
    config.attr_dim = ds.attr_dim;
    config.hidden = spec.hidden;
    config.dropout = spec.dropout;
    config.task = ds.task;
    config.pool.gamma = spec.gamma;
    config.pool.epsilon = spec.epsilon;
    config.pool.gpr_steps = spec.gpr_steps;
    config.pool.mode = spec.ablation;
    config.pool.score_extra_self_loop = spec.score_extra_self_loop;
    return config;
}

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_metric = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;  // accuracy (classification) or MAE (regression)
};

/// Eval-mode loss and metric over the given graph ids.
inline EvalResult evaluate(const GraphDataset& ds, const std::vector<int>& ids,
                           const ModelParams& params, const ModelConfig& config, int batch_size = 32) {
    if (ids.empty()) throw std::invalid_argument("evaluate: empty id list");
    NoGradGuard guard;
    const int chunk = batch_size <= 0 ? static_cast<int>(ids.size()) : batch_size;
    double loss_sum = 0.0, metric_sum = 0.0;
    for (std::size_t start = 0; start < ids.size(); start += chunk) {
        std::vector<Graph> graphs;
        for (std::size_t i = start; i < std::min(ids.size(), start + chunk); ++i)
            graphs.push_back(ds.graphs[ids[i]]);
        Batch batch = batch_graphs(graphs);
        Tensor out = config.task.kind == TaskKind::classification
                         ? classify_forward(batch, params, config)
                         : regress_forward(batch, params, config);
        loss_sum += model_loss(out, batch, config.task).item() * batch.slots();
        if (config.task.kind == TaskKind::classification) {
            for (int s = 0; s < batch.slots(); ++s) {
                int argmax = 0;
                for (int c = 1; c < out.cols(); ++c)
                    if (out.at(s, c) > out.at(s, argmax)) argmax = c;
                metric_sum += argmax == static_cast<int>(batch.targets[s]);
            }
        } else {
            for (int s = 0; s < batch.slots(); ++s)
                metric_sum += std::abs(out.at(s, 0) - batch.targets[s]);
        }
    }
    return {loss_sum / ids.size(), metric_sum / ids.size()};
}

struct TrainResult {
    ModelParams params;  // parameters from the best-validation-loss epoch
    std::vector<EpochRow> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Mini-batch training with Adam, early stopping on validation loss
/// (patience epochs without strict improvement), and optional plateau lr
/// halving. Returns the best-epoch parameters, never later ones.
inline TrainResult train_one(const GraphDataset& ds, const FoldSplit& split, const TrainSpec& spec) {
    if (split.train_ids.empty() || split.val_ids.empty())
        throw std::invalid_argument("train_one: empty train or validation set");

    const ModelConfig config = model_config_for(ds, spec);
    Rng init_rng(split_seed(spec.seed, 10));
    Rng shuffle_rng(split_seed(spec.seed, 11));
    Rng dropout_rng(split_seed(spec.seed, 12));

    ModelParams params = make_model_params(config, init_rng);
    auto leaves = params.all();
    AdamState opt;
    opt.lr = spec.lr;
    opt.weight_decay = spec.weight_decay;

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_decay_improve = 0;

    std::vector<int> order = split.train_ids;
    const int chunk = spec.batch_size <= 0 ? static_cast<int>(order.size()) : spec.batch_size;

    for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += chunk) {
            std::vector<Graph> graphs;
            for (std::size_t i = start; i < std::min(order.size(), start + chunk); ++i)
                graphs.push_back(ds.graphs[order[i]]);
            Batch batch = batch_graphs(graphs);

            for (auto& p : leaves) p.zero_grad();
            Tensor out = config.task.kind == TaskKind::classification
                             ? classify_forward(batch, params, config, true, &dropout_rng)
                             : regress_forward(batch, params, config);
            Tensor loss = model_loss(out, batch, config.task);
            if (!std::isfinite(loss.item()))
                throw std::runtime_error("train_one: non-finite loss at epoch " + std::to_string(epoch) +
                                         " with spec " + spec.key());
            train_loss_sum += loss.item() * batch.slots();
            backward(loss);
            adam_step(leaves, opt);
        }

        EvalResult val = evaluate(ds, split.val_ids, params, config, spec.batch_size);
        result.history.push_back(
            {epoch, train_loss_sum / order.size(), val.loss, val.metric});

        if (val.loss < result.best_val_loss) {
            result.best_val_loss = val.loss;
            result.best_epoch = epoch;
            result.params = params.snapshot();
            epochs_since_decay_improve = 0;
        } else {
            ++epochs_since_decay_improve;
            if (spec.lr_plateau_decay && epochs_since_decay_improve >= spec.decay_patience) {
                opt.lr = std::max(spec.lr_floor, opt.lr / 2.0);
                epochs_since_decay_improve = 0;
            }
        }
        if (epoch - result.best_epoch >= spec.patience) break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Grid search over k folds
// ---------------------------------------------------------------------------

struct FoldResult {
    int fold = 0;
    int best_epoch = 0;
    double val_loss = 0.0;
    double val_metric = 0.0;
    double test_metric = 0.0;
    std::vector<EpochRow> history;
};

struct CVReport {
    std::string dataset;
    TrainSpec winning_spec;
    std::vector<FoldResult> folds;       // of the winning spec
    double mean_val_metric = 0.0;
    double mean_test_metric = 0.0;
    double std_test_metric = 0.0;  // sample standard deviation over folds
    std::vector<std::pair<std::string, double>> grid_val_means;
    long long wall_ms = 0;
};

inline double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (xs.size() - 1));
}

/// Runs fn(0..count-1) on up to `jobs` threads. Tasks are independent; any
/// first exception is rethrown after all workers finish.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = static_cast<int>(std::min<std::size_t>(jobs, count));
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// For every grid point, train all k folds; pick the spec with the best mean
/// validation metric; report that spec's per-fold test metrics as mean +- std.
/// Per-fold seeds derive from (master seed, fold) only, so ablation variants
/// run under identical seeds.
inline CVReport grid_search_cv(const GraphDataset& ds, const std::vector<TrainSpec>& grid, int k,
                               std::uint64_t master_seed, int jobs = 1) {
    if (grid.empty()) throw std::invalid_argument("grid_search_cv: empty grid");
    const auto t0 = std::chrono::steady_clock::now();
    const auto folds = stratified_kfold(ds, k, master_seed);

    struct TaskResult {
        FoldResult fold;
    };
    std::vector<TaskResult> results(grid.size() * k);
    parallel_for(results.size(), jobs, [&](std::size_t task) {
        const std::size_t spec_i = task / k;
        const int fold_i = static_cast<int>(task % k);
        TrainSpec spec = grid[spec_i];
        spec.seed = split_seed(master_seed, 100, fold_i);
        TrainResult tr = train_one(ds, folds[fold_i], spec);
        const ModelConfig config = model_config_for(ds, spec);
        EvalResult val = evaluate(ds, folds[fold_i].val_ids, tr.params, config, spec.batch_size);
        EvalResult test = evaluate(ds, folds[fold_i].test_ids, tr.params, config, spec.batch_size);
        results[task].fold = {fold_i,  tr.best_epoch, tr.best_val_loss, val.metric, test.metric,
                              std::move(tr.history)};
    });

    const bool higher_better = ds.task.kind == TaskKind::classification;
    CVReport report;
    report.dataset = ds.name;
    std::size_t best_spec = 0;
    double best_val = higher_better ? -1e300 : 1e300;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        double val_mean = 0.0;
        for (int f = 0; f < k; ++f) val_mean += results[s * k + f].fold.val_metric;
        val_mean /= k;
        report.grid_val_means.emplace_back(grid[s].key(), val_mean);
        if (higher_better ? val_mean > best_val : val_mean < best_val) {
            best_val = val_mean;
            best_spec = s;
        }
    }

    report.winning_spec = grid[best_spec];
    report.mean_val_metric = best_val;
    std::vector<double> test_metrics;
    for (int f = 0; f < k; ++f) {
        report.folds.push_back(results[best_spec * k + f].fold);
        test_metrics.push_back(report.folds.back().test_metric);
    }
    double mean = 0.0;
    for (double x : test_metrics) mean += x;
    report.mean_test_metric = mean / test_metrics.size();
    report.std_test_metric = sample_std(test_metrics);
    report.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    return report;
}

}  // namespace copool
