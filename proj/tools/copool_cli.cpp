// Command-line driver for the cross-view pooling stack: dataset inspection,
// single-run training, grid-search cross-validation, and the robustness /
// sensitivity / regression experiment sweeps. Every run writes a
// config_echo.json with its fully resolved configuration.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "copool/experiments.hpp"
#include "copool/synth.hpp"
#include "copool/tu_io.hpp"

namespace fs = std::filesystem;
using copool::json;

namespace {

struct CliOptions {
    std::string dataset;
    std::string data_root = "data";
    std::string out_dir = "out";
    std::string task = "classification";
    std::string ablation = "none";
    std::string mode = "drop";
    int pad_dim = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
    int folds = 10;
    int fold = 0;
    bool fast = false;
    bool single_self_loop = false;

    // hyperparameters; flags narrow the cv grid to the given value
    double lr = 0.001;
    double weight_decay = 0.0001;
    double epsilon = 0.5;
    int hidden = 64;
    double dropout = 0.0;
    double gamma = 1.0;
    int gpr_steps = 3;
    int max_epochs = 300;
    int patience = 50;
    int batch_size = 32;
};

copool::PoolMode parse_ablation(const std::string& name) {
    if (name == "none") return copool::PoolMode::full;
    if (name == "no-gpr") return copool::PoolMode::no_gpr;
    if (name == "no-node-view") return copool::PoolMode::no_node_view;
    throw CLI::ValidationError("--ablation", "unknown ablation '" + name + "'");
}

copool::TrainSpec base_spec(const CliOptions& opt) {
    copool::TrainSpec spec;
    spec.lr = opt.lr;
    spec.weight_decay = opt.weight_decay;
    spec.epsilon = opt.epsilon;
    spec.hidden = opt.hidden;
    spec.dropout = opt.dropout;
    spec.gamma = opt.gamma;
    spec.gpr_steps = opt.gpr_steps;
    spec.ablation = parse_ablation(opt.ablation);
    spec.score_extra_self_loop = !opt.single_self_loop;
    spec.max_epochs = opt.max_epochs;
    spec.patience = opt.patience;
    spec.batch_size = opt.batch_size;
    spec.seed = opt.seed;
    return spec;
}

copool::GraphDataset load_dataset(const CliOptions& opt) {
    const copool::TaskKind kind = opt.task == "regression" ? copool::TaskKind::regression
                                                           : copool::TaskKind::classification;
    copool::GraphDataset ds = copool::parse_tu_dataset(opt.data_root, opt.dataset, kind);
    if (ds.attr_kind == copool::AttrKind::plain) ds = copool::pad_plain_attributes(ds, opt.pad_dim);
    return ds;
}

json echo_json(const CliOptions& opt, const std::string& subcommand) {
    return json{{"subcommand", subcommand},
                {"dataset", opt.dataset},
                {"data_root", opt.data_root},
                {"out", opt.out_dir},
                {"task", opt.task},
                {"pad_dim", opt.pad_dim},
                {"seed", opt.seed},
                {"jobs", opt.jobs},
                {"folds", opt.folds},
                {"fold", opt.fold},
                {"fast", opt.fast},
                {"mode", opt.mode},
                {"spec", copool::spec_to_json(base_spec(opt))}};
}

void write_echo(const CliOptions& opt, const std::string& subcommand, const json& extra = {}) {
    fs::create_directories(opt.out_dir);
    json echo = echo_json(opt, subcommand);
    if (!extra.is_null()) echo["resolved"] = extra;
    copool::write_json(opt.out_dir + "/config_echo.json", echo);
}

void add_common_options(CLI::App* cmd, CliOptions& opt, bool seed_required) {
    cmd->add_option("--dataset", opt.dataset, "dataset name under the data root")->required();
    cmd->add_option("--data-root", opt.data_root, "directory holding TU-format datasets");
    cmd->add_option("--out", opt.out_dir, "output directory for result files");
    cmd->add_option("--task", opt.task, "classification or regression")
        ->check(CLI::IsMember({"classification", "regression"}));
    cmd->add_option("--pad-dim", opt.pad_dim, "all-one padding width for plain datasets")
        ->check(CLI::PositiveNumber);
    auto* seed = cmd->add_option("--seed", opt.seed, "master seed; all randomness derives from it");
    if (seed_required) seed->required();
    cmd->add_option("--jobs", opt.jobs, "parallel fold/grid workers")->check(CLI::PositiveNumber);
    cmd->set_config("--config", "", "flat key=value config file; flags take precedence");
}

void add_hyper_options(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--lr", opt.lr, "learning rate");
    cmd->add_option("--weight-decay", opt.weight_decay, "decoupled weight decay");
    cmd->add_option("--epsilon", opt.epsilon, "node pooling ratio");
    cmd->add_option("--hidden", opt.hidden, "hidden width");
    cmd->add_option("--dropout", opt.dropout, "head dropout rate");
    cmd->add_option("--gamma", opt.gamma, "edge retaining ratio");
    cmd->add_option("--gpr-steps", opt.gpr_steps, "generalized PageRank steps");
    cmd->add_option("--ablation", opt.ablation, "none, no-gpr, or no-node-view")
        ->check(CLI::IsMember({"none", "no-gpr", "no-node-view"}));
    cmd->add_flag("--single-self-loop", opt.single_self_loop,
                  "use a single self-loop in the node score normalization");
    cmd->add_option("--max-epochs", opt.max_epochs, "epoch cap");
    cmd->add_option("--patience", opt.patience, "early-stopping patience");
    cmd->add_option("--batch-size", opt.batch_size, "graphs per mini-batch (0 = full batch)");
}

std::vector<copool::TrainSpec> cv_grid(const CLI::App* cmd, const CliOptions& opt) {
    const copool::TrainSpec base = base_spec(opt);
    auto pinned = [&](const char* flag) { return cmd->count(flag) > 0; };
    std::vector<double> lrs = pinned("--lr") ? std::vector<double>{opt.lr}
                              : opt.fast     ? std::vector<double>{0.001}
                                             : std::vector<double>{0.005, 0.0005, 0.001};
    std::vector<double> wds = pinned("--weight-decay") ? std::vector<double>{opt.weight_decay}
                                                       : std::vector<double>{0.0001, 0.001};
    std::vector<double> epsilons =
        pinned("--epsilon") ? std::vector<double>{opt.epsilon} : std::vector<double>{0.5, 0.25};
    std::vector<int> hiddens = pinned("--hidden") ? std::vector<int>{opt.hidden}
                               : opt.fast         ? std::vector<int>{64}
                                                  : std::vector<int>{128, 64};
    std::vector<double> dropouts =
        pinned("--dropout") ? std::vector<double>{opt.dropout} : std::vector<double>{0.0, 0.5};
    return copool::make_grid(base, lrs, wds, epsilons, hiddens, dropouts);
}

void write_cv_outputs(const CliOptions& opt, const copool::CVReport& report) {
    copool::write_json(opt.out_dir + "/report.json", copool::report_to_json(report));
    copool::write_table_csv(opt.out_dir + "/table.csv",
                            {{"cv", report.mean_test_metric, report.std_test_metric, opt.seed}});
    for (const auto& fold : report.folds)
        copool::write_history_csv(opt.out_dir + "/history", fold.fold, fold.history);
}

void write_sweep_outputs(const CliOptions& opt,
                         const std::vector<std::pair<std::string, copool::CVReport>>& rows) {
    std::vector<copool::TableRow> table;
    json reports = json::array();
    for (const auto& [key, report] : rows) {
        table.push_back({key, report.mean_test_metric, report.std_test_metric, opt.seed});
        json entry = copool::report_to_json(report);
        entry["key"] = key;
        reports.push_back(entry);
        for (const auto& fold : report.folds)
            copool::write_history_csv(opt.out_dir + "/history/" + key, fold.fold, fold.history);
    }
    copool::write_table_csv(opt.out_dir + "/table.csv", table);
    copool::write_json(opt.out_dir + "/report.json", reports);
}

int run_inspect(const CliOptions& opt) {
    const copool::TaskKind kind = opt.task == "regression" ? copool::TaskKind::regression
                                                           : copool::TaskKind::classification;
    copool::GraphDataset ds = copool::parse_tu_dataset(opt.data_root, opt.dataset, kind);
    double nodes = 0.0, edges = 0.0;
    for (const auto& g : ds.graphs) {
        nodes += g.n;
        edges += g.edges.size();
    }
    const char* kind_name = ds.attr_kind == copool::AttrKind::attributed ? "attributed"
                            : ds.attr_kind == copool::AttrKind::labeled  ? "labeled"
                                                                         : "plain";
    std::printf("dataset: %s\n", ds.name.c_str());
    std::printf("graphs: %zu\n", ds.graphs.size());
    if (ds.task.kind == copool::TaskKind::classification)
        std::printf("classes: %d\n", ds.task.num_classes);
    std::printf("avg_nodes: %.2f\n", nodes / ds.graphs.size());
    std::printf("avg_edges: %.2f\n", edges / ds.graphs.size());
    std::printf("node_attributes: %s (dim %d)\n", kind_name, ds.attr_dim);
    write_echo(opt, "inspect");
    return 0;
}

int run_train(const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    const auto folds = copool::stratified_kfold(ds, opt.folds, opt.seed);
    if (opt.fold < 0 || opt.fold >= opt.folds) throw std::runtime_error("train: --fold out of range");
    copool::TrainSpec spec = base_spec(opt);
    spec.seed = copool::split_seed(opt.seed, 100, opt.fold);

    copool::TrainResult result = copool::train_one(ds, folds[opt.fold], spec);
    const copool::ModelConfig config = copool::model_config_for(ds, spec);
    const copool::EvalResult test =
        copool::evaluate(ds, folds[opt.fold].test_ids, result.params, config, spec.batch_size);

    json echo = echo_json(opt, "train");
    echo["resolved"] = {{"best_epoch", result.best_epoch},
                        {"best_val_loss", result.best_val_loss},
                        {"test_metric", test.metric}};
    fs::create_directories(opt.out_dir);
    copool::write_json(opt.out_dir + "/config_echo.json", echo);
    copool::save_checkpoint(opt.out_dir + "/model.ckpt", echo.dump(), result.params);
    copool::write_history_csv(opt.out_dir + "/history", opt.fold, result.history);
    copool::write_table_csv(opt.out_dir + "/table.csv", {{"train", test.metric, 0.0, opt.seed}});
    copool::write_json(opt.out_dir + "/report.json",
                       json{{"dataset", ds.name},
                            {"fold", opt.fold},
                            {"best_epoch", result.best_epoch},
                            {"best_val_loss", result.best_val_loss},
                            {"test_metric", test.metric},
                            {"spec", copool::spec_to_json(spec)}});
    std::printf("fold %d best_epoch %d test_metric %.6f\n", opt.fold, result.best_epoch, test.metric);
    return 0;
}

int run_cv(const CLI::App* cmd, const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    const auto grid = cv_grid(cmd, opt);
    write_echo(opt, "cv", json{{"grid_size", grid.size()}});
    copool::CVReport report = copool::grid_search_cv(ds, grid, opt.folds, opt.seed, opt.jobs);
    write_cv_outputs(opt, report);
    std::printf("%s: mean test %.4f +- %.4f (winning spec %s)\n", ds.name.c_str(),
                report.mean_test_metric, report.std_test_metric, report.winning_spec.key().c_str());
    return 0;
}

int run_perturb_cmd(const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    const copool::PerturbMode mode =
        opt.mode == "drop" ? copool::PerturbMode::drop : copool::PerturbMode::add_from_empty;
    write_echo(opt, "perturb", json{{"ratios", copool::kPerturbRatios}});
    auto rows = copool::run_perturbation(ds, mode, base_spec(opt), opt.folds, opt.seed, opt.jobs);
    write_sweep_outputs(opt, rows);
    for (const auto& [key, report] : rows)
        std::printf("%s: %.4f +- %.4f\n", key.c_str(), report.mean_test_metric, report.std_test_metric);
    return 0;
}

int run_incomplete_cmd(const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    write_echo(opt, "incomplete", json{{"ratios", copool::kIncompleteRatios}});
    auto rows = copool::run_incomplete(ds, base_spec(opt), opt.folds, opt.seed, opt.jobs);
    write_sweep_outputs(opt, rows);
    for (const auto& [key, report] : rows)
        std::printf("%s: %.4f +- %.4f\n", key.c_str(), report.mean_test_metric, report.std_test_metric);
    return 0;
}

int run_gamma_sweep_cmd(const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    write_echo(opt, "gamma-sweep", json{{"gammas", copool::kGammaSweep}});
    auto rows = copool::run_gamma_sweep(ds, base_spec(opt), opt.folds, opt.seed, opt.jobs);
    write_sweep_outputs(opt, rows);
    for (const auto& [key, report] : rows)
        std::printf("%s: %.4f +- %.4f\n", key.c_str(), report.mean_test_metric, report.std_test_metric);
    return 0;
}

int run_regress_cmd(const CliOptions& opt) {
    copool::GraphDataset ds = load_dataset(opt);
    write_echo(opt, "regress");
    copool::TrainSpec spec = base_spec(opt);
    copool::RegressionReport report = copool::run_regression(ds, spec, opt.seed, opt.jobs);

    std::vector<copool::TableRow> table = {
        {"regress", report.mean_mae, report.std_mae, opt.seed},
        {"regress_mean_baseline", report.mean_baseline_mae,
         copool::sample_std(report.seed_baseline_mae), opt.seed}};
    copool::write_table_csv(opt.out_dir + "/table.csv", table);
    json seeds = json::array();
    for (std::size_t s = 0; s < report.seed_mae.size(); ++s) {
        seeds.push_back({{"seed_index", s},
                         {"test_mae", report.seed_mae[s]},
                         {"baseline_mae", report.seed_baseline_mae[s]},
                         {"best_epoch", report.runs[s].best_epoch}});
        copool::write_history_csv(opt.out_dir + "/history", static_cast<int>(s),
                                  report.runs[s].history);
    }
    copool::write_json(opt.out_dir + "/report.json",
                       json{{"dataset", ds.name},
                            {"mean_mae", report.mean_mae},
                            {"std_mae", report.std_mae},
                            {"mean_baseline_mae", report.mean_baseline_mae},
                            {"seeds", seeds},
                            {"spec", copool::spec_to_json(spec)}});
    std::printf("regress: MAE %.4f +- %.4f (mean baseline %.4f)\n", report.mean_mae, report.std_mae,
                report.mean_baseline_mae);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-view graph pooling experiments"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* inspect = app.add_subcommand("inspect", "print dataset statistics");
    add_common_options(inspect, opt, false);

    CLI::App* train = app.add_subcommand("train", "train one spec on one fold");
    add_common_options(train, opt, false);
    add_hyper_options(train, opt);
    train->add_option("--fold", opt.fold, "fold index to train on");
    train->add_option("--folds", opt.folds, "number of folds");

    CLI::App* cv = app.add_subcommand("cv", "grid search + k-fold cross-validation");
    add_common_options(cv, opt, true);
    add_hyper_options(cv, opt);
    cv->add_option("--folds", opt.folds, "number of folds");
    cv->add_flag("--fast", opt.fast, "reduced grid: lr 0.001, hidden 64");

    CLI::App* perturb = app.add_subcommand("perturb", "edge drop / add robustness sweep");
    add_common_options(perturb, opt, true);
    add_hyper_options(perturb, opt);
    perturb->add_option("--folds", opt.folds, "number of folds");
    perturb->add_option("--mode", opt.mode, "drop or add")->check(CLI::IsMember({"drop", "add"}));

    CLI::App* incomplete = app.add_subcommand("incomplete", "missing-attribute sweep");
    add_common_options(incomplete, opt, true);
    add_hyper_options(incomplete, opt);
    incomplete->add_option("--folds", opt.folds, "number of folds");

    CLI::App* gamma_sweep = app.add_subcommand("gamma-sweep", "edge retaining ratio sweep");
    add_common_options(gamma_sweep, opt, true);
    add_hyper_options(gamma_sweep, opt);
    gamma_sweep->add_option("--folds", opt.folds, "number of folds");

    CLI::App* regress = app.add_subcommand("regress", "graph regression under four seeds");
    add_common_options(regress, opt, true);
    add_hyper_options(regress, opt);
    regress->preparse_callback([&opt](std::size_t) { opt.task = "regression"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (inspect->parsed()) return run_inspect(opt);
        if (train->parsed()) return run_train(opt);
        if (cv->parsed()) return run_cv(cv, opt);
        if (perturb->parsed()) return run_perturb_cmd(opt);
        if (incomplete->parsed()) return run_incomplete_cmd(opt);
        if (gamma_sweep->parsed()) return run_gamma_sweep_cmd(opt);
        if (regress->parsed()) return run_regress_cmd(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
