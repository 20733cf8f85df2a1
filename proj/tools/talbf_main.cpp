// Command-line front end: train attack targets, run single attacks, sweep
// hyperparameter grids, query the exhaustive oracle, and re-aggregate
// reports. Attack failure is data (exit 0); only operational problems
// (missing files, bad ranges) exit nonzero.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "talbf/harness.hpp"

namespace fs = std::filesystem;
using namespace talbf;

namespace {

constexpr int kExitOperational = 2;

struct DataArgs {
    std::string data = "blobs";
    int classes = 4;
    int per_class = 300;
    double spread = 0.8;
    double radius = 4.0;
    int dim = 2;
    double train_frac = 0.6;
    double eval_frac = 0.3;
    int aux_size = 128;
};

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

std::string solver_config_text(const SolverConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "lambda0 = " << cfg.lambda0 << "\nk0 = " << cfg.k0 << "\ndelta = " << cfg.delta
        << "\neta = " << cfg.eta << "\ninner_steps = " << cfg.inner_steps
        << "\nrho1 = " << cfg.rho1 << "\nrho2 = " << cfg.rho2 << "\nrho3 = " << cfg.rho3
        << "\nrho1_cap = " << cfg.rho1_cap << "\nrho2_cap = " << cfg.rho2_cap
        << "\nrho3_cap = " << cfg.rho3_cap << "\nrho_growth = " << cfg.rho_growth
        << "\nmax_iter = " << cfg.max_iter << "\nstop_tol = " << cfg.stop_tol
        << "\nmax_lambda_trials = " << cfg.max_lambda_trials
        << "\nmax_k_trials = " << cfg.max_k_trials << "\nseed = " << cfg.seed << "\n";
    return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
}

// CLI flags > config file > defaults.
struct SolverFlags {
    CLI::Option* lambda0 = nullptr;
    CLI::Option* k0 = nullptr;
    CLI::Option* delta = nullptr;
    CLI::Option* eta = nullptr;
    CLI::Option* inner_steps = nullptr;
    CLI::Option* max_iter = nullptr;
    CLI::Option* stop_tol = nullptr;
    CLI::Option* max_lambda_trials = nullptr;
    CLI::Option* max_k_trials = nullptr;
    std::string config_path;
    SolverConfig values;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "solver config file (key = value lines)");
        lambda0 = cmd->add_option("--lambda0", values.lambda0, "initial trade-off weight");
        k0 = cmd->add_option("--k0", values.k0,
                             "initial flip budget (0: evaluate without flipping)");
        delta = cmd->add_option("--delta", values.delta, "margin slack");
        eta = cmd->add_option("--eta", values.eta, "primal step size");
        inner_steps =
            cmd->add_option("--inner-steps", values.inner_steps, "gradient steps per iteration");
        max_iter = cmd->add_option("--max-iter", values.max_iter, "ADMM iteration cap");
        stop_tol = cmd->add_option("--stop-tol", values.stop_tol, "residual stopping tolerance");
        max_lambda_trials = cmd->add_option("--max-lambda-trials", values.max_lambda_trials,
                                            "lambda halvings per k");
        max_k_trials = cmd->add_option("--max-k-trials", values.max_k_trials, "k doublings");
    }

    SolverConfig resolve(std::uint64_t seed) const {
        SolverConfig cfg;
        if (!config_path.empty()) cfg = load_solver_config(config_path);
        if (lambda0->count()) cfg.lambda0 = values.lambda0;
        if (k0->count()) cfg.k0 = values.k0;
        if (delta->count()) cfg.delta = values.delta;
        if (eta->count()) cfg.eta = values.eta;
        if (inner_steps->count()) cfg.inner_steps = values.inner_steps;
        if (max_iter->count()) cfg.max_iter = values.max_iter;
        if (stop_tol->count()) cfg.stop_tol = values.stop_tol;
        if (max_lambda_trials->count()) cfg.max_lambda_trials = values.max_lambda_trials;
        if (max_k_trials->count()) cfg.max_k_trials = values.max_k_trials;
        cfg.seed = seed;
        return cfg;
    }
};

SearchMode parse_search(const std::string& text) {
    if (text == "none") return SearchMode::kNone;
    if (text == "lambda") return SearchMode::kLambda;
    if (text == "lambda_k") return SearchMode::kLambdaK;
    throw std::runtime_error("unknown search mode: " + text);
}

GridBounds bounds_around(const Dataset& data) {
    GridBounds b;
    b.x_min = data.features.col(0).minCoeff();
    b.x_max = data.features.col(0).maxCoeff();
    b.y_min = data.features.col(1).minCoeff();
    b.y_max = data.features.col(1).maxCoeff();
    const double pad_x = 0.2 * (b.x_max - b.x_min);
    const double pad_y = 0.2 * (b.y_max - b.y_min);
    b.x_min -= pad_x;
    b.x_max += pad_x;
    b.y_min -= pad_y;
    b.y_max += pad_y;
    return b;
}

int cmd_train(const DataArgs& data_args, const std::string& hidden_text, int widen, int qbits,
              int epochs, double lr, int batch, double acc_floor, std::uint64_t seed,
              const std::string& out_dir) {
    Dataset full;
    if (data_args.data == "blobs") {
        BlobSpec spec;
        spec.num_classes = data_args.classes;
        spec.samples_per_class = data_args.per_class;
        spec.spread = data_args.spread;
        spec.center_radius = data_args.radius;
        spec.dim = data_args.dim;
        full = make_blobs(spec, seed);
    } else {
        full = load_csv(data_args.data);
    }
    const DataSplits splits = split_dataset(
        full, SplitFractions{data_args.train_frac, data_args.eval_frac}, data_args.aux_size, seed);

    ArchSpec arch;
    arch.input_dim = full.dim();
    arch.hidden = parse_int_list(hidden_text);
    arch.num_classes = 1 + *std::max_element(full.labels.begin(), full.labels.end());
    arch = widen_model(arch, widen);

    TrainOptions options;
    options.epochs = epochs;
    options.learning_rate = lr;
    options.batch_size = batch;
    options.seed = seed;
    options.q_bits = qbits;
    options.acc_floor = acc_floor;
    const ModelSnapshot model = train_toy_model(splits.train, arch, options);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    model.save((dir / "model.snap").string());
    save_csv(splits.train, (dir / "train.csv").string());
    save_csv(splits.eval, (dir / "eval.csv").string());
    save_csv(splits.aux, (dir / "aux.csv").string());

    std::ostringstream resolved;
    resolved << "command = train\ndata = " << data_args.data << "\nclasses = " << arch.num_classes
             << "\nper_class = " << data_args.per_class << "\nspread = " << data_args.spread
             << "\nradius = " << data_args.radius << "\ndim = " << data_args.dim
             << "\nhidden = " << hidden_text << "\nwiden = " << widen << "\nqbits = " << qbits
             << "\nepochs = " << epochs << "\nlr = " << lr << "\nbatch = " << batch
             << "\nacc_floor = " << acc_floor << "\ntrain_frac = " << data_args.train_frac
             << "\neval_frac = " << data_args.eval_frac << "\naux_size = " << data_args.aux_size
             << "\nseed = " << seed << "\n";
    write_text(dir / "resolved_config.txt", resolved.str());

    std::cout << "snapshot=" << (dir / "model.snap").string() << "\n";
    std::cout << "train_acc=" << accuracy(model, splits.train) << "\n";
    std::cout << "eval_acc=" << accuracy(model, splits.eval) << "\n";
    return 0;
}

nlohmann::json outcome_json(const InstanceRecord& rec) {
    nlohmann::json flips = nlohmann::json::array();
    for (const FlipCoord& f : rec.flips)
        flips.push_back({{"class", f.cls}, {"input", f.j}, {"bit", f.p}});
    return {{"version", 1},
            {"sample_index", rec.sample_index},
            {"source", rec.source},
            {"target", rec.target},
            {"method", rec.method},
            {"success", rec.success},
            {"n_flip", rec.n_flip},
            {"pa_acc", rec.pa_acc},
            {"lambda_used", rec.lambda_used},
            {"k_used", rec.k_used},
            {"converged", rec.converged},
            {"iterations", rec.iterations},
            {"solve_calls", rec.solve_calls},
            {"surface_ok", rec.surface_ok},
            {"flips", flips}};
}

int cmd_attack(const std::string& model_path, const std::string& eval_path,
               const std::string& aux_path, int sample_index, int target,
               const SolverFlags& solver_flags, const std::string& search_text,
               int grid_resolution, std::uint64_t seed, const std::string& out_dir) {
    const ModelSnapshot model = ModelSnapshot::load(model_path);
    const Dataset eval_split = load_csv(eval_path);
    const Dataset aux_split = load_csv(aux_path);
    if (sample_index < 0 || sample_index >= eval_split.size())
        throw std::runtime_error("sample index out of range");
    const int source = eval_split.labels[sample_index];
    if (target == source) throw std::runtime_error("target class equals the ground-truth class");
    if (target < 0 || target >= model.num_classes())
        throw std::runtime_error("target class out of range");
    const SolverConfig cfg = solver_flags.resolve(seed);
    const SearchMode search = parse_search(search_text);

    std::ostringstream resolved;
    resolved << "command = attack\nmodel = " << model_path << "\neval = " << eval_path
             << "\naux = " << aux_path << "\nsample = " << sample_index
             << "\ntarget = " << target << "\nsearch = " << search_text
             << "\ngrid_resolution = " << grid_resolution << "\n"
             << solver_config_text(cfg);
    const fs::path run_dir =
        fs::path(out_dir) / ("run_" + config_hash(resolved.str()) + "_s" + std::to_string(seed));
    fs::create_directories(run_dir);
    write_text(run_dir / "resolved_config.txt", resolved.str());

    const Eigen::VectorXd x = eval_split.sample(sample_index);
    InstanceRecord rec;
    rec.sample_index = sample_index;
    rec.source = source;
    rec.target = target;
    rec.method = "talbf";

    if (cfg.k0 == 0) {
        // no flips allowed: report the unmodified model's verdict
        rec.success = model.predict(x) == target;
        rec.k_used = 0;
        rec.lambda_used = cfg.lambda0;
    } else {
        const AttackProblem problem(model, x, source, target, aux_split, cfg.lambda0, cfg.k0,
                                    cfg.delta);
        AttackOutcome outcome;
        try {
            if (search == SearchMode::kNone) {
                outcome = solve(problem, cfg);
            } else {
                SolverConfig search_cfg = cfg;
                if (search == SearchMode::kLambda) search_cfg.max_k_trials = 1;
                outcome = search_lambda_k(problem, search_cfg);
            }
        } catch (const NumericalError&) {
            outcome.success = false;
            outcome.lambda_used = cfg.lambda0;
            outcome.k_used = cfg.k0;
        }
        rec.success = outcome.success;
        rec.flips = outcome.flipped;
        rec.n_flip = outcome.n_flip;
        rec.lambda_used = outcome.lambda_used;
        rec.k_used = outcome.k_used;
        rec.converged = outcome.converged;
        rec.iterations = outcome.iterations;
        rec.solve_calls = outcome.solve_calls;
        rec.trace = outcome.trace;
    }
    for (const FlipCoord& f : rec.flips)
        if (f.cls != source && f.cls != target) rec.surface_ok = false;

    const ModelSnapshot attacked = apply_flips(model, rec.flips);
    rec.pa_acc = pa_acc(attacked, eval_split, sample_index);

    emit_trace_csv(rec.trace, (run_dir / "trace.csv").string());
    std::ofstream json_out(run_dir / "outcome.json");
    json_out << outcome_json(rec).dump(2) << '\n';
    json_out.close();

    if (grid_resolution > 0) {
        const GridBounds bounds = bounds_around(eval_split);
        export_boundary_grid(model, bounds, grid_resolution,
                             (run_dir / "boundary_original.csv").string());
        export_boundary_grid(attacked, bounds, grid_resolution,
                             (run_dir / "boundary_attacked.csv").string());
    }

    std::cout << "run_dir=" << run_dir.string() << "\n";
    std::cout << "success=" << (rec.success ? 1 : 0) << " n_flip=" << rec.n_flip
              << " pa_acc=" << rec.pa_acc << " lambda_used=" << rec.lambda_used
              << " k_used=" << rec.k_used << " converged=" << (rec.converged ? 1 : 0) << "\n";
    return 0;
}

int cmd_sweep(const std::string& model_path, const std::string& eval_path,
              const std::string& aux_path, const std::string& method_text, int instances,
              int jobs, const std::string& lambda_list_text, const std::string& k_list_text,
              const std::string& aux_list_text, const SolverFlags& solver_flags,
              const std::string& search_text, int greedy_budget, int ft_steps, double ft_lr,
              double ft_lambda, int oracle_max_flips, bool write_traces, std::uint64_t seed,
              const std::string& out_dir, const std::string& reference_path) {
    const ModelSnapshot model = ModelSnapshot::load(model_path);
    const Dataset eval_split = load_csv(eval_path);
    const Dataset aux_full = load_csv(aux_path);
    const SolverConfig base_cfg = solver_flags.resolve(seed);

    const std::vector<double> lambdas =
        lambda_list_text.empty() ? std::vector<double>{base_cfg.lambda0}
                                 : parse_double_list(lambda_list_text);
    const std::vector<int> ks =
        k_list_text.empty() ? std::vector<int>{base_cfg.k0} : parse_int_list(k_list_text);
    const std::vector<int> aux_sizes =
        aux_list_text.empty() ? std::vector<int>{aux_full.size()} : parse_int_list(aux_list_text);
    if (lambdas.empty() || ks.empty() || aux_sizes.empty())
        throw std::runtime_error("sweep ranges must be nonempty");

    std::optional<std::vector<Aggregates>> reference;
    if (!reference_path.empty()) reference = aggregate(load_report_csv(reference_path));

    for (double lambda : lambdas) {
        for (int k : ks) {
            for (int aux_n : aux_sizes) {
                if (aux_n < 1 || aux_n > aux_full.size())
                    throw std::runtime_error("aux subset size " + std::to_string(aux_n) +
                                             " outside [1, " + std::to_string(aux_full.size()) +
                                             "]");
                std::vector<int> head(static_cast<std::size_t>(aux_n));
                std::iota(head.begin(), head.end(), 0);
                const Dataset aux_split = aux_full.subset(head);

                HarnessOptions options;
                options.method = parse_method(method_text);
                options.search = parse_search(search_text);
                options.instances = instances;
                options.seed = seed;
                options.jobs = jobs;
                options.solver = base_cfg;
                options.solver.lambda0 = lambda;
                options.solver.k0 = k;
                options.greedy_budget = greedy_budget;
                options.ft_steps = ft_steps;
                options.ft_lr = ft_lr;
                options.ft_lambda = ft_lambda;
                options.oracle_max_flips = oracle_max_flips;

                std::ostringstream resolved;
                resolved.precision(17);
                resolved << "command = sweep\nmodel = " << model_path << "\neval = " << eval_path
                         << "\naux = " << aux_path << "\nmethod = " << method_text
                         << "\ninstances = " << instances << "\nsearch = " << search_text
                         << "\naux_n = " << aux_n << "\ngreedy_budget = " << greedy_budget
                         << "\nft_steps = " << ft_steps << "\nft_lr = " << ft_lr
                         << "\nft_lambda = " << ft_lambda
                         << "\noracle_max_flips = " << oracle_max_flips << "\n"
                         << solver_config_text(options.solver);
                const fs::path run_dir =
                    fs::path(out_dir) /
                    ("run_" + config_hash(resolved.str()) + "_s" + std::to_string(seed));
                fs::create_directories(run_dir);
                write_text(run_dir / "resolved_config.txt", resolved.str());

                const AttackReport report = run_batch(model, eval_split, aux_split, options);
                emit_report_csv(report, (run_dir / "report.csv").string());
                emit_report_json(report, (run_dir / "report.json").string());
                emit_summary_csv(aggregate(report), (run_dir / "summary.csv").string(),
                                 reference);
                emit_timings_csv(report, (run_dir / "timings.csv").string());
                if (write_traces) {
                    fs::create_directories(run_dir / "traces");
                    for (const InstanceRecord& rec : report.rows)
                        if (!rec.trace.empty())
                            emit_trace_csv(rec.trace,
                                           (run_dir / "traces" /
                                            ("trace_" + std::to_string(rec.id) + ".csv"))
                                               .string());
                }

                const std::vector<Aggregates> aggs = aggregate(report);
                std::cout << "setting lambda=" << lambda << " k=" << k << " N=" << aux_n
                          << " dir=" << run_dir.string();
                if (!aggs.empty()) {
                    std::cout << " asr=";
                    if (std::isnan(aggs[0].asr))
                        std::cout << "n/a";
                    else
                        std::cout << aggs[0].asr;
                    std::cout << " mean_n_flip=" << aggs[0].n_flip_mean
                              << " mean_pa_acc=" << aggs[0].pa_acc_mean;
                }
                std::cout << "\n";
            }
        }
    }
    return 0;
}

int cmd_oracle(const std::string& model_path, const std::string& eval_path,
               const std::string& aux_path, int sample_index, int target, int max_flips,
               double subset_budget) {
    const ModelSnapshot model = ModelSnapshot::load(model_path);
    const Dataset eval_split = load_csv(eval_path);
    const Dataset aux_split = load_csv(aux_path);
    if (sample_index < 0 || sample_index >= eval_split.size())
        throw std::runtime_error("sample index out of range");
    const int source = eval_split.labels[sample_index];
    if (target == source) throw std::runtime_error("target class equals the ground-truth class");

    const AttackProblem problem(model, eval_split.sample(sample_index), source, target, aux_split,
                                1.0, 1, 0.0);
    const std::optional<FlipSet> found = exhaustive_oracle(problem, max_flips, subset_budget);
    if (!found) {
        std::cout << "found=0\n";
        return 0;
    }
    std::cout << "found=1 n_flip=" << found->flips.size() << " flips=";
    for (std::size_t i = 0; i < found->flips.size(); ++i) {
        const FlipCoord& f = found->flips[i];
        std::cout << (i ? ";" : "") << "(" << f.cls << "," << f.j << "," << f.p << ")";
    }
    std::cout << "\n";
    return 0;
}

int cmd_report(const std::string& input_path, const std::string& reference_path,
               const std::string& summary_path, const std::string& json_path) {
    const AttackReport report = load_report_csv(input_path);
    const std::vector<Aggregates> aggs = aggregate(report);
    std::optional<std::vector<Aggregates>> reference;
    if (!reference_path.empty()) reference = aggregate(load_report_csv(reference_path));

    for (const Aggregates& a : aggs) {
        std::cout << "method=" << a.method << " instances=" << a.instances << " ASR=";
        if (std::isnan(a.asr))
            std::cout << "n/a";
        else
            std::cout << 100.0 * a.asr << "%";
        std::cout << " PA-ACC=" << 100.0 * a.pa_acc_mean << "%+-" << 100.0 * a.pa_acc_std
                  << " N_flip=" << a.n_flip_mean << "+-" << a.n_flip_std;
        if (reference) {
            for (const Aggregates& ref : *reference)
                if (ref.method == a.method)
                    std::cout << " dN_flip=" << a.n_flip_mean - ref.n_flip_mean;
        }
        std::cout << "\n";
    }
    if (!summary_path.empty()) emit_summary_csv(aggs, summary_path, reference);
    if (!json_path.empty()) emit_report_json(report, json_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Targeted bit-flip attacks on quantized classifier heads"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train and quantize an attack target");
    DataArgs data_args;
    std::string hidden_text = "16,16,16";
    int widen = 1, qbits = 8, epochs = 300, batch = 32;
    double lr = 0.05, acc_floor = 0.90;
    std::uint64_t train_seed = 0;
    std::string train_out;
    train->add_option("--data", data_args.data, "'blobs' or a CSV path");
    train->add_option("--classes", data_args.classes, "blob classes");
    train->add_option("--per-class", data_args.per_class, "blob samples per class");
    train->add_option("--spread", data_args.spread, "blob noise scale");
    train->add_option("--radius", data_args.radius, "blob center radius");
    train->add_option("--dim", data_args.dim, "blob input dimension");
    train->add_option("--train-frac", data_args.train_frac, "training fraction");
    train->add_option("--eval-frac", data_args.eval_frac, "eval fraction");
    train->add_option("--aux-size", data_args.aux_size, "auxiliary split size");
    train->add_option("--hidden", hidden_text, "hidden widths, comma separated");
    train->add_option("--widen", widen, "hidden width multiplier");
    train->add_option("--qbits", qbits, "bit width of the quantized head");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "SGD step size");
    train->add_option("--batch", batch, "minibatch size");
    train->add_option("--acc-floor", acc_floor, "required post-quantization train accuracy");
    train->add_option("--seed", train_seed, "run seed")->required();
    train->add_option("--out", train_out, "output directory")->required();

    // attack
    auto* attack = app.add_subcommand("attack", "attack a single eval sample");
    std::string atk_model, atk_eval, atk_aux, atk_search = "lambda_k", atk_out = ".";
    int atk_sample = 0, atk_target = 0, atk_grid = 0;
    std::uint64_t atk_seed = 0;
    SolverFlags atk_solver;
    attack->add_option("--model", atk_model, "model snapshot")->required();
    attack->add_option("--eval", atk_eval, "eval split CSV")->required();
    attack->add_option("--aux", atk_aux, "auxiliary split CSV")->required();
    attack->add_option("--sample", atk_sample, "row index in the eval split")->required();
    attack->add_option("--target", atk_target, "target class")->required();
    attack->add_option("--search", atk_search, "none | lambda | lambda_k");
    attack->add_option("--grid-resolution", atk_grid,
                       "also export decision-boundary grids at this resolution");
    atk_solver.attach(attack);
    attack->add_option("--seed", atk_seed, "run seed")->required();
    attack->add_option("--out", atk_out, "base directory for the run directory");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "batch attacks over a hyperparameter grid");
    std::string sw_model, sw_eval, sw_aux, sw_method = "talbf", sw_search = "none";
    std::string sw_lambdas, sw_ks, sw_auxs, sw_out = ".", sw_reference;
    int sw_instances = 50, sw_jobs = 1, sw_greedy_budget = 50, sw_ft_steps = 500;
    int sw_oracle_max = 2;
    double sw_ft_lr = 0.01, sw_ft_lambda = 1.0;
    bool sw_no_traces = false;
    std::uint64_t sw_seed = 0;
    SolverFlags sw_solver;
    sweep->add_option("--model", sw_model, "model snapshot")->required();
    sweep->add_option("--eval", sw_eval, "eval split CSV")->required();
    sweep->add_option("--aux", sw_aux, "auxiliary split CSV")->required();
    sweep->add_option("--method", sw_method, "talbf | greedy | ft | oracle");
    sweep->add_option("--instances", sw_instances, "attack instances per setting");
    sweep->add_option("--jobs", sw_jobs, "worker threads");
    sweep->add_option("--lambda-list", sw_lambdas, "comma list; empty = config lambda0");
    sweep->add_option("--k-list", sw_ks, "comma list; empty = config k0");
    sweep->add_option("--aux-list", sw_auxs, "comma list of auxiliary set sizes");
    sweep->add_option("--search", sw_search, "none | lambda | lambda_k");
    sweep->add_option("--greedy-budget", sw_greedy_budget, "greedy flip budget");
    sweep->add_option("--ft-steps", sw_ft_steps, "fine-tuning steps");
    sweep->add_option("--ft-lr", sw_ft_lr, "fine-tuning step size");
    sweep->add_option("--ft-lambda", sw_ft_lambda, "fine-tuning trade-off weight");
    sweep->add_option("--oracle-max-flips", sw_oracle_max, "oracle subset size cap");
    sweep->add_flag("--no-traces", sw_no_traces, "skip per-instance trace files");
    sweep->add_option("--reference", sw_reference, "reference report.csv for the n_flip delta");
    sw_solver.attach(sweep);
    sweep->add_option("--seed", sw_seed, "run seed")->required();
    sweep->add_option("--out", sw_out, "base directory for run directories");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "exhaustive minimal flip set on one instance");
    std::string or_model, or_eval, or_aux;
    int or_sample = 0, or_target = 0, or_max = 2;
    double or_budget = 1e7;
    std::uint64_t or_seed = 0;
    oracle->add_option("--model", or_model, "model snapshot")->required();
    oracle->add_option("--eval", or_eval, "eval split CSV")->required();
    oracle->add_option("--aux", or_aux, "auxiliary split CSV")->required();
    oracle->add_option("--sample", or_sample, "row index in the eval split")->required();
    oracle->add_option("--target", or_target, "target class")->required();
    oracle->add_option("--max-flips", or_max, "largest subset size to enumerate");
    oracle->add_option("--subset-budget", or_budget, "refuse above this many subsets");
    oracle->add_option("--seed", or_seed, "run seed")->required();

    // report
    auto* report = app.add_subcommand("report", "re-aggregate a report file");
    std::string rp_input, rp_reference, rp_summary, rp_json;
    report->add_option("--input", rp_input, "report.csv")->required();
    report->add_option("--reference", rp_reference, "reference report.csv");
    report->add_option("--out", rp_summary, "summary CSV path");
    report->add_option("--json", rp_json, "mirrored JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cmd_train(data_args, hidden_text, widen, qbits, epochs, lr, batch, acc_floor,
                             train_seed, train_out);
        if (attack->parsed())
            return cmd_attack(atk_model, atk_eval, atk_aux, atk_sample, atk_target, atk_solver,
                              atk_search, atk_grid, atk_seed, atk_out);
        if (sweep->parsed())
            return cmd_sweep(sw_model, sw_eval, sw_aux, sw_method, sw_instances, sw_jobs,
                             sw_lambdas, sw_ks, sw_auxs, sw_solver, sw_search, sw_greedy_budget,
                             sw_ft_steps, sw_ft_lr, sw_ft_lambda, sw_oracle_max, !sw_no_traces,
                             sw_seed, sw_out, sw_reference);
        if (oracle->parsed())
            return cmd_oracle(or_model, or_eval, or_aux, or_sample, or_target, or_max, or_budget);
        if (report->parsed()) return cmd_report(rp_input, rp_reference, rp_summary, rp_json);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitOperational;
    }
    return 0;
}
