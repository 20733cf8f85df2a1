#include "talbf/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace talbf {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

std::string method_name(AttackMethod method) {
    switch (method) {
        case AttackMethod::kTalbf: return "talbf";
        case AttackMethod::kGreedy: return "greedy";
        case AttackMethod::kFinetune: return "ft";
        case AttackMethod::kOracle: return "oracle";
    }
    throw std::logic_error("unreachable");
}

AttackMethod parse_method(const std::string& name) {
    if (name == "talbf") return AttackMethod::kTalbf;
    if (name == "greedy") return AttackMethod::kGreedy;
    if (name == "ft") return AttackMethod::kFinetune;
    if (name == "oracle") return AttackMethod::kOracle;
    throw std::invalid_argument("unknown attack method: " + name);
}

std::vector<Aggregates> aggregate(const AttackReport& report) {
    std::vector<Aggregates> out;
    for (const InstanceRecord& row : report.rows) {
        Aggregates* agg = nullptr;
        for (Aggregates& a : out)
            if (a.method == row.method) agg = &a;
        if (!agg) {
            out.push_back(Aggregates{});
            agg = &out.back();
            agg->method = row.method;
        }
        ++agg->instances;
        if (row.success) ++agg->successes;
        if (!row.surface_ok) ++agg->surface_violations;
    }
    for (Aggregates& a : out) {
        std::vector<double> pa, nf;
        for (const InstanceRecord& row : report.rows) {
            if (row.method != a.method) continue;
            pa.push_back(row.pa_acc);
            nf.push_back(static_cast<double>(row.n_flip));
        }
        a.asr = a.instances > 0 ? static_cast<double>(a.successes) / a.instances
                                : std::numeric_limits<double>::quiet_NaN();
        a.pa_acc_mean = mean_of(pa);
        a.pa_acc_std = std_of(pa, a.pa_acc_mean);
        a.n_flip_mean = mean_of(nf);
        a.n_flip_std = std_of(nf, a.n_flip_mean);
    }
    return out;
}

double pa_acc(const ModelSnapshot& attacked_model, const Dataset& eval_split, int attacked_index) {
    if (eval_split.size() <= 1) throw std::invalid_argument("pa_acc: split too small");
    int correct = 0, total = 0;
    for (int i = 0; i < eval_split.size(); ++i) {
        if (i == attacked_index) continue;
        ++total;
        if (attacked_model.predict(eval_split.sample(i)) == eval_split.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / total;
}

namespace {

InstanceRecord run_instance(const ModelSnapshot& model, const Dataset& eval_split,
                            const Dataset& aux_split, const HarnessOptions& options, int id,
                            int sample_index, int target) {
    InstanceRecord rec;
    rec.id = id;
    rec.sample_index = sample_index;
    rec.source = eval_split.labels[sample_index];
    rec.target = target;
    rec.method = method_name(options.method);

    const auto started = std::chrono::steady_clock::now();
    const Eigen::VectorXd x = eval_split.sample(sample_index);
    const AttackProblem problem(model, x, rec.source, target, aux_split, options.solver.lambda0,
                                options.solver.k0, options.solver.delta);

    switch (options.method) {
        case AttackMethod::kTalbf: {
            AttackOutcome outcome;
            if (options.search == SearchMode::kNone) {
                try {
                    outcome = solve(problem, options.solver);
                } catch (const NumericalError&) {
                    // failure is data; a diverged solve reports success=false
                    outcome.success = false;
                    outcome.lambda_used = problem.lambda;
                    outcome.k_used = problem.k;
                }
            } else {
                SolverConfig cfg = options.solver;
                if (options.search == SearchMode::kLambda) cfg.max_k_trials = 1;
                outcome = search_lambda_k(problem, cfg);
            }
            rec.success = outcome.success;
            rec.flips = std::move(outcome.flipped);
            rec.lambda_used = outcome.lambda_used;
            rec.k_used = outcome.k_used;
            rec.converged = outcome.converged;
            rec.iterations = outcome.iterations;
            rec.solve_calls = outcome.solve_calls;
            rec.trace = std::move(outcome.trace);
            break;
        }
        case AttackMethod::kGreedy: {
            BaselineResult res = greedy_attack(problem, options.greedy_budget);
            rec.success = res.success;
            rec.flips = std::move(res.flips.flips);
            rec.lambda_used = problem.lambda;
            rec.k_used = options.greedy_budget;
            rec.solve_calls = 1;
            break;
        }
        case AttackMethod::kFinetune: {
            const AttackProblem ft_problem = problem.with_hyper(options.ft_lambda, problem.k);
            BaselineResult res = finetune_last_layer(ft_problem, options.ft_steps, options.ft_lr);
            rec.success = res.success;
            rec.flips = std::move(res.flips.flips);
            rec.lambda_used = options.ft_lambda;
            rec.k_used = 0;
            rec.solve_calls = 1;
            break;
        }
        case AttackMethod::kOracle: {
            std::optional<FlipSet> found =
                exhaustive_oracle(problem, options.oracle_max_flips, options.oracle_subset_budget);
            if (found) rec.flips = std::move(found->flips);
            rec.success = found.has_value();
            rec.lambda_used = problem.lambda;
            rec.k_used = options.oracle_max_flips;
            rec.solve_calls = 1;
            break;
        }
    }

    rec.n_flip = static_cast<int>(rec.flips.size());
    for (const FlipCoord& f : rec.flips)
        if (f.cls != rec.source && f.cls != rec.target) rec.surface_ok = false;

    const ModelSnapshot attacked = apply_flips(model, rec.flips);
    if (options.method != AttackMethod::kTalbf)
        rec.success = attacked.predict(x) == rec.target;
    rec.pa_acc = pa_acc(attacked, eval_split, sample_index);

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    return rec;
}

}  // namespace

AttackReport run_batch(const ModelSnapshot& model, const Dataset& eval_split,
                       const Dataset& aux_split, const HarnessOptions& options) {
    if (options.instances < 0) throw std::invalid_argument("instances must be nonnegative");
    if (options.instances > eval_split.size())
        throw std::runtime_error("sampler exhausted: " + std::to_string(options.instances) +
                                 " instances requested, eval split has " +
                                 std::to_string(eval_split.size()));
    const int k_classes = model.num_classes();

    // sampling happens up front so workers never touch the RNG
    Rng rng(options.seed);
    std::vector<int> order(static_cast<std::size_t>(eval_split.size()));
    std::iota(order.begin(), order.end(), 0);
    for (int i = eval_split.size() - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

    struct Draw {
        int sample_index;
        int target;
    };
    std::vector<Draw> draws;
    for (int i = 0; i < options.instances; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        const int s = eval_split.labels[idx];
        int r = rng.uniform_int(k_classes - 1);
        if (r >= s) ++r;
        draws.push_back(Draw{idx, r});
    }

    AttackReport report;
    report.rows.resize(static_cast<std::size_t>(options.instances));
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&]() {
        while (true) {
            const int id = next.fetch_add(1);
            if (id >= options.instances) return;
            try {
                report.rows[static_cast<std::size_t>(id)] =
                    run_instance(model, eval_split, aux_split, options, id,
                                 draws[static_cast<std::size_t>(id)].sample_index,
                                 draws[static_cast<std::size_t>(id)].target);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int jobs = std::max(1, options.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return report;
}

void export_boundary_grid(const ModelSnapshot& model, const GridBounds& bounds, int resolution,
                          const std::string& path) {
    if (model.input_dim() != 2)
        throw std::invalid_argument("boundary grids need a 2-D input model");
    if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "x1,x2,class\n";
    Eigen::VectorXd point(2);
    for (int iy = 0; iy < resolution; ++iy) {
        for (int ix = 0; ix < resolution; ++ix) {
            point(0) = resolution == 1
                           ? bounds.x_min
                           : bounds.x_min + ix * (bounds.x_max - bounds.x_min) / (resolution - 1);
            point(1) = resolution == 1
                           ? bounds.y_min
                           : bounds.y_min + iy * (bounds.y_max - bounds.y_min) / (resolution - 1);
            out << fmt_double(point(0)) << ',' << fmt_double(point(1)) << ','
                << model.predict(point) << '\n';
        }
    }
}

void emit_report_csv(const AttackReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "#talbf-report v1\n";
    out << "id,sample_index,source,target,method,success,n_flip,pa_acc,lambda_used,k_used,"
           "converged,iterations,solve_calls,surface_ok\n";
    for (const InstanceRecord& r : report.rows) {
        out << r.id << ',' << r.sample_index << ',' << r.source << ',' << r.target << ','
            << r.method << ',' << (r.success ? 1 : 0) << ',' << r.n_flip << ','
            << fmt_double(r.pa_acc) << ',' << fmt_double(r.lambda_used) << ',' << r.k_used << ','
            << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << r.solve_calls << ','
            << (r.surface_ok ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

AttackReport load_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "#talbf-report v1")
        throw std::runtime_error("not a v1 report: " + path);
    std::getline(in, line);  // header
    AttackReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 14) throw std::runtime_error("bad report row: " + line);
        InstanceRecord r;
        r.id = std::stoi(cells[0]);
        r.sample_index = std::stoi(cells[1]);
        r.source = std::stoi(cells[2]);
        r.target = std::stoi(cells[3]);
        r.method = cells[4];
        r.success = cells[5] == "1";
        r.n_flip = std::stoi(cells[6]);
        r.pa_acc = std::stod(cells[7]);
        r.lambda_used = std::stod(cells[8]);
        r.k_used = std::stoi(cells[9]);
        r.converged = cells[10] == "1";
        r.iterations = std::stoi(cells[11]);
        r.solve_calls = std::stoi(cells[12]);
        r.surface_ok = cells[13] == "1";
        report.rows.push_back(std::move(r));
    }
    return report;
}

void emit_report_json(const AttackReport& report, const std::string& path) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["rows"] = nlohmann::json::array();
    for (const InstanceRecord& r : report.rows) {
        doc["rows"].push_back({{"id", r.id},
                               {"sample_index", r.sample_index},
                               {"source", r.source},
                               {"target", r.target},
                               {"method", r.method},
                               {"success", r.success},
                               {"n_flip", r.n_flip},
                               {"pa_acc", r.pa_acc},
                               {"lambda_used", r.lambda_used},
                               {"k_used", r.k_used},
                               {"converged", r.converged},
                               {"iterations", r.iterations},
                               {"solve_calls", r.solve_calls},
                               {"surface_ok", r.surface_ok}});
    }
    doc["aggregates"] = nlohmann::json::array();
    for (const Aggregates& a : aggregate(report)) {
        nlohmann::json entry = {{"method", a.method},
                                {"instances", a.instances},
                                {"successes", a.successes},
                                {"pa_acc_mean", a.pa_acc_mean},
                                {"pa_acc_std", a.pa_acc_std},
                                {"n_flip_mean", a.n_flip_mean},
                                {"n_flip_std", a.n_flip_std},
                                {"surface_violations", a.surface_violations}};
        if (std::isnan(a.asr))
            entry["asr"] = nullptr;
        else
            entry["asr"] = a.asr;
        doc["aggregates"].push_back(entry);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
}

void emit_summary_csv(const std::vector<Aggregates>& aggregates, const std::string& path,
                      const std::optional<std::vector<Aggregates>>& reference) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "method,instances,asr,pa_acc_mean,pa_acc_std,n_flip_mean,n_flip_std,"
           "surface_violations,delta_n_flip\n";
    for (const Aggregates& a : aggregates) {
        out << a.method << ',' << a.instances << ',';
        if (std::isnan(a.asr))
            out << "n/a";
        else
            out << fmt_double(a.asr);
        out << ',' << fmt_double(a.pa_acc_mean) << ',' << fmt_double(a.pa_acc_std) << ','
            << fmt_double(a.n_flip_mean) << ',' << fmt_double(a.n_flip_std) << ','
            << a.surface_violations << ',';
        bool have_ref = false;
        if (reference) {
            for (const Aggregates& ref : *reference) {
                if (ref.method == a.method) {
                    out << fmt_double(a.n_flip_mean - ref.n_flip_mean);
                    have_ref = true;
                    break;
                }
            }
        }
        if (!have_ref) out << "n/a";
        out << '\n';
    }
}

void emit_timings_csv(const AttackReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "id,method,wall_ms\n";
    for (const InstanceRecord& r : report.rows)
        out << r.id << ',' << r.method << ',' << fmt_double(r.wall_ms) << '\n';
}

void emit_trace_csv(const std::vector<TracePoint>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "iter,box_residual,sphere_residual,objective\n";
    for (const TracePoint& tp : trace)
        out << tp.iter << ',' << fmt_double(tp.box_residual) << ','
            << fmt_double(tp.sphere_residual) << ',' << fmt_double(tp.objective) << '\n';
}

std::string config_hash(const std::string& resolved_config_text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : resolved_config_text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace talbf
