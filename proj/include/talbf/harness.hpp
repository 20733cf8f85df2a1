#pragma once

// Batch attack execution and reporting: runs one attack method over sampled
// (sample, target) instances against fresh copies of a frozen model,
// computes ASR / PA-ACC / N_flip, and serializes everything to versioned
// CSV/JSON files plus per-instance convergence traces.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "talbf/attack.hpp"
#include "talbf/baselines.hpp"
#include "talbf/network.hpp"

namespace talbf {

enum class AttackMethod { kTalbf, kGreedy, kFinetune, kOracle };

std::string method_name(AttackMethod method);
AttackMethod parse_method(const std::string& name);

// How TA-LBF picks hyperparameters per instance.
enum class SearchMode { kNone, kLambda, kLambdaK };

struct HarnessOptions {
    AttackMethod method = AttackMethod::kTalbf;
    SearchMode search = SearchMode::kLambdaK;
    int instances = 50;
    std::uint64_t seed = 1;
    int jobs = 1;
    SolverConfig solver;
    int greedy_budget = 50;
    int ft_steps = 500;
    double ft_lr = 0.01;
    double ft_lambda = 1.0;
    int oracle_max_flips = 2;
    double oracle_subset_budget = 1e7;
};

struct InstanceRecord {
    int id = 0;
    int sample_index = 0;  // row in the eval split
    int source = 0;
    int target = 0;
    std::string method;
    bool success = false;
    int n_flip = 0;
    double pa_acc = 0.0;
    double lambda_used = 0.0;
    int k_used = 0;
    bool converged = false;
    int iterations = 0;
    int solve_calls = 0;
    bool surface_ok = true;  // all flips confined to rows s and t
    double wall_ms = 0.0;    // timing sidecar only, never in report files
    std::vector<FlipCoord> flips;
    std::vector<TracePoint> trace;
};

struct AttackReport {
    std::vector<InstanceRecord> rows;
};

struct Aggregates {
    std::string method;
    int instances = 0;
    int successes = 0;
    double asr = 0.0;  // NaN when instances == 0 (reported as n/a)
    double pa_acc_mean = 0.0, pa_acc_std = 0.0;
    double n_flip_mean = 0.0, n_flip_std = 0.0;
    int surface_violations = 0;
};

// One entry per method present, in first-appearance order. Pure function of
// the rows.
std::vector<Aggregates> aggregate(const AttackReport& report);

// Runs options.instances attacks against model. Attacked samples are drawn
// from the eval split without replacement (throws std::runtime_error when
// the split is too small); targets are uniform over the other classes. Each
// instance attacks a fresh copy of the model and its PA-ACC is measured on
// the eval split minus the attacked sample (the auxiliary split is disjoint
// by construction). Rows come back sorted by instance id regardless of
// worker count.
AttackReport run_batch(const ModelSnapshot& model, const Dataset& eval_split,
                       const Dataset& aux_split, const HarnessOptions& options);

// Accuracy of the post-attack model on the eval split with the attacked
// sample removed.
double pa_acc(const ModelSnapshot& attacked_model, const Dataset& eval_split,
              int attacked_index);

struct GridBounds {
    double x_min = -8.0, x_max = 8.0;
    double y_min = -8.0, y_max = 8.0;
};

// resolution x resolution rows of "x1,x2,class" over a regular inclusive
// grid. 2-D input models only.
void export_boundary_grid(const ModelSnapshot& model, const GridBounds& bounds, int resolution,
                          const std::string& path);

// Versioned report files. CSV holds the per-instance rows; JSON mirrors the
// rows and adds the aggregates. Timing lives in a separate sidecar so report
// bytes stay reproducible across runs.
void emit_report_csv(const AttackReport& report, const std::string& path);
void emit_report_json(const AttackReport& report, const std::string& path);
AttackReport load_report_csv(const std::string& path);
void emit_summary_csv(const std::vector<Aggregates>& aggregates, const std::string& path,
                      const std::optional<std::vector<Aggregates>>& reference = std::nullopt);
void emit_timings_csv(const AttackReport& report, const std::string& path);
void emit_trace_csv(const std::vector<TracePoint>& trace, const std::string& path);

// 16-hex-digit FNV-1a of the resolved config text; used to name run
// directories as run_<hash>_s<seed>.
std::string config_hash(const std::string& resolved_config_text);

}  // namespace talbf
