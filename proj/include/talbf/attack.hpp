#pragma once

// Targeted bit-flip attack on the quantized final layer, solved as a
// cardinality-constrained binary program via lp-box ADMM.
//
// The 2CQ optimization variable stacks the relaxed bits of the source row
// (block 0) and target row (block 1); each C x Q block is elongated
// column-wise, so entry (row r, weight j, bit position p) lives at flat
// index r*C*Q + p*C + j.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talbf/dataset.hpp"
#include "talbf/network.hpp"

namespace talbf {

struct SolverConfig {
    double lambda0 = 100.0;
    int k0 = 5;
    double delta = 10.0;
    double eta = 0.01;       // primal step size
    int inner_steps = 5;     // gradient steps per ADMM iteration
    double rho1 = 1e-4;      // initial penalty factors
    double rho2 = 1e-4;
    double rho3 = 1e-5;
    double rho1_cap = 50.0;
    double rho2_cap = 50.0;
    double rho3_cap = 5.0;
    double rho_growth = 1.01;
    int max_iter = 2000;
    double stop_tol = 1e-4;  // on both ||bhat-u1||^2 and ||bhat-u2||^2
    int max_lambda_trials = 8;
    int max_k_trials = 4;
    std::uint64_t seed = 0;  // recorded for provenance; the solver is deterministic
};

SolverConfig load_solver_config(const std::string& path);
void save_solver_config(const SolverConfig& config, const std::string& path);

// Raised when the primal iterate goes non-finite (an extreme lambda can blow
// up the cubic cardinality term). The hyperparameter search treats it as a
// failed trial.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Frozen inputs of one attack instance plus everything that can be
// precomputed once: penultimate features of the attacked and auxiliary
// samples, original logits of the untouched rows, and the bit-value
// coefficients of the decode map. m is the largest non-source logit of the
// ORIGINAL model on x and never changes during the attack.
struct AttackProblem {
    AttackProblem(const ModelSnapshot& model, const Eigen::VectorXd& x, int source, int target,
                  const Dataset& aux, double lambda, int k, double delta);

    // Same tables, different trade-off / budget.
    AttackProblem with_hyper(double lambda, int k) const;

    const ModelSnapshot* model = nullptr;
    Eigen::VectorXd x;
    int s = 0;
    int t = 0;
    double lambda = 1.0;
    int k = 1;
    double delta = 0.0;
    double m = 0.0;

    Eigen::VectorXd g_x;           // C
    Eigen::MatrixXd aux_features;  // N x C
    std::vector<int> aux_labels;   // N
    Eigen::MatrixXd base_logits;   // N x K, original model; cols s,t replaced per eval
    Eigen::VectorXd hcoef;         // Q, bit coefficient * step size
    Eigen::VectorXd b;             // 2CQ, original bits
    int C = 0;
    int Q = 0;
    int K = 0;

    int dim() const { return 2 * C * Q; }
    int flat_index(int row_block, int j, int p) const { return row_block * C * Q + p * C + j; }

    // Decode map applied linearly to the relaxed bits of one row block.
    Eigen::VectorXd relaxed_weights(const Eigen::VectorXd& bhat, int row_block) const;

    // Hinge margin loss: max(m - p_t + delta, 0) + max(p_s - m + delta, 0).
    double loss_margin(const Eigen::VectorXd& bhat) const;
    // Cross-entropy over the auxiliary set with rows s,t taken from bhat.
    // Throws std::invalid_argument when the auxiliary set is empty.
    double loss_stealth(const Eigen::VectorXd& bhat) const;
    double objective(const Eigen::VectorXd& bhat) const;
    // d(L1 + lambda*L2)/dbhat with hinge activity taken at bhat.
    Eigen::VectorXd objective_gradient(const Eigen::VectorXd& bhat) const;

    // Same quantities expressed over decoded row weights; the fine-tuning
    // baseline works in this space directly.
    double margin_from_weights(const Eigen::VectorXd& w_s, const Eigen::VectorXd& w_t) const;
    double stealth_from_weights(const Eigen::VectorXd& w_s, const Eigen::VectorXd& w_t) const;
    void weight_gradient(const Eigen::VectorXd& w_s, const Eigen::VectorXd& w_t,
                         Eigen::VectorXd& grad_ws, Eigen::VectorXd& grad_wt) const;
};

// Primal/auxiliary/dual variables of the two-block ADMM.
struct AdmmState {
    Eigen::VectorXd bhat;
    Eigen::VectorXd u1, u2;
    double u3 = 0.0;
    Eigen::VectorXd z1, z2;
    double z3 = 0.0;
    double rho1 = 0.0, rho2 = 0.0, rho3 = 0.0;
    int iter = 0;
};

AdmmState init_admm(const AttackProblem& problem, const SolverConfig& config);

// Elementwise clamp onto [0,1]^n.
Eigen::VectorXd project_box(const Eigen::VectorXd& a);
// Projection onto {v : ||v - 1/2||^2 = n/4}. A zero offset (a == 1/2 on every
// coordinate) is mapped deterministically to 1/2 + (sqrt(n)/2) e_1.
Eigen::VectorXd project_sphere(const Eigen::VectorXd& a);
double project_nonneg(double a);

// Augmented Lagrangian as a function of bhat with the rest of the state
// fixed; the quantity whose gradient drives the primal step.
double lagrangian_value(const AdmmState& state, const AttackProblem& problem,
                        const Eigen::VectorXd& bhat);

// dL/dbhat: objective gradient + z1 + z2 + rho1(bhat-u1) + rho2(bhat-u2)
//           + 2(bhat-b)[z3 + rho3(||bhat-b||^2 - k + u3)].
Eigen::VectorXd grad_lagrangian(const AdmmState& state, const AttackProblem& problem);

// u1 <- P_box(bhat + z1/rho1), u2 <- P_sphere(bhat + z2/rho2),
// u3 <- P_nonneg(-||b-bhat||^2 + k - z3/rho3); all three read the same
// pre-update state.
void update_auxiliaries(AdmmState& state, const AttackProblem& problem);

// `steps` gradient descent steps on the augmented Lagrangian. Throws
// std::runtime_error if the gradient goes non-finite.
void update_primal(AdmmState& state, const AttackProblem& problem, int steps, double eta);

// Dual ascent plus the capped geometric penalty schedule.
void update_duals(AdmmState& state, const AttackProblem& problem, const SolverConfig& config);

struct TracePoint {
    int iter = 0;
    double box_residual = 0.0;
    double sphere_residual = 0.0;
    double objective = 0.0;
};

struct FlipCoord {
    int cls = 0;  // actual class index (s or t)
    int j = 0;    // input index
    int p = 0;    // bit storage position, 0 = sign bit
};

struct AttackOutcome {
    std::vector<FlipCoord> flipped;
    int n_flip = 0;
    bool success = false;
    std::vector<TracePoint> trace;
    double lambda_used = 0.0;
    int k_used = 0;
    int iterations = 0;
    bool converged = false;  // stopped on the residual criterion
    double final_margin_loss = 0.0;
    int solve_calls = 1;
};

// bit = 1 iff value >= 0.5 (ties round up).
std::vector<std::uint8_t> binarize(const Eigen::VectorXd& bhat);

ModelSnapshot apply_flips(const ModelSnapshot& model, const std::vector<FlipCoord>& flips);

// One ADMM run: auxiliary block, primal block, dual ascent per iteration
// until both residuals reach stop_tol or max_iter. Success requires the
// flipped model to predict the target class AND the flip count to stay
// within k; failure is a valid outcome, never an exception.
AttackOutcome solve(const AttackProblem& problem, const SolverConfig& config);

// Joint hyperparameter search: lambda is halved up to max_lambda_trials
// times for a fixed k; on exhaustion k doubles, up to max_k_trials values.
// Returns the first success, otherwise the failed trial with the lowest
// final margin loss.
AttackOutcome search_lambda_k(const AttackProblem& problem_template, const SolverConfig& config);

}  // namespace talbf
