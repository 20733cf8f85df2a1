#include "talbf/attack.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace talbf {

namespace {

double stable_lse(const Eigen::VectorXd& z) {
    const double mx = z.maxCoeff();
    return std::log((z.array() - mx).exp().sum()) + mx;
}

}  // namespace

SolverConfig load_solver_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open solver config: " + path);
    SolverConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key, eq, value;
        if (!(ss >> key)) continue;
        if (!(ss >> eq >> value) || eq != "=")
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        if (key == "lambda0") cfg.lambda0 = std::stod(value);
        else if (key == "k0") cfg.k0 = std::stoi(value);
        else if (key == "delta") cfg.delta = std::stod(value);
        else if (key == "eta") cfg.eta = std::stod(value);
        else if (key == "inner_steps") cfg.inner_steps = std::stoi(value);
        else if (key == "rho1") cfg.rho1 = std::stod(value);
        else if (key == "rho2") cfg.rho2 = std::stod(value);
        else if (key == "rho3") cfg.rho3 = std::stod(value);
        else if (key == "rho1_cap") cfg.rho1_cap = std::stod(value);
        else if (key == "rho2_cap") cfg.rho2_cap = std::stod(value);
        else if (key == "rho3_cap") cfg.rho3_cap = std::stod(value);
        else if (key == "rho_growth") cfg.rho_growth = std::stod(value);
        else if (key == "max_iter") cfg.max_iter = std::stoi(value);
        else if (key == "stop_tol") cfg.stop_tol = std::stod(value);
        else if (key == "max_lambda_trials") cfg.max_lambda_trials = std::stoi(value);
        else if (key == "max_k_trials") cfg.max_k_trials = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else throw std::runtime_error(path + ": unknown solver config key '" + key + "'");
    }
    return cfg;
}

void save_solver_config(const SolverConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.precision(17);
    out << "lambda0 = " << c.lambda0 << "\n"
        << "k0 = " << c.k0 << "\n"
        << "delta = " << c.delta << "\n"
        << "eta = " << c.eta << "\n"
        << "inner_steps = " << c.inner_steps << "\n"
        << "rho1 = " << c.rho1 << "\n"
        << "rho2 = " << c.rho2 << "\n"
        << "rho3 = " << c.rho3 << "\n"
        << "rho1_cap = " << c.rho1_cap << "\n"
        << "rho2_cap = " << c.rho2_cap << "\n"
        << "rho3_cap = " << c.rho3_cap << "\n"
        << "rho_growth = " << c.rho_growth << "\n"
        << "max_iter = " << c.max_iter << "\n"
        << "stop_tol = " << c.stop_tol << "\n"
        << "max_lambda_trials = " << c.max_lambda_trials << "\n"
        << "max_k_trials = " << c.max_k_trials << "\n"
        << "seed = " << c.seed << "\n";
}

AttackProblem::AttackProblem(const ModelSnapshot& model_in, const Eigen::VectorXd& x_in,
                             int source, int target, const Dataset& aux, double lambda_in,
                             int k_in, double delta_in)
    : model(&model_in), x(x_in), s(source), t(target), lambda(lambda_in), k(k_in),
      delta(delta_in) {
    K = model->num_classes();
    C = model->feature_dim();
    Q = model->last.bit_width();
    if (s < 0 || s >= K || t < 0 || t >= K) throw std::invalid_argument("class index out of range");
    if (s == t) throw std::invalid_argument("target class must differ from the source class");
    if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
    if (k < 1) throw std::invalid_argument("flip budget k must be >= 1");

    g_x = model->penultimate(x);

    hcoef.resize(Q);
    for (int p = 0; p < Q; ++p) hcoef(p) = bit_coefficient(p, Q) * model->last.step_size();

    b.resize(dim());
    for (int r = 0; r < 2; ++r) {
        const int cls = (r == 0) ? s : t;
        for (int j = 0; j < C; ++j)
            for (int p = 0; p < Q; ++p)
                b(flat_index(r, j, p)) = static_cast<double>(model->last.bit(cls, j, p));
    }

    const int n = aux.size();
    aux_features.resize(n, C);
    aux_labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd xi = aux.sample(i);
        if (xi.size() == x.size() && xi == x)
            throw std::invalid_argument("auxiliary set must not contain the attacked sample");
        aux_features.row(i) = model->penultimate(xi).transpose();
        aux_labels[static_cast<std::size_t>(i)] = aux.labels[i];
    }
    const Eigen::MatrixXd w = model->last.weights();  // K x C
    base_logits = aux_features * w.transpose();       // N x K

    const Eigen::VectorXd original_logits = w * g_x;
    m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i)
        if (i != s) m = std::max(m, original_logits(i));
}

AttackProblem AttackProblem::with_hyper(double new_lambda, int new_k) const {
    if (new_lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
    if (new_k < 1) throw std::invalid_argument("flip budget k must be >= 1");
    AttackProblem copy = *this;
    copy.lambda = new_lambda;
    copy.k = new_k;
    return copy;
}

Eigen::VectorXd AttackProblem::relaxed_weights(const Eigen::VectorXd& bhat, int row_block) const {
    if (bhat.size() != dim()) throw std::invalid_argument("bhat has wrong length");
    Eigen::Map<const Eigen::MatrixXd> block(bhat.data() + row_block * C * Q, C, Q);
    return block * hcoef;
}

double AttackProblem::margin_from_weights(const Eigen::VectorXd& w_s,
                                          const Eigen::VectorXd& w_t) const {
    const double ps = w_s.dot(g_x);
    const double pt = w_t.dot(g_x);
    return std::max(m - pt + delta, 0.0) + std::max(ps - m + delta, 0.0);
}

double AttackProblem::stealth_from_weights(const Eigen::VectorXd& w_s,
                                           const Eigen::VectorXd& w_t) const {
    const int n = static_cast<int>(aux_labels.size());
    if (n == 0) throw std::invalid_argument("stealth loss needs a nonempty auxiliary set");
    const Eigen::VectorXd ps = aux_features * w_s;
    const Eigen::VectorXd pt = aux_features * w_t;
    double total = 0.0;
    Eigen::VectorXd z(K);
    for (int i = 0; i < n; ++i) {
        z = base_logits.row(i).transpose();
        z(s) = ps(i);
        z(t) = pt(i);
        total += stable_lse(z) - z(aux_labels[static_cast<std::size_t>(i)]);
    }
    return total;
}

void AttackProblem::weight_gradient(const Eigen::VectorXd& w_s, const Eigen::VectorXd& w_t,
                                    Eigen::VectorXd& grad_ws, Eigen::VectorXd& grad_wt) const {
    const int n = static_cast<int>(aux_labels.size());
    if (n == 0) throw std::invalid_argument("stealth loss needs a nonempty auxiliary set");
    grad_ws = Eigen::VectorXd::Zero(C);
    grad_wt = Eigen::VectorXd::Zero(C);

    // hinge activity at the current iterate
    const double ps = w_s.dot(g_x);
    const double pt = w_t.dot(g_x);
    if (ps > m - delta) grad_ws += g_x;
    if (pt < m + delta) grad_wt -= g_x;

    // softmax cross-entropy over the auxiliary set
    const Eigen::VectorXd ps_aux = aux_features * w_s;
    const Eigen::VectorXd pt_aux = aux_features * w_t;
    Eigen::VectorXd coef_s(n), coef_t(n);
    Eigen::VectorXd z(K);
    for (int i = 0; i < n; ++i) {
        z = base_logits.row(i).transpose();
        z(s) = ps_aux(i);
        z(t) = pt_aux(i);
        const double lse = stable_lse(z);
        const int y = aux_labels[static_cast<std::size_t>(i)];
        coef_s(i) = std::exp(z(s) - lse) - (y == s ? 1.0 : 0.0);
        coef_t(i) = std::exp(z(t) - lse) - (y == t ? 1.0 : 0.0);
    }
    grad_ws += lambda * (aux_features.transpose() * coef_s);
    grad_wt += lambda * (aux_features.transpose() * coef_t);
}

double AttackProblem::loss_margin(const Eigen::VectorXd& bhat) const {
    return margin_from_weights(relaxed_weights(bhat, 0), relaxed_weights(bhat, 1));
}

double AttackProblem::loss_stealth(const Eigen::VectorXd& bhat) const {
    return stealth_from_weights(relaxed_weights(bhat, 0), relaxed_weights(bhat, 1));
}

double AttackProblem::objective(const Eigen::VectorXd& bhat) const {
    return loss_margin(bhat) + lambda * loss_stealth(bhat);
}

Eigen::VectorXd AttackProblem::objective_gradient(const Eigen::VectorXd& bhat) const {
    Eigen::VectorXd grad_ws, grad_wt;
    weight_gradient(relaxed_weights(bhat, 0), relaxed_weights(bhat, 1), grad_ws, grad_wt);

    // lift per-weight gradients through the linear decode map
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim());
    Eigen::Map<Eigen::MatrixXd>(grad.data(), C, Q) = grad_ws * hcoef.transpose();
    Eigen::Map<Eigen::MatrixXd>(grad.data() + C * Q, C, Q) = grad_wt * hcoef.transpose();
    return grad;
}

AdmmState init_admm(const AttackProblem& problem, const SolverConfig& config) {
    AdmmState st;
    st.bhat = problem.b;
    st.u1 = problem.b;
    st.u2 = problem.b;
    st.u3 = 0.0;
    st.z1 = Eigen::VectorXd::Zero(problem.dim());
    st.z2 = Eigen::VectorXd::Zero(problem.dim());
    st.z3 = 0.0;
    st.rho1 = config.rho1;
    st.rho2 = config.rho2;
    st.rho3 = config.rho3;
    st.iter = 0;
    return st;
}

Eigen::VectorXd project_box(const Eigen::VectorXd& a) {
    return a.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::VectorXd project_sphere(const Eigen::VectorXd& a) {
    const double n = static_cast<double>(a.size());
    const double radius = 0.5 * std::sqrt(n);
    Eigen::VectorXd offset = a.array() - 0.5;
    const double norm = offset.norm();
    if (norm == 0.0) {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(a.size(), 0.5);
        out(0) += radius;
        return out;
    }
    return (offset * (radius / norm)).array() + 0.5;
}

double project_nonneg(double a) { return std::max(0.0, a); }

double lagrangian_value(const AdmmState& state, const AttackProblem& problem,
                        const Eigen::VectorXd& bhat) {
    double value = problem.objective(bhat);
    value += state.z1.dot(bhat - state.u1) + state.z2.dot(bhat - state.u2);
    const double slack = (problem.b - bhat).squaredNorm() - problem.k + state.u3;
    value += state.z3 * slack;
    value += 0.5 * state.rho1 * (bhat - state.u1).squaredNorm();
    value += 0.5 * state.rho2 * (bhat - state.u2).squaredNorm();
    value += 0.5 * state.rho3 * slack * slack;
    return value;
}

Eigen::VectorXd grad_lagrangian(const AdmmState& state, const AttackProblem& problem) {
    Eigen::VectorXd grad = problem.objective_gradient(state.bhat);
    grad += state.z1 + state.z2;
    grad += state.rho1 * (state.bhat - state.u1) + state.rho2 * (state.bhat - state.u2);
    const double slack = (state.bhat - problem.b).squaredNorm() - problem.k + state.u3;
    grad += 2.0 * (state.z3 + state.rho3 * slack) * (state.bhat - problem.b);
    return grad;
}

void update_auxiliaries(AdmmState& state, const AttackProblem& problem) {
    // u1, u2, u3 all read the same pre-update (bhat, z) block
    const Eigen::VectorXd& bh = state.bhat;
    state.u1 = project_box(bh + state.z1 / state.rho1);
    state.u2 = project_sphere(bh + state.z2 / state.rho2);
    state.u3 = project_nonneg(-(problem.b - bh).squaredNorm() + problem.k - state.z3 / state.rho3);
}

void update_primal(AdmmState& state, const AttackProblem& problem, int steps, double eta) {
    if (steps < 1) throw std::invalid_argument("primal update needs at least one step");
    for (int i = 0; i < steps; ++i) {
        const Eigen::VectorXd grad = grad_lagrangian(state, problem);
        if (!grad.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite gradient in primal update (iteration " << state.iter << ", step "
                << i << ", |bhat|_inf = " << state.bhat.cwiseAbs().maxCoeff()
                << ", rho = " << state.rho1 << "/" << state.rho2 << "/" << state.rho3 << ")";
            throw NumericalError(msg.str());
        }
        state.bhat -= eta * grad;
    }
}

void update_duals(AdmmState& state, const AttackProblem& problem, const SolverConfig& config) {
    state.z1 += state.rho1 * (state.bhat - state.u1);
    state.z2 += state.rho2 * (state.bhat - state.u2);
    state.z3 += state.rho3 * ((problem.b - state.bhat).squaredNorm() - problem.k + state.u3);
    state.rho1 = std::min(state.rho1 * config.rho_growth, config.rho1_cap);
    state.rho2 = std::min(state.rho2 * config.rho_growth, config.rho2_cap);
    state.rho3 = std::min(state.rho3 * config.rho_growth, config.rho3_cap);
}

std::vector<std::uint8_t> binarize(const Eigen::VectorXd& bhat) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(bhat.size()));
    for (Eigen::Index i = 0; i < bhat.size(); ++i) bits[static_cast<std::size_t>(i)] = bhat(i) >= 0.5;
    return bits;
}

ModelSnapshot apply_flips(const ModelSnapshot& model, const std::vector<FlipCoord>& flips) {
    ModelSnapshot out = model;
    for (const FlipCoord& f : flips) out.last.toggle_bit(f.cls, f.j, f.p);
    return out;
}

AttackOutcome solve(const AttackProblem& problem, const SolverConfig& config) {
    AttackOutcome outcome;
    outcome.lambda_used = problem.lambda;
    outcome.k_used = problem.k;

    AdmmState state = init_admm(problem, config);
    for (int iter = 1; iter <= config.max_iter; ++iter) {
        state.iter = iter;
        update_auxiliaries(state, problem);
        update_primal(state, problem, config.inner_steps, config.eta);
        update_duals(state, problem, config);

        TracePoint tp;
        tp.iter = iter;
        tp.box_residual = (state.bhat - state.u1).squaredNorm();
        tp.sphere_residual = (state.bhat - state.u2).squaredNorm();
        tp.objective = problem.objective(state.bhat);
        outcome.trace.push_back(tp);
        outcome.iterations = iter;
        if (tp.box_residual <= config.stop_tol && tp.sphere_residual <= config.stop_tol) {
            outcome.converged = true;
            break;
        }
    }

    const std::vector<std::uint8_t> bits = binarize(state.bhat);
    Eigen::VectorXd rounded(problem.dim());
    for (int i = 0; i < problem.dim(); ++i) rounded(i) = static_cast<double>(bits[static_cast<std::size_t>(i)]);
    outcome.final_margin_loss = problem.loss_margin(rounded);

    for (int r = 0; r < 2; ++r) {
        const int cls = (r == 0) ? problem.s : problem.t;
        for (int j = 0; j < problem.C; ++j)
            for (int p = 0; p < problem.Q; ++p) {
                const int idx = problem.flat_index(r, j, p);
                if (bits[static_cast<std::size_t>(idx)] !=
                    static_cast<std::uint8_t>(problem.b(idx)))
                    outcome.flipped.push_back(FlipCoord{cls, j, p});
            }
    }
    outcome.n_flip = static_cast<int>(outcome.flipped.size());

    const ModelSnapshot attacked = apply_flips(*problem.model, outcome.flipped);
    outcome.success =
        (attacked.predict(problem.x) == problem.t) && (outcome.n_flip <= problem.k);
    return outcome;
}

AttackOutcome search_lambda_k(const AttackProblem& problem_template, const SolverConfig& config) {
    AttackOutcome best_failure;
    double best_failure_loss = std::numeric_limits<double>::infinity();
    bool have_failure = false;
    int calls = 0;

    int k = config.k0;
    for (int kt = 0; kt < config.max_k_trials; ++kt) {
        double lambda = config.lambda0;
        for (int lt = 0; lt < config.max_lambda_trials; ++lt) {
            AttackOutcome outcome;
            ++calls;
            try {
                outcome = solve(problem_template.with_hyper(lambda, k), config);
            } catch (const NumericalError&) {
                // a diverged trial is just an unsuccessful trial
                outcome.success = false;
                outcome.lambda_used = lambda;
                outcome.k_used = k;
                outcome.final_margin_loss = std::numeric_limits<double>::infinity();
            }
            if (outcome.success) {
                outcome.solve_calls = calls;
                return outcome;
            }
            if (!have_failure || outcome.final_margin_loss < best_failure_loss) {
                best_failure_loss = outcome.final_margin_loss;
                best_failure = std::move(outcome);
                have_failure = true;
            }
            lambda /= 2.0;
        }
        k *= 2;
    }
    best_failure.solve_calls = calls;
    return best_failure;
}

}  // namespace talbf
