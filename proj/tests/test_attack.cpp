#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "talbf/attack.hpp"
#include "talbf/dataset.hpp"

using namespace talbf;

namespace {

// Passthrough model (no body): features are the raw input, so logits are
// fully controlled by the quantized head.
ModelSnapshot head_model(const Eigen::MatrixXd& head, int q_bits) {
    ModelSnapshot model;
    model.last = QuantizedLayer::from_weights(head, q_bits);
    return model;
}

Dataset random_aux(Rng& rng, int n, int dim, int classes) {
    Dataset aux;
    aux.features.resize(n, dim);
    aux.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) aux.features(i, j) = rng.normal();
        aux.labels[static_cast<std::size_t>(i)] = rng.uniform_int(classes);
    }
    return aux;
}

struct Fixture {
    ModelSnapshot model;
    Dataset aux;
    Eigen::VectorXd x;
};

Fixture make_fixture(std::uint64_t seed, int classes = 3, int dim = 4, int q_bits = 4,
                     int aux_n = 6) {
    Rng rng(seed);
    Eigen::MatrixXd head(classes, dim);
    for (int i = 0; i < head.size(); ++i) head(i) = rng.normal();
    Fixture fx;
    fx.model = head_model(head, q_bits);
    fx.aux = random_aux(rng, aux_n, dim, classes);
    fx.x.resize(dim);
    for (int j = 0; j < dim; ++j) fx.x(j) = rng.normal();
    return fx;
}

// Straight-line re-implementation of the relaxed losses, kept independent
// of the library's vectorized path.
double oracle_margin(const AttackProblem& pr, const Eigen::VectorXd& bhat) {
    double ps = 0.0, pt = 0.0;
    for (int j = 0; j < pr.C; ++j) {
        double ws = 0.0, wt = 0.0;
        for (int p = 0; p < pr.Q; ++p) {
            const double coef = bit_coefficient(p, pr.Q) * pr.model->last.step_size();
            ws += coef * bhat(pr.flat_index(0, j, p));
            wt += coef * bhat(pr.flat_index(1, j, p));
        }
        ps += ws * pr.g_x(j);
        pt += wt * pr.g_x(j);
    }
    const double hinge_t = pr.m - pt + pr.delta;
    const double hinge_s = ps - pr.m + pr.delta;
    return (hinge_t > 0 ? hinge_t : 0) + (hinge_s > 0 ? hinge_s : 0);
}

double oracle_stealth(const AttackProblem& pr, const Eigen::VectorXd& bhat) {
    double total = 0.0;
    for (std::size_t i = 0; i < pr.aux_labels.size(); ++i) {
        std::vector<double> z(static_cast<std::size_t>(pr.K));
        for (int c = 0; c < pr.K; ++c) z[static_cast<std::size_t>(c)] = pr.base_logits(static_cast<int>(i), c);
        for (int block = 0; block < 2; ++block) {
            double logit = 0.0;
            for (int j = 0; j < pr.C; ++j) {
                double w = 0.0;
                for (int p = 0; p < pr.Q; ++p)
                    w += bit_coefficient(p, pr.Q) * pr.model->last.step_size() *
                         bhat(pr.flat_index(block, j, p));
                logit += w * pr.aux_features(static_cast<int>(i), j);
            }
            z[static_cast<std::size_t>(block == 0 ? pr.s : pr.t)] = logit;
        }
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - mx);
        total += std::log(sum) + mx - z[static_cast<std::size_t>(pr.aux_labels[i])];
    }
    return total;
}

Eigen::VectorXd fd_gradient(const AdmmState& state, const AttackProblem& pr, double h) {
    Eigen::VectorXd grad(pr.dim());
    for (int i = 0; i < pr.dim(); ++i) {
        Eigen::VectorXd plus = state.bhat, minus = state.bhat;
        plus(i) += h;
        minus(i) -= h;
        grad(i) = (lagrangian_value(state, pr, plus) - lagrangian_value(state, pr, minus)) / (2 * h);
    }
    return grad;
}

Eigen::VectorXd random_relaxed(Rng& rng, int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.uniform();
    return v;
}

void set_row_weights(const AttackProblem& pr, Eigen::VectorXd& bhat, int block,
                     const Eigen::VectorXd& w) {
    for (int j = 0; j < pr.C; ++j) {
        const BitWord word = encode_weight(w(j), pr.model->last.step_size(), pr.Q);
        for (int p = 0; p < pr.Q; ++p)
            bhat(pr.flat_index(block, j, p)) = word[static_cast<std::size_t>(p)];
    }
}

}  // namespace

TEST_CASE("solver config defaults carry the published hyperparameters") {
    const SolverConfig cfg;
    CHECK(cfg.lambda0 == 100.0);
    CHECK(cfg.k0 == 5);
    CHECK(cfg.delta == 10.0);
    CHECK(cfg.eta == 0.01);
    CHECK(cfg.inner_steps == 5);
    CHECK(cfg.rho1 == 1e-4);
    CHECK(cfg.rho2 == 1e-4);
    CHECK(cfg.rho3 == 1e-5);
    CHECK(cfg.rho1_cap == 50.0);
    CHECK(cfg.rho2_cap == 50.0);
    CHECK(cfg.rho3_cap == 5.0);
    CHECK(cfg.rho_growth == 1.01);
    CHECK(cfg.max_iter == 2000);
    CHECK(cfg.stop_tol == 1e-4);
    CHECK(cfg.max_lambda_trials == 8);
    CHECK(cfg.max_k_trials == 4);
}

TEST_CASE("solver config round-trips through its key-value file") {
    SolverConfig cfg;
    cfg.lambda0 = 12.5;
    cfg.k0 = 7;
    cfg.delta = 3.0;
    cfg.stop_tol = 2e-5;
    cfg.seed = 99;
    const std::string path = "solver_roundtrip.cfg";
    save_solver_config(cfg, path);
    const SolverConfig back = load_solver_config(path);
    CHECK(back.lambda0 == cfg.lambda0);
    CHECK(back.k0 == cfg.k0);
    CHECK(back.delta == cfg.delta);
    CHECK(back.stop_tol == cfg.stop_tol);
    CHECK(back.seed == cfg.seed);
    CHECK(back.inner_steps == cfg.inner_steps);
    std::remove(path.c_str());
    CHECK_THROWS(load_solver_config("missing_solver.cfg"));
}

TEST_CASE("problem setup freezes m from the original bits and validates inputs") {
    const Fixture fx = make_fixture(1);
    const int s = fx.model.predict(fx.x);
    const int t = (s + 1) % 3;
    const AttackProblem pr(fx.model, fx.x, s, t, fx.aux, 100.0, 5, 10.0);

    double expect_m = -1e300;
    for (int i = 0; i < 3; ++i)
        if (i != s) expect_m = std::max(expect_m, fx.model.class_logit(fx.x, i));
    CHECK(pr.m == doctest::Approx(expect_m));

    CHECK_THROWS_AS(AttackProblem(fx.model, fx.x, s, s, fx.aux, 100.0, 5, 10.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(AttackProblem(fx.model, fx.x, s, t, fx.aux, 0.0, 5, 10.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(AttackProblem(fx.model, fx.x, s, t, fx.aux, 100.0, 0, 10.0),
                    std::invalid_argument);

    Dataset bad_aux = fx.aux;
    bad_aux.features.row(0) = fx.x.transpose();
    CHECK_THROWS_AS(AttackProblem(fx.model, fx.x, s, t, bad_aux, 100.0, 5, 10.0),
                    std::invalid_argument);
}

TEST_CASE("margin loss matches a straight-line scalar evaluation") {
    const Fixture fx = make_fixture(2);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 1.0, 5, 2.0);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::VectorXd bhat = random_relaxed(rng, pr.dim());
        CHECK(pr.loss_margin(bhat) == doctest::Approx(oracle_margin(pr, bhat)).epsilon(1e-12));
    }
}

TEST_CASE("margin loss hinge cases") {
    // head rows: s = (1,0), t = (0,1), third row duplicates t so that the
    // frozen m equals both changed logits at x = (1,1)
    Eigen::MatrixXd head(3, 2);
    head << 1.0, 0.0, 0.0, 1.0, 0.0, 1.0;
    // pad one weight so step = 1/7 and the values stay on the grid
    ModelSnapshot model = head_model(head, 4);
    Eigen::VectorXd x(2);
    x << 1.0, 1.0;
    Dataset aux;
    aux.features = Eigen::MatrixXd::Random(2, 2) * 0.1;
    aux.labels = {0, 1};

    const AttackProblem pr(model, x, 0, 1, aux, 1.0, 5, 1.0);
    // original bits: p_s == p_t == m, both hinges active by exactly delta
    CHECK(pr.loss_margin(pr.b) == doctest::Approx(2.0 * 1.0));

    // zero delta, target row kept at the max grid weight (p_t == m) and the
    // source row driven negative: both hinges land at zero
    const AttackProblem pr0(model, x, 0, 1, aux, 1.0, 5, 0.0);
    Eigen::VectorXd bhat = pr0.b;
    Eigen::VectorXd ws(2), wt(2);
    ws << -1.0, 0.0;
    wt << 0.0, 1.0;
    set_row_weights(pr0, bhat, 0, ws);
    set_row_weights(pr0, bhat, 1, wt);
    CHECK(pr0.loss_margin(bhat) == doctest::Approx(0.0));
}

TEST_CASE("stealth loss matches a hand-rolled softmax cross entropy") {
    const Fixture fx = make_fixture(4);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 2) % 3, fx.aux, 1.0, 5, 2.0);

    // unchanged bits: equals the original model's CE on the aux set
    CHECK(pr.loss_stealth(pr.b) == doctest::Approx(oracle_stealth(pr, pr.b)).epsilon(1e-12));

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd bhat = random_relaxed(rng, pr.dim());
        CHECK(pr.loss_stealth(bhat) == doctest::Approx(oracle_stealth(pr, bhat)).epsilon(1e-10));
    }

    // empty auxiliary set is rejected
    Dataset empty;
    empty.features.resize(0, 4);
    const AttackProblem no_aux(fx.model, fx.x, s, (s + 2) % 3, empty, 1.0, 5, 2.0);
    CHECK_THROWS_AS(no_aux.loss_stealth(no_aux.b), std::invalid_argument);
}

TEST_CASE("stealth contribution vanishes as the correct logit dominates") {
    Eigen::MatrixXd head(2, 2);
    head << 7.0, 0.0, 0.0, 7.0;
    ModelSnapshot model = head_model(head, 4);
    Eigen::VectorXd x(2);
    x << 1.0, -1.0;
    Dataset aux;
    aux.features.resize(1, 2);
    aux.features << 10.0, -10.0;  // huge margin for class 0
    aux.labels = {0};
    const AttackProblem pr(model, x, 0, 1, aux, 1.0, 5, 1.0);
    CHECK(pr.loss_stealth(pr.b) < 1e-6);
}

TEST_CASE("lagrangian gradient matches central finite differences") {
    Rng rng(6);
    int checked = 0;
    double worst = 0.0;
    while (checked < 20) {
        const Fixture fx = make_fixture(100 + static_cast<std::uint64_t>(checked), 3, 4, 4, 5);
        const int s = fx.model.predict(fx.x);
        const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 0.5, 5, 2.0);

        AdmmState st = init_admm(pr, SolverConfig{});
        st.bhat = random_relaxed(rng, pr.dim());
        st.u1 = random_relaxed(rng, pr.dim());
        st.u2 = random_relaxed(rng, pr.dim());
        st.u3 = rng.uniform();
        for (int i = 0; i < pr.dim(); ++i) {
            st.z1(i) = rng.normal() * 0.1;
            st.z2(i) = rng.normal() * 0.1;
        }
        st.z3 = rng.normal() * 0.1;
        st.rho1 = 0.3;
        st.rho2 = 0.2;
        st.rho3 = 0.1;

        // stay away from the hinge boundaries so the loss is differentiable
        const double ps = pr.relaxed_weights(st.bhat, 0).dot(pr.g_x);
        const double pt = pr.relaxed_weights(st.bhat, 1).dot(pr.g_x);
        if (std::abs(ps - (pr.m - pr.delta)) < 1e-3 || std::abs(pt - (pr.m + pr.delta)) < 1e-3)
            continue;

        const Eigen::VectorXd analytic = grad_lagrangian(st, pr);
        const Eigen::VectorXd numeric = fd_gradient(st, pr, 1e-5);
        const double rel = (analytic - numeric).cwiseAbs().maxCoeff() /
                           std::max(1.0, numeric.cwiseAbs().maxCoeff());
        worst = std::max(worst, rel);
        ++checked;
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient decomposes into objective plus the quadratic penalty terms") {
    const Fixture fx = make_fixture(7);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 2.0, 3, 1.0);

    Rng rng(8);
    AdmmState st = init_admm(pr, SolverConfig{});
    st.bhat = random_relaxed(rng, pr.dim());
    st.u1 = random_relaxed(rng, pr.dim());
    st.u2 = random_relaxed(rng, pr.dim());
    st.u3 = 0.7;
    for (int i = 0; i < pr.dim(); ++i) {
        st.z1(i) = rng.normal();
        st.z2(i) = rng.normal();
    }
    st.z3 = -0.4;
    st.rho1 = 1.5;
    st.rho2 = 0.5;
    st.rho3 = 0.25;

    // closed-form quadratic-penalty gradient, written out longhand
    Eigen::VectorXd penalty(pr.dim());
    double dist = 0.0;
    for (int i = 0; i < pr.dim(); ++i)
        dist += (st.bhat(i) - pr.b(i)) * (st.bhat(i) - pr.b(i));
    for (int i = 0; i < pr.dim(); ++i) {
        penalty(i) = st.z1(i) + st.z2(i) + st.rho1 * (st.bhat(i) - st.u1(i)) +
                     st.rho2 * (st.bhat(i) - st.u2(i)) +
                     2.0 * (st.bhat(i) - pr.b(i)) * (st.z3 + st.rho3 * (dist - pr.k + st.u3));
    }
    const Eigen::VectorXd got = grad_lagrangian(st, pr) - pr.objective_gradient(st.bhat);
    CHECK((got - penalty).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradient is zero at a feasible stationary point") {
    // model body collapses every input to zero features, so hinges and CE
    // see only zero logits and contribute nothing
    ModelSnapshot model;
    DenseLayer layer;
    layer.weights = Eigen::MatrixXd::Identity(3, 3);
    layer.bias = Eigen::VectorXd::Constant(3, -100.0);  // ReLU kills everything
    layer.activation = Activation::kReLU;
    model.body.push_back(layer);
    Eigen::MatrixXd head = Eigen::MatrixXd::Ones(2, 3);
    model.last = QuantizedLayer::from_weights(head, 4);

    Dataset aux;
    aux.features = Eigen::MatrixXd::Random(3, 3);
    aux.labels = {0, 1, 0};
    Eigen::VectorXd x = Eigen::VectorXd::Ones(3) * 0.5;
    const AttackProblem pr(model, x, 0, 1, aux, 5.0, 4, 1.0);

    AdmmState st = init_admm(pr, SolverConfig{});
    st.u3 = pr.k;  // makes the slack term vanish at bhat == b
    CHECK(grad_lagrangian(st, pr).cwiseAbs().maxCoeff() == 0.0);

    // zero gradient leaves the primal update inert
    AdmmState moved = st;
    update_primal(moved, pr, 5, 0.01);
    CHECK(moved.bhat == st.bhat);
}

TEST_CASE("auxiliary updates match their closed forms from a frozen pre-state") {
    const Fixture fx = make_fixture(9);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 1.0, 4, 1.0);

    Rng rng(10);
    AdmmState st = init_admm(pr, SolverConfig{});
    st.bhat = random_relaxed(rng, pr.dim());
    for (int i = 0; i < pr.dim(); ++i) {
        st.z1(i) = rng.normal();
        st.z2(i) = rng.normal();
    }
    st.z3 = 0.3;
    st.rho1 = 0.7;
    st.rho2 = 0.9;
    st.rho3 = 0.2;
    // poison the auxiliaries to prove they are recomputed, not reused
    st.u1.setConstant(42.0);
    st.u2.setConstant(-42.0);
    st.u3 = 42.0;

    const AdmmState pre = st;
    update_auxiliaries(st, pr);
    CHECK((st.u1 - project_box(pre.bhat + pre.z1 / pre.rho1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.u2 - project_sphere(pre.bhat + pre.z2 / pre.rho2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.u3 ==
          project_nonneg(-(pr.b - pre.bhat).squaredNorm() + pr.k - pre.z3 / pre.rho3));
    CHECK(st.bhat == pre.bhat);
    CHECK(st.z1 == pre.z1);
}

TEST_CASE("binary feasible point is a fixed point of the auxiliary block") {
    const Fixture fx = make_fixture(11);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 1.0, 4, 1.0);
    AdmmState st = init_admm(pr, SolverConfig{});
    update_auxiliaries(st, pr);
    CHECK((st.u1 - st.bhat).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.u2 - st.bhat).cwiseAbs().maxCoeff() < 1e-12);

    // constraint exactly tight: ||b - bhat||^2 == k with z3 = 0 gives u3 = 0
    AdmmState tight = init_admm(pr, SolverConfig{});
    for (int i = 0; i < pr.k; ++i) tight.bhat(i) = 1.0 - tight.bhat(i);
    update_auxiliaries(tight, pr);
    CHECK(tight.u3 == 0.0);
}

TEST_CASE("dual updates follow gradient ascent with the capped penalty schedule") {
    const Fixture fx = make_fixture(12);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 1.0, 4, 1.0);
    SolverConfig cfg;

    // feasible point: duals stay put
    AdmmState st = init_admm(pr, cfg);
    st.u3 = pr.k;  // bhat == b, so the constraint residual is zero
    update_duals(st, pr, cfg);
    CHECK(st.z1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.z2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.z3 == 0.0);
    CHECK(st.rho1 == doctest::Approx(cfg.rho1 * cfg.rho_growth));

    // hand-computed single step
    AdmmState hand = init_admm(pr, cfg);
    hand.rho1 = 0.5;
    hand.rho2 = 0.25;
    hand.rho3 = 0.125;
    hand.bhat(0) += 2.0;  // bhat - u1 = 2 e_0, ||b - bhat||^2 = 4
    hand.u3 = 1.0;
    update_duals(hand, pr, cfg);
    CHECK(hand.z1(0) == doctest::Approx(0.5 * 2.0));
    CHECK(hand.z1(1) == 0.0);
    CHECK(hand.z2(0) == doctest::Approx(0.25 * 2.0));
    CHECK(hand.z3 == doctest::Approx(0.125 * (4.0 - pr.k + 1.0)));

    // penalties saturate at their caps
    AdmmState capped = init_admm(pr, cfg);
    capped.rho1 = cfg.rho1_cap;
    capped.rho2 = cfg.rho2_cap;
    capped.rho3 = cfg.rho3_cap;
    update_duals(capped, pr, cfg);
    CHECK(capped.rho1 == cfg.rho1_cap);
    CHECK(capped.rho2 == cfg.rho2_cap);
    CHECK(capped.rho3 == cfg.rho3_cap);
}

TEST_CASE("primal descent does not increase the lagrangian on a smooth state") {
    // zero-feature body keeps the objective constant, leaving a convex
    // quadratic; each descent step must be non-increasing
    ModelSnapshot model;
    DenseLayer layer;
    layer.weights = Eigen::MatrixXd::Identity(2, 2);
    layer.bias = Eigen::VectorXd::Constant(2, -50.0);
    layer.activation = Activation::kReLU;
    model.body.push_back(layer);
    model.last = QuantizedLayer::from_weights(Eigen::MatrixXd::Ones(2, 2), 4);
    Dataset aux;
    aux.features = Eigen::MatrixXd::Random(2, 2);
    aux.labels = {0, 1};
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    const AttackProblem pr(model, x, 0, 1, aux, 1.0, 2, 1.0);

    Rng rng(13);
    AdmmState st = init_admm(pr, SolverConfig{});
    st.bhat = random_relaxed(rng, pr.dim());
    st.u1 = random_relaxed(rng, pr.dim());
    st.u2 = random_relaxed(rng, pr.dim());
    st.rho1 = 1.0;
    st.rho2 = 1.0;
    st.rho3 = 0.05;

    double prev = lagrangian_value(st, pr, st.bhat);
    for (int step = 0; step < 5; ++step) {
        update_primal(st, pr, 1, 0.01);
        const double now = lagrangian_value(st, pr, st.bhat);
        CHECK(now <= prev + 1e-12);
        prev = now;
    }
}

TEST_CASE("binarization rounds at one half with ties up") {
    Eigen::VectorXd v(5);
    v << 0.49999, 0.5, 0.50001, -1.0, 2.0;
    const std::vector<std::uint8_t> bits = binarize(v);
    CHECK(bits == std::vector<std::uint8_t>{0, 1, 1, 0, 1});
}

TEST_CASE("solve starts from the published initialization") {
    const Fixture fx = make_fixture(14);
    const int s = fx.model.predict(fx.x);
    const AttackProblem pr(fx.model, fx.x, s, (s + 1) % 3, fx.aux, 1.0, 4, 1.0);
    const AdmmState st = init_admm(pr, SolverConfig{});
    CHECK(st.bhat == pr.b);
    CHECK(st.u1 == pr.b);
    CHECK(st.u2 == pr.b);
    CHECK(st.u3 == 0.0);
    CHECK(st.z1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.z2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.z3 == 0.0);
}

TEST_CASE("an already-misclassified sample succeeds with zero flips") {
    Eigen::MatrixXd head(3, 2);
    head << 1.0, 0.0, 3.0, 0.5, -1.0, 0.2;
    ModelSnapshot model = head_model(head, 8);
    Eigen::VectorXd x(2);
    x << 2.0, 1.0;
    REQUIRE(model.predict(x) == 1);

    Dataset aux;
    aux.features.resize(4, 2);
    aux.features << 1.5, 0.2, 1.8, -0.1, 0.9, 0.4, 2.2, 0.3;
    aux.labels = {1, 1, 1, 1};

    // source is the ground-truth class 0; the model already answers 1. A
    // negative slack keeps both hinges quiet and a small lambda leaves the
    // bits where they are.
    const AttackProblem pr(model, x, 0, 1, aux, 1e-3, 5, -1.0);
    const AttackOutcome outcome = solve(pr, SolverConfig{});
    CHECK(outcome.success);
    CHECK(outcome.n_flip == 0);
    CHECK(outcome.converged);
}

TEST_CASE("solve flips only bits in the source and target rows within budget") {
    const Fixture fx = make_fixture(15, 3, 4, 4, 8);
    const int s = fx.model.predict(fx.x);
    const int t = (s + 1) % 3;
    SolverConfig cfg;
    cfg.delta = 1.0;
    const AttackProblem pr(fx.model, fx.x, s, t, fx.aux, 0.1, 6, 1.0);
    const AttackOutcome outcome = solve(pr, cfg);
    for (const FlipCoord& f : outcome.flipped) {
        CHECK((f.cls == s || f.cls == t));
        CHECK(f.j >= 0);
        CHECK(f.j < pr.C);
        CHECK(f.p >= 0);
        CHECK(f.p < pr.Q);
    }
    CHECK(outcome.n_flip == static_cast<int>(outcome.flipped.size()));
    if (outcome.success) CHECK(outcome.n_flip <= pr.k);
    CHECK(outcome.iterations >= 1);
    CHECK(outcome.trace.size() == static_cast<std::size_t>(outcome.iterations));
    if (outcome.converged) {
        CHECK(outcome.trace.back().box_residual <= cfg.stop_tol);
        CHECK(outcome.trace.back().sphere_residual <= cfg.stop_tol);
    }
}

TEST_CASE("search stops on the first success and never exceeds the trial grid") {
    // easy instance: first (lambda0, k0) already succeeds
    Eigen::MatrixXd head(3, 2);
    head << 1.0, 0.0, 3.0, 0.5, -1.0, 0.2;
    ModelSnapshot model = head_model(head, 8);
    Eigen::VectorXd x(2);
    x << 2.0, 1.0;
    Dataset aux;
    aux.features.resize(2, 2);
    aux.features << 1.5, 0.2, 0.9, 0.4;
    aux.labels = {1, 1};
    const AttackProblem easy(model, x, 0, 1, aux, 100.0, 5, -1.0);
    SolverConfig cfg;
    cfg.delta = -1.0;
    const AttackOutcome first = search_lambda_k(easy, cfg);
    CHECK(first.success);
    CHECK(first.solve_calls == 1);
    CHECK(first.lambda_used == cfg.lambda0);
    CHECK(first.k_used == cfg.k0);

    // hopeless instance: a dead ReLU body zeroes every feature, so all
    // logits stay zero and the argmax can never leave class 0. Every trial
    // fails and the search returns a best-effort failure after 8x4 runs.
    ModelSnapshot dead;
    DenseLayer layer;
    layer.weights = Eigen::MatrixXd::Identity(2, 2);
    layer.bias = Eigen::VectorXd::Constant(2, -100.0);
    layer.activation = Activation::kReLU;
    dead.body.push_back(layer);
    dead.last = QuantizedLayer::from_weights(Eigen::MatrixXd::Ones(3, 2), 4);
    Dataset dead_aux;
    dead_aux.features = Eigen::MatrixXd::Random(3, 2);
    dead_aux.labels = {0, 1, 2};
    Eigen::VectorXd dx = Eigen::VectorXd::Ones(2);
    SolverConfig hard_cfg;
    hard_cfg.max_iter = 50;
    const AttackProblem hard(dead, dx, 0, 1, dead_aux, 1.0, 1, 1.0);
    const AttackOutcome failed = search_lambda_k(hard, hard_cfg);
    CHECK_FALSE(failed.success);
    CHECK(failed.solve_calls == hard_cfg.max_lambda_trials * hard_cfg.max_k_trials);
}
