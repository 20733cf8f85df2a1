#include "talbf/baselines.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace talbf {

namespace {

// Per-flip logit change for the source (block 0) and target (block 1) row.
struct FlipDelta {
    int row_block;
    double dlogit;
};

int predict_with(const AttackProblem& problem, const Eigen::VectorXd& base_logits, double ds,
                 double dt) {
    Eigen::VectorXd z = base_logits;
    z(problem.s) += ds;
    z(problem.t) += dt;
    return argmax_lowest(z);
}

}  // namespace

std::optional<FlipSet> exhaustive_oracle(const AttackProblem& problem, int max_flips,
                                         double subset_budget) {
    if (max_flips < 0) throw std::invalid_argument("max_flips must be nonnegative");
    const int n_bits = problem.dim();

    double subsets = 1.0;  // the empty set
    {
        double binom = 1.0;
        for (int m = 1; m <= max_flips; ++m) {
            binom = binom * (n_bits - m + 1) / m;
            subsets += binom;
        }
    }
    if (subsets > subset_budget)
        throw std::runtime_error("oracle refuses: " + std::to_string(subsets) +
                                 " candidate subsets exceed the budget of " +
                                 std::to_string(subset_budget));

    const Eigen::VectorXd base = problem.model->logits(problem.x);
    if (argmax_lowest(base) == problem.t) return FlipSet{};  // already target-classified

    // candidate coordinates in lexicographic (row block, j, p) order
    std::vector<FlipCoord> coords;
    std::vector<FlipDelta> deltas;
    coords.reserve(static_cast<std::size_t>(n_bits));
    deltas.reserve(static_cast<std::size_t>(n_bits));
    for (int r = 0; r < 2; ++r) {
        const int cls = (r == 0) ? problem.s : problem.t;
        for (int j = 0; j < problem.C; ++j)
            for (int p = 0; p < problem.Q; ++p) {
                const double sign = problem.b(problem.flat_index(r, j, p)) > 0.5 ? -1.0 : 1.0;
                coords.push_back(FlipCoord{cls, j, p});
                deltas.push_back(FlipDelta{r, sign * problem.hcoef(p) * problem.g_x(j)});
            }
    }

    for (int size = 1; size <= std::min(max_flips, n_bits); ++size) {
        std::vector<int> idx(static_cast<std::size_t>(size));
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            double ds = 0.0, dt = 0.0;
            for (int i : idx) {
                if (deltas[static_cast<std::size_t>(i)].row_block == 0)
                    ds += deltas[static_cast<std::size_t>(i)].dlogit;
                else
                    dt += deltas[static_cast<std::size_t>(i)].dlogit;
            }
            if (predict_with(problem, base, ds, dt) == problem.t) {
                FlipSet found;
                for (int i : idx) found.flips.push_back(coords[static_cast<std::size_t>(i)]);
                return found;
            }
            // next combination in lexicographic order
            int pos = size - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n_bits - size + pos) --pos;
            if (pos < 0) break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int q = pos + 1; q < size; ++q)
                idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
        }
    }
    return std::nullopt;
}

BaselineResult greedy_attack(const AttackProblem& problem, int budget) {
    if (budget < 1) throw std::invalid_argument("greedy budget must be >= 1");

    Eigen::VectorXd bhat = problem.b;
    std::vector<std::uint8_t> flipped(static_cast<std::size_t>(problem.dim()), 0);
    BaselineResult result;

    auto current_prediction = [&]() {
        Eigen::VectorXd z = problem.model->logits(problem.x);
        z(problem.s) = problem.relaxed_weights(bhat, 0).dot(problem.g_x);
        z(problem.t) = problem.relaxed_weights(bhat, 1).dot(problem.g_x);
        return argmax_lowest(z);
    };

    double current_loss = problem.objective(bhat);
    for (int round = 0; round < budget; ++round) {
        if (current_prediction() == problem.t) {
            result.success = true;
            break;
        }
        int best = -1;
        double best_loss = current_loss;
        for (int i = 0; i < problem.dim(); ++i) {
            bhat(i) = 1.0 - bhat(i);
            const double loss = problem.objective(bhat);
            bhat(i) = 1.0 - bhat(i);
            if (loss < best_loss) {
                best_loss = loss;
                best = i;
            }
        }
        if (best < 0) break;  // no strictly improving flip left
        bhat(best) = 1.0 - bhat(best);
        flipped[static_cast<std::size_t>(best)] ^= 1;
        current_loss = best_loss;
    }
    if (!result.success && current_prediction() == problem.t) result.success = true;

    for (int r = 0; r < 2; ++r) {
        const int cls = (r == 0) ? problem.s : problem.t;
        for (int j = 0; j < problem.C; ++j)
            for (int p = 0; p < problem.Q; ++p)
                if (flipped[static_cast<std::size_t>(problem.flat_index(r, j, p))])
                    result.flips.flips.push_back(FlipCoord{cls, j, p});
    }
    return result;
}

BaselineResult finetune_last_layer(const AttackProblem& problem, int steps, double lr) {
    if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
    const QuantizedLayer& layer = problem.model->last;
    Eigen::VectorXd w_s = layer.row_weights(problem.s);
    Eigen::VectorXd w_t = layer.row_weights(problem.t);

    Eigen::VectorXd grad_ws, grad_wt;
    for (int step = 0; step < steps; ++step) {
        if (problem.margin_from_weights(w_s, w_t) == 0.0) break;
        problem.weight_gradient(w_s, w_t, grad_ws, grad_wt);
        if (!grad_ws.allFinite() || !grad_wt.allFinite())
            throw std::runtime_error("fine-tuning diverged at step " + std::to_string(step));
        w_s -= lr * grad_ws;
        w_t -= lr * grad_wt;
    }
    const double loss =
        problem.margin_from_weights(w_s, w_t) + problem.lambda * problem.stealth_from_weights(w_s, w_t);
    if (!std::isfinite(loss)) throw std::runtime_error("fine-tuning diverged: non-finite loss");

    BaselineResult result;
    for (int r = 0; r < 2; ++r) {
        const int cls = (r == 0) ? problem.s : problem.t;
        const Eigen::VectorXd& w = (r == 0) ? w_s : w_t;
        for (int j = 0; j < problem.C; ++j) {
            const BitWord requantized =
                encode_weight(w(j), layer.step_size(), layer.bit_width());
            for (int p = 0; p < problem.Q; ++p)
                if (requantized[static_cast<std::size_t>(p)] != layer.bit(cls, j, p))
                    result.flips.flips.push_back(FlipCoord{cls, j, p});
        }
    }
    const ModelSnapshot attacked = apply_flips(*problem.model, result.flips.flips);
    result.success = attacked.predict(problem.x) == problem.t;
    return result;
}

}  // namespace talbf
