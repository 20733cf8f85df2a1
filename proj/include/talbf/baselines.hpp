#pragma once

// Reference attacks sharing TA-LBF's attack surface (bits of the source and
// target rows only): an exact enumeration oracle for tiny instances, a
// greedy single-bit descent, and last-layer fine-tuning with requantization.

#include <optional>
#include <vector>

#include "talbf/attack.hpp"

namespace talbf {

struct FlipSet {
    std::vector<FlipCoord> flips;  // no duplicate coordinates
};

struct BaselineResult {
    FlipSet flips;
    bool success = false;
};

// Smallest flip set within rows s,t whose application makes the model
// predict the target class, or nullopt if none exists within max_flips.
// Ties break lexicographically on (row block, input index, bit position)
// with the source row first. Throws std::runtime_error when the number of
// candidate subsets exceeds subset_budget.
std::optional<FlipSet> exhaustive_oracle(const AttackProblem& problem, int max_flips,
                                         double subset_budget = 1e7);

// Repeatedly flips the single bit giving the largest decrease of
// L1 + lambda*L2, until the prediction reaches the target class, the budget
// is exhausted, or no flip strictly decreases the loss.
BaselineResult greedy_attack(const AttackProblem& problem, int budget);

// Gradient descent on L1 + lambda*L2 over the float weights of rows s,t
// (early exit once the margin loss reaches zero), then requantization with
// the layer's stored step size. The flip set is whatever bits the
// requantized rows changed. Throws std::runtime_error on divergence.
BaselineResult finetune_last_layer(const AttackProblem& problem, int steps, double lr);

}  // namespace talbf
