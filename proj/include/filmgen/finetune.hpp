#pragma once

#include <functional>
#include <string>
#include <vector>

#include "filmgen/structure.hpp"

namespace filmgen::finetune {

class FinetuneError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Objective = std::function<double(const Structure&)>;

/// Thickness refinement with materials and layer count frozen.
struct FinetuneProblem {
    Structure structure;
    double lower_nm = 15.0;
    double upper_nm = 200.0;
    Objective reward;  // maximized

    void validate() const;
    [[nodiscard]] Structure with_thicknesses(const std::vector<double>& x) const;
    [[nodiscard]] double evaluate(const std::vector<double>& x) const;
};

struct FinetuneOptions {
    std::size_t memory = 10;
    double gradient_tolerance = 1e-6;  // on the projected gradient, reward per nm
    std::size_t max_iterations = 500;
    double fd_step_nm = 0.1;
    double first_step_nm = 10.0;       // largest coordinate move of the first trial step
};

struct FinetuneResult {
    Structure structure;
    double reward_before = 0.0;
    double reward_after = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool improved = false;
    std::string stop_reason;
};

/// Central differences of the reward with step h (one-sided if x - h would not be positive).
std::vector<double> reward_gradient(const FinetuneProblem& problem, const std::vector<double>& x, double h = 0.1,
                                    std::size_t* evaluations = nullptr);

/// Bounded limited-memory quasi-Newton ascent on the reward. Never returns a
/// structure scoring below the input; falls back to the input when no
/// improvement is found.
FinetuneResult finetune(const FinetuneProblem& problem, const FinetuneOptions& options = {});

}  // namespace filmgen::finetune
