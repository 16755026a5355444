#pragma once

#include <algorithm>
#include <cmath>

#include "promptcal/errors.hpp"
#include "promptcal/types.hpp"

namespace promptcal {

/// Asymmetric calibration reward parameters. epsilon floors the log for valid
/// predictions; epsilon_penalty prices an unparseable output strictly below
/// every valid one (ln(1e-12) < ln(1e-10) - 1).
struct RewardConfig {
    double epsilon = 1e-10;
    double epsilon_penalty = 1e-12;
    double incorrect_offset = 1.0;  // the extra penalty applied to wrong answers

    void validate() const {
        if (!(epsilon_penalty > 0.0 && epsilon_penalty < epsilon && epsilon < 1.0))
            throw ConfigError("reward: require 0 < epsilon_penalty < epsilon < 1");
        if (!(incorrect_offset >= 0.0)) throw ConfigError("reward: incorrect_offset must be >= 0");
    }
};

/// r = ln(min(1, max(p, eps)))                      if valid and correct
///     ln(min(1, max(1 - p, eps))) - offset         if valid and incorrect
///     ln(eps_penalty)                              if invalid
/// Natural log; finite for every input.
inline double compute_reward(const Prediction& prediction, int truth_index,
                             const RewardConfig& cfg = {}) {
    if (!prediction.is_valid()) return std::log(cfg.epsilon_penalty);
    const double p = prediction.as_valid().confidence;
    if (prediction.as_valid().answer_index == truth_index)
        return std::log(std::min(1.0, std::max(p, cfg.epsilon)));
    return std::log(std::min(1.0, std::max(1.0 - p, cfg.epsilon))) - cfg.incorrect_offset;
}

}  // namespace promptcal
