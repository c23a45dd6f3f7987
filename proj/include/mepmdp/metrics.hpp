#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mepmdp/mdp.hpp"

namespace mep {

struct MetricRow {
    int run = 0;
    int episode = 0;
    double beta = 0.0;
    double delta_v = std::numeric_limits<double>::quiet_NaN();
    double policy_entropy = std::numeric_limits<double>::quiet_NaN();
    long steps = 0;
};

using MetricSeries = std::vector<MetricRow>;

// Per-episode evaluation supplied by the harness; learners fill NaN when no
// hook is given (they cannot see the model themselves).
struct EpisodeEval {
    double delta_v = std::numeric_limits<double>::quiet_NaN();
    double policy_entropy = std::numeric_limits<double>::quiet_NaN();
};
using EvalHook =
    std::function<EpisodeEval(int episode, double beta, const QTable& q,
                              const StochasticPolicy& policy)>;

// sum_s |v(s) - j_star(s)| / j_star(s) over non-terminal states; states with
// j_star = 0 are skipped (count reported through excluded if non-null).
double delta_v_ratio(const ValueTable& v, const ValueTable& j_star,
                     const std::vector<bool>& terminal, int* excluded = nullptr);

// Elementwise over a per-episode sequence of value tables.
std::vector<double> compute_delta_v(const std::vector<ValueTable>& per_episode,
                                    const ValueTable& j_star,
                                    const std::vector<bool>& terminal);

// Percentage of the episode budget needed for the error series to reach and
// stay within rel_tol of its terminal plateau (median of the last tenth).
// Returns 100 when the series never settles below the threshold.
double compute_epr(const std::vector<double>& series, double rel_tol = 0.05);

// CSV round-trip for metric series; doubles printed with max_digits10 so a
// rewrite is byte-identical.
void write_metrics_csv(const std::string& path, const MetricSeries& series);
MetricSeries read_metrics_csv(const std::string& path);
std::string metrics_csv_string(const MetricSeries& series);

} // namespace mep
