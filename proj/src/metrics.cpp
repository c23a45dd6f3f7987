#include "mepmdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mep {

double delta_v_ratio(const ValueTable& v, const ValueTable& j_star,
                     const std::vector<bool>& terminal, int* excluded) {
    double acc = 0.0;
    int skipped = 0;
    for (int s = 0; s < j_star.size(); ++s) {
        if (!terminal.empty() && terminal[s]) continue;
        if (j_star(s) == 0.0) {
            ++skipped;
            continue;
        }
        acc += std::abs(v(s) - j_star(s)) / std::abs(j_star(s));
    }
    if (excluded) *excluded = skipped;
    return acc;
}

std::vector<double> compute_delta_v(const std::vector<ValueTable>& per_episode,
                                    const ValueTable& j_star,
                                    const std::vector<bool>& terminal) {
    std::vector<double> out;
    out.reserve(per_episode.size());
    for (const auto& v : per_episode) out.push_back(delta_v_ratio(v, j_star, terminal));
    return out;
}

double compute_epr(const std::vector<double>& series, double rel_tol) {
    if (series.empty()) throw std::invalid_argument("compute_epr: empty series");
    const int n = static_cast<int>(series.size());

    // plateau: median of the last tenth of the series
    const int tail = std::max(1, n / 10);
    std::vector<double> last(series.end() - tail, series.end());
    std::nth_element(last.begin(), last.begin() + tail / 2, last.end());
    const double plateau = last[tail / 2];
    const double threshold = plateau * (1.0 + rel_tol);

    // first episode from which the series stays at or below the threshold
    int first = -1;
    for (int i = n - 1; i >= 0; --i) {
        if (series[i] > threshold) break;
        first = i;
    }
    if (first < 0) return 100.0;
    return 100.0 * (first + 1) / n;
}

namespace {

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

std::string metrics_csv_string(const MetricSeries& series) {
    std::ostringstream os;
    os << "run,episode,beta,delta_v,policy_entropy,steps\n";
    for (const MetricRow& r : series) {
        os << r.run << ',' << r.episode << ',' << fmt_double(r.beta) << ','
           << fmt_double(r.delta_v) << ',' << fmt_double(r.policy_entropy) << ','
           << r.steps << '\n';
    }
    return os.str();
}

void write_metrics_csv(const std::string& path, const MetricSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << metrics_csv_string(series);
}

MetricSeries read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
    MetricSeries series;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        MetricRow r;
        std::getline(ls, field, ',');
        r.run = std::stoi(field);
        std::getline(ls, field, ',');
        r.episode = std::stoi(field);
        std::getline(ls, field, ',');
        r.beta = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.delta_v = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.policy_entropy = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.steps = std::stol(field);
        series.push_back(r);
    }
    return series;
}

} // namespace mep
