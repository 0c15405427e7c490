#pragma once

#include <string>
#include <vector>

namespace dallmi {

struct EvalReport {
    std::vector<double> per_label_ap;        // NaN for undefined labels
    double map = 0.0;                        // mean over defined labels
    std::vector<std::size_t> undefined_labels;

    std::string to_json() const;
    std::string to_table() const;
};

// Un-interpolated AP: sort by score descending (ties by ascending sample id),
// mean of precision at each positive's rank. Returns NaN when truths has no
// positive.
double average_precision(const std::vector<double>& scores, const std::vector<int>& truths);

// Column-wise AP over N x L score/truth matrices.
EvalReport mean_average_precision(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<int>>& truths);

}  // namespace dallmi
