#include "dallmi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dallmi {

double average_precision(const std::vector<double>& scores, const std::vector<int>& truths) {
    if (scores.size() != truths.size())
        throw std::invalid_argument("average_precision: size mismatch");
    std::size_t num_pos = 0;
    for (int t : truths) num_pos += t == 1 ? 1 : 0;
    if (num_pos == 0) return std::nan("");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;  // deterministic tie rule
    });

    double sum_prec = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        if (truths[order[rank]] == 1) {
            ++hits;
            sum_prec += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    return sum_prec / static_cast<double>(num_pos);
}

EvalReport mean_average_precision(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<int>>& truths) {
    if (scores.size() != truths.size() || scores.empty())
        throw std::invalid_argument("mean_average_precision: shape mismatch or empty");
    std::size_t L = scores[0].size();
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i].size() != L || truths[i].size() != L)
            throw std::invalid_argument("mean_average_precision: ragged row " +
                                        std::to_string(i));

    EvalReport rep;
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> col_s(scores.size());
        std::vector<int> col_t(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            col_s[i] = scores[i][l];
            col_t[i] = truths[i][l];
        }
        double ap = average_precision(col_s, col_t);
        rep.per_label_ap.push_back(ap);
        if (std::isnan(ap)) {
            rep.undefined_labels.push_back(l);
        } else {
            sum += ap;
            ++defined;
        }
    }
    if (defined == 0)
        throw std::invalid_argument("mean_average_precision: no label has test positives");
    rep.map = sum / static_cast<double>(defined);
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["map"] = map;
    j["per_label_ap"] = nlohmann::json::array();
    for (double ap : per_label_ap)
        j["per_label_ap"].push_back(std::isnan(ap) ? nlohmann::json(nullptr)
                                                   : nlohmann::json(ap));
    j["undefined_labels"] = undefined_labels;
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << "label  AP\n";
    for (std::size_t l = 0; l < per_label_ap.size(); ++l) {
        os << l << "      ";
        if (std::isnan(per_label_ap[l]))
            os << "undefined (no test positives)";
        else
            os << per_label_ap[l];
        os << "\n";
    }
    os << "mAP    " << map << "\n";
    return os.str();
}

}  // namespace dallmi
