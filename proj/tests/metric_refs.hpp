#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

// Independent reference implementations used as oracles: brute-force pair
// counting for AUROC and a from-scratch threshold sweep for average
// precision. Both are deliberately naive.
namespace metric_refs {

inline double brute_auroc(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
    double wins = 0.0;
    size_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    for (int l : labels) neg += (l != 1);
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline double sweep_ap(const std::vector<double>& scores,
                       const std::vector<int>& labels) {
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];
    });
    size_t total_pos = 0;
    for (int l : labels) total_pos += (l == 1);
    double ap = 0.0, prev_recall = 0.0;
    size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]] == 1)
                ++tp;
            else
                ++fp;
            ++j;
        }
        double recall = static_cast<double>(tp) / total_pos;
        double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * prec;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

}  // namespace metric_refs
