#include "metrics.hpp"

#include "common.hpp"

#include <algorithm>
#include <map>

namespace armor {

int64_t lcs_length(const std::vector<int> & a, const std::vector<int> & b) {
    const int64_t n = (int64_t) a.size();
    const int64_t m = (int64_t) b.size();
    if (n == 0 || m == 0) return 0;
    // two-row dp over the standard lcs recurrence
    std::vector<int64_t> prev((size_t) m + 1, 0), cur((size_t) m + 1, 0);
    for (int64_t i = 1; i <= n; ++i) {
        for (int64_t j = 1; j <= m; ++j) {
            if (a[(size_t) (i - 1)] == b[(size_t) (j - 1)]) {
                cur[(size_t) j] = prev[(size_t) (j - 1)] + 1;
            } else {
                cur[(size_t) j] = std::max(prev[(size_t) j], cur[(size_t) (j - 1)]);
            }
        }
        std::swap(prev, cur);
    }
    return prev[(size_t) m];
}

double rouge_l(const std::vector<int> & candidate, const std::vector<int> & reference) {
    if (reference.empty()) fail(errc::invalid_argument, "rouge_l: empty reference");
    if (candidate.empty()) return 0.0;
    const double lcs = (double) lcs_length(candidate, reference);
    if (lcs == 0.0) return 0.0;
    const double p = lcs / (double) candidate.size();
    const double r = lcs / (double) reference.size();
    return 2.0 * p * r / (p + r);
}

double token_f1(const std::vector<int> & a, const std::vector<int> & b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    std::map<int, int64_t> ca;
    for (int t : a) ca[t] += 1;
    int64_t overlap = 0;
    for (int t : b) {
        auto it = ca.find(t);
        if (it != ca.end() && it->second > 0) {
            it->second -= 1;
            overlap += 1;
        }
    }
    return 2.0 * (double) overlap / (double) (a.size() + b.size());
}

double accuracy(const std::vector<int> & pred, const std::vector<int> & gold) {
    if (pred.empty() || pred.size() != gold.size()) {
        fail(errc::invalid_argument, "accuracy: sequences must be non-empty and equal length");
    }
    int64_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == gold[i]) hit += 1;
    }
    return (double) hit / (double) pred.size();
}

}  // namespace armor
