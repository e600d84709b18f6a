#pragma once

#include <cstdint>
#include <vector>

namespace armor {

// longest common subsequence length between two token sequences
int64_t lcs_length(const std::vector<int> & a, const std::vector<int> & b);

// rouge-l f-measure (beta = 1): precision lcs/|candidate|, recall lcs/|reference|.
// empty candidate scores 0; an empty reference is an error.
double rouge_l(const std::vector<int> & candidate, const std::vector<int> & reference);

// multiset token overlap f1: 2*overlap / (|a| + |b|); both empty -> 1, one empty -> 0
double token_f1(const std::vector<int> & a, const std::vector<int> & b);

// fraction of matching entries; sequences must be non-empty and equal length
double accuracy(const std::vector<int> & pred, const std::vector<int> & gold);

}  // namespace armor
