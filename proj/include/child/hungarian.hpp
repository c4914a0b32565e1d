#pragma once

#include <vector>

#include "child/common.hpp"

namespace child {

/// Maximum-weight assignment for a rows x cols weight matrix with rows <= cols.
/// Returns assignment[r] = column matched to row r. O(rows^2 * cols).
std::vector<int> max_weight_assignment(const Mat& weights);

/// Sum of weights(r, assignment[r]).
double assignment_value(const Mat& weights, const std::vector<int>& assignment);

}  // namespace child
