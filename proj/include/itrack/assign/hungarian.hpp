#pragma once

#include <vector>

#include "itrack/core/types.hpp"

namespace itrack::assign {

/// Maximum-score perfect assignment of a square matrix. Returns the column
/// chosen for each row. O(n^3) shortest-augmenting-path method.
std::vector<int> solve_assignment(const Mat& score);

}  // namespace itrack::assign
