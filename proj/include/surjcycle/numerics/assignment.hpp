#pragma once

#include <vector>

#include "surjcycle/numerics/dense.hpp"

namespace surjcycle {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method).
/// Returns col[i], the column assigned to row i.
std::vector<Index> min_cost_assignment(const DenseMatrix& cost);

}  // namespace surjcycle
