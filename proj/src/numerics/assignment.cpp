#include "surjcycle/numerics/assignment.hpp"

#include <limits>

namespace surjcycle {

std::vector<Index> min_cost_assignment(const DenseMatrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("min_cost_assignment: cost is " + shape_string(cost.rows(), cost.cols()));
  if (!cost.allFinite()) throw ContractError("min_cost_assignment: non-finite cost");
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // potentials and matching are 1-based; column 0 is a sentinel
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = match[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> col(n);
  for (Index j = 1; j <= n; ++j) col[match[j] - 1] = j - 1;
  return col;
}

}  // namespace surjcycle
