#include "child/hungarian.hpp"

#include <limits>

namespace child {

// Shortest augmenting path formulation (Jonker-Volgenant style potentials)
// on cost = max(weights) - weights.
std::vector<int> max_weight_assignment(const Mat& weights) {
  const int n = static_cast<int>(weights.rows());
  const int m = static_cast<int>(weights.cols());
  if (n == 0) return {};
  if (n > m) throw std::invalid_argument("max_weight_assignment requires rows <= cols");
  if (!weights.allFinite()) throw NumericalError("assignment weights must be finite");
  const double top = weights.maxCoeff();
  auto cost = [&](int i, int j) { return top - weights(i - 1, j - 1); };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  return assignment;
}

double assignment_value(const Mat& weights, const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r) total += weights(static_cast<Eigen::Index>(r), assignment[r]);
  return total;
}

}  // namespace child
