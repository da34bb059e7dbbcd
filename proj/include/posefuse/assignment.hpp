// Minimum-cost linear assignment on rectangular matrices (Jonker-Volgenant
// style shortest augmenting paths), sized for evaluation-scale instances.
// Among cost-optimal assignments, the returned pairing is the one whose
// row-sorted (row, column) sequence is lexicographically smallest.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "posefuse/error.hpp"

namespace posefuse {

struct Assignment {
    std::vector<std::pair<int, int>> pairs;  // sorted by row
    double total_cost = 0.0;
};

namespace detail {

// Optimal total for a square matrix; O(n^3) augmenting-path dual updates.
inline double assignment_optimum_square(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = match[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (match[static_cast<std::size_t>(j)] != 0)
            total += cost[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)][static_cast<std::size_t>(j - 1)];
    return total;
}

// Optimum for the rectangular subproblem on (rows x cols) index subsets.
// Zero-padding to square is exact: dummy pairs cost nothing and exactly
// min(|rows|,|cols|) real pairs appear in any perfect matching.
inline double assignment_optimum(const std::vector<std::vector<double>>& cost, const std::vector<int>& rows,
                                 const std::vector<int>& cols) {
    const std::size_t n = std::max(rows.size(), cols.size());
    if (n == 0) return 0.0;
    std::vector<std::vector<double>> square(n, std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            square[r][c] = cost[static_cast<std::size_t>(rows[r])][static_cast<std::size_t>(cols[c])];
    return assignment_optimum_square(square);
}

}  // namespace detail

// Minimum-total-cost one-to-one assignment covering min(rows, cols) pairs.
// Ties between optimal assignments are broken toward the lexicographically
// smallest row-then-column sequence, resolved by fixing pairs in order and
// re-solving the remaining subproblem.
inline Assignment hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size();
    const std::size_t cols = rows == 0 ? 0 : cost[0].size();
    if (rows > 64 || cols > 64)
        throw Error(Errc::invalid_argument,
                    "cost matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " exceeds the 64x64 bound");
    for (std::size_t r = 0; r < rows; ++r) {
        if (cost[r].size() != cols)
            throw Error(Errc::invalid_argument, "cost matrix row " + std::to_string(r) + " has ragged width");
        for (std::size_t c = 0; c < cols; ++c)
            if (!std::isfinite(cost[r][c]))
                throw Error(Errc::non_finite_cost,
                            "cost[" + std::to_string(r) + "][" + std::to_string(c) + "] is not finite");
    }

    Assignment result;
    if (rows == 0 || cols == 0) return result;

    std::vector<int> free_rows(rows), free_cols(cols);
    for (std::size_t r = 0; r < rows; ++r) free_rows[r] = static_cast<int>(r);
    for (std::size_t c = 0; c < cols; ++c) free_cols[c] = static_cast<int>(c);

    double remaining_opt = detail::assignment_optimum(cost, free_rows, free_cols);

    while (!free_rows.empty() && !free_cols.empty()) {
        const int r = free_rows.front();
        std::vector<int> rest_rows(free_rows.begin() + 1, free_rows.end());
        const double tol = 1e-9 * (1.0 + std::abs(remaining_opt));

        bool fixed = false;
        for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
            const int c = free_cols[ci];
            std::vector<int> rest_cols = free_cols;
            rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
            const double sub = detail::assignment_optimum(cost, rest_rows, rest_cols);
            if (cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] + sub <= remaining_opt + tol) {
                result.pairs.emplace_back(r, c);
                remaining_opt = sub;
                free_rows = std::move(rest_rows);
                free_cols = std::move(rest_cols);
                fixed = true;
                break;
            }
        }
        if (!fixed) {
            // Every optimal assignment skips this row; only possible with
            // surplus rows.
            free_rows.erase(free_rows.begin());
        }
    }
    result.total_cost = 0.0;
    for (const auto& [r, c] : result.pairs)
        result.total_cost += cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return result;
}

}  // namespace posefuse
