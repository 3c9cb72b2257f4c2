#include "kiteopt/diffkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace kiteopt::diff {

void SparsityPattern::canonicalize() {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return row[a] != row[b] ? row[a] < row[b] : col[a] < col[b];
  });
  std::vector<int> r;
  std::vector<int> c;
  r.reserve(order.size());
  c.reserve(order.size());
  for (std::size_t k : order) {
    if (!r.empty() && r.back() == row[k] && c.back() == col[k]) continue;
    r.push_back(row[k]);
    c.push_back(col[k]);
  }
  row = std::move(r);
  col = std::move(c);
}

SparsityPattern SparsityPattern::dense(int rows, int cols) {
  SparsityPattern p{rows, cols, {}, {}};
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) p.add(i, j);
  }
  return p;
}

SparsityPattern SparsityPattern::identity(int n) {
  SparsityPattern p{n, n, {}, {}};
  for (int i = 0; i < n; ++i) p.add(i, i);
  return p;
}

ColumnColoring color_columns(const SparsityPattern& pattern) {
  // Greedy distance-2 coloring of the column intersection graph, columns in
  // natural order. Deterministic for a given pattern.
  std::vector<std::vector<int>> rows_of_col(pattern.cols);
  std::vector<std::vector<int>> cols_of_row(pattern.rows);
  for (std::size_t k = 0; k < pattern.nnz(); ++k) {
    rows_of_col[pattern.col[k]].push_back(pattern.row[k]);
    cols_of_row[pattern.row[k]].push_back(pattern.col[k]);
  }
  ColumnColoring out;
  out.color.assign(pattern.cols, -1);
  std::vector<int> forbidden_stamp;
  for (int j = 0; j < pattern.cols; ++j) {
    for (int r : rows_of_col[j]) {
      for (int other : cols_of_row[r]) {
        const int c = out.color[other];
        if (c < 0) continue;
        if (c >= static_cast<int>(forbidden_stamp.size())) forbidden_stamp.resize(c + 1, -1);
        forbidden_stamp[c] = j;
      }
    }
    int c = 0;
    while (c < static_cast<int>(forbidden_stamp.size()) && forbidden_stamp[c] == j) ++c;
    out.color[j] = c;
    out.num_colors = std::max(out.num_colors, c + 1);
  }
  return out;
}

std::vector<double> jacobian(const VectorFunction& g, std::span<const double> z,
                             const SparsityPattern& pattern, const ColumnColoring& coloring,
                             const JacobianOptions& options, JacobianStats* stats) {
  const int n = g.num_inputs();
  const int m = g.num_outputs();
  if (static_cast<int>(z.size()) != n || pattern.cols != n || pattern.rows != m) {
    throw StructuralError("jacobian: pattern/function dimension mismatch");
  }
  std::vector<double> values(pattern.nnz(), 0.0);
  std::vector<SeedDual> zd(n);
  std::vector<SeedDual> out(m);

  // Rows touched per color, for recovery and optional pattern checks.
  std::vector<std::vector<int>> entries_of_color(coloring.num_colors);
  for (std::size_t k = 0; k < pattern.nnz(); ++k) {
    entries_of_color[coloring.color[pattern.col[k]]].push_back(static_cast<int>(k));
  }

  int passes = 0;
  for (int base = 0; base < coloring.num_colors; base += kSeedWidth) {
    for (int j = 0; j < n; ++j) {
      zd[j] = SeedDual(z[j]);
      const int slot = coloring.color[j] - base;
      if (slot >= 0 && slot < kSeedWidth) zd[j].tangent(slot) = 1.0;
    }
    g.evaluate(std::span<const SeedDual>(zd), std::span<SeedDual>(out));
    ++passes;
    const int top = std::min(kSeedWidth, coloring.num_colors - base);
    for (int slot = 0; slot < top; ++slot) {
      const auto& entries = entries_of_color[base + slot];
      for (int k : entries) values[k] = out[pattern.row[k]].tangent(slot);
      if (options.check_pattern) {
        std::vector<char> covered(m, 0);
        for (int k : entries) covered[pattern.row[k]] = 1;
        for (int i = 0; i < m; ++i) {
          if (!covered[i] && std::fabs(out[i].tangent(slot)) > options.pattern_tolerance) {
            throw StructuralError("jacobian: nonzero derivative outside sparsity pattern in row " +
                                  std::to_string(i) + " (color " + std::to_string(base + slot) + ")");
          }
        }
      }
    }
  }
  if (stats) {
    stats->seed_directions = coloring.num_colors;
    stats->forward_passes = passes;
  }
  return values;
}

std::vector<double> jacobian(const VectorFunction& g, std::span<const double> z,
                             const SparsityPattern& pattern, const JacobianOptions& options,
                             JacobianStats* stats) {
  return jacobian(g, z, pattern, color_columns(pattern), options, stats);
}

std::vector<double> gradient(const ScalarFunction& f, std::span<const double> z) {
  const int n = f.num_inputs();
  std::vector<double> grad(n, 0.0);
  std::vector<SeedDual> zd(n);
  for (int base = 0; base < n; base += kSeedWidth) {
    for (int j = 0; j < n; ++j) {
      zd[j] = SeedDual(z[j]);
      if (j >= base && j < base + kSeedWidth) zd[j].tangent(j - base) = 1.0;
    }
    const SeedDual y = f.evaluate(std::span<const SeedDual>(zd));
    for (int j = base; j < std::min(n, base + kSeedWidth); ++j) grad[j] = y.tangent(j - base);
  }
  return grad;
}

SparsityPattern detect_pattern(const VectorFunction& g, std::span<const double> z, double step,
                               double threshold) {
  const int n = g.num_inputs();
  const int m = g.num_outputs();
  std::vector<double> base(m);
  std::vector<double> moved(m);
  g.evaluate(z, base);
  std::vector<double> zp(z.begin(), z.end());
  SparsityPattern p{m, n, {}, {}};
  for (int j = 0; j < n; ++j) {
    const double saved = zp[j];
    zp[j] = saved + step;
    g.evaluate(zp, moved);
    zp[j] = saved;
    for (int i = 0; i < m; ++i) {
      if (std::fabs(moved[i] - base[i]) > threshold) p.add(i, j);
    }
  }
  p.canonicalize();
  return p;
}

std::vector<std::vector<double>> finite_difference_jacobian(const VectorFunction& g,
                                                            std::span<const double> z, double step) {
  const int n = g.num_inputs();
  const int m = g.num_outputs();
  std::vector<std::vector<double>> jac(m, std::vector<double>(n, 0.0));
  std::vector<double> zp(z.begin(), z.end());
  std::vector<double> fp(m);
  std::vector<double> fm(m);
  for (int j = 0; j < n; ++j) {
    const double saved = zp[j];
    zp[j] = saved + step;
    g.evaluate(zp, fp);
    zp[j] = saved - step;
    g.evaluate(zp, fm);
    zp[j] = saved;
    for (int i = 0; i < m; ++i) jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
  }
  return jac;
}

}  // namespace kiteopt::diff
