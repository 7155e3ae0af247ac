#pragma once

#include "cdsclear/netcore.hpp"
#include "cdsclear/rational.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdsclear::linfeas {

using VarId = std::string;

enum class Rel { le, ge, eq };

struct Constraint {
  std::map<VarId, Rat> coeffs;
  Rel rel = Rel::le;
  Rat rhs;
};

struct LinearSystem {
  std::vector<VarId> variables;
  std::vector<Constraint> constraints;
};

using Point = std::map<VarId, Rat>;

/// Exact satisfaction check, independent of the solver path.
inline bool satisfies(const LinearSystem& sys, const Point& p) {
  for (const auto& c : sys.constraints) {
    Rat lhs = 0;
    for (const auto& [v, coef] : c.coeffs) {
      auto it = p.find(v);
      if (it == p.end()) return false;
      lhs += coef * it->second;
    }
    switch (c.rel) {
      case Rel::le:
        if (!(lhs <= c.rhs)) return false;
        break;
      case Rel::ge:
        if (!(lhs >= c.rhs)) return false;
        break;
      case Rel::eq:
        if (!(lhs == c.rhs)) return false;
        break;
    }
  }
  return true;
}

/// Find a point satisfying every constraint exactly, or report infeasibility.
/// Phase-1 simplex over exact rationals: free variables are split into
/// positive and negative parts, rows get slack variables, artificials carry
/// the phase-1 objective, Bland's rule prevents cycling. Infeasible is
/// returned only when the phase-1 optimum is strictly positive.
inline std::optional<Point> feasible_point(const LinearSystem& sys) {
  const std::size_t nvars = sys.variables.size();
  std::map<VarId, std::size_t> col_of;
  for (std::size_t j = 0; j < nvars; ++j) {
    if (col_of.contains(sys.variables[j]))
      throw PreconditionError("DuplicateVariable", "duplicate variable: " + sys.variables[j]);
    col_of[sys.variables[j]] = j;
  }

  const std::size_t m = sys.constraints.size();
  // dense rows over the split columns u_0..u_{n-1}, w_0..w_{n-1}
  std::vector<std::vector<Rat>> row(m, std::vector<Rat>(2 * nvars, Rat(0)));
  std::vector<Rat> rhs(m);
  std::vector<Rel> rel(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& c = sys.constraints[i];
    for (const auto& [v, coef] : c.coeffs) {
      auto it = col_of.find(v);
      if (it == col_of.end())
        throw PreconditionError("UndeclaredVariable", "constraint uses undeclared variable: " + v);
      row[i][it->second] += coef;
      row[i][nvars + it->second] -= coef;
    }
    rhs[i] = c.rhs;
    rel[i] = c.rel;
    if (rel[i] == Rel::ge) {  // normalize to <=
      for (auto& x : row[i]) x = -x;
      rhs[i] = -rhs[i];
      rel[i] = Rel::le;
    }
  }

  // equality form: append slack columns for <= rows, then flip rows to rhs >= 0
  std::size_t ncols = 2 * nvars;
  std::vector<std::size_t> slack_col(m, SIZE_MAX);
  for (std::size_t i = 0; i < m; ++i)
    if (rel[i] == Rel::le) slack_col[i] = ncols++;
  for (std::size_t i = 0; i < m; ++i) {
    row[i].resize(ncols, Rat(0));
    if (slack_col[i] != SIZE_MAX) row[i][slack_col[i]] = 1;
    if (rhs[i] < 0) {
      for (auto& x : row[i]) x = -x;
      rhs[i] = -rhs[i];
    }
  }

  // starting basis: slack where its coefficient survived as +1, else artificial
  std::vector<std::size_t> basis(m);
  std::vector<bool> artificial_col;  // per column
  artificial_col.assign(ncols, false);
  std::size_t nart = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (slack_col[i] != SIZE_MAX && row[i][slack_col[i]] == 1) {
      basis[i] = slack_col[i];
    } else {
      std::size_t a = ncols++;
      for (auto& r : row) r.resize(ncols, Rat(0));
      artificial_col.resize(ncols, false);
      artificial_col[a] = true;
      row[i][a] = 1;
      basis[i] = a;
      ++nart;
    }
  }

  // phase-1 objective row: z_j - c_j with c = 1 on artificials
  std::vector<Rat> obj(ncols, Rat(0));
  Rat obj_val = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!artificial_col[basis[i]]) continue;
    for (std::size_t j = 0; j < ncols; ++j) obj[j] += row[i][j];
    obj_val += rhs[i];
  }
  for (std::size_t j = 0; j < ncols; ++j)
    if (artificial_col[j]) obj[j] -= 1;

  if (nart > 0) {
    while (true) {
      // Bland: entering = lowest column with positive reduced row entry
      std::size_t enter = SIZE_MAX;
      for (std::size_t j = 0; j < ncols; ++j)
        if (obj[j] > 0) {
          enter = j;
          break;
        }
      if (enter == SIZE_MAX) break;

      std::size_t leave = SIZE_MAX;
      Rat best;
      for (std::size_t i = 0; i < m; ++i) {
        if (row[i][enter] <= 0) continue;
        Rat ratio = rhs[i] / row[i][enter];
        if (leave == SIZE_MAX || ratio < best ||
            (ratio == best && basis[i] < basis[leave]))
          leave = i, best = ratio;
      }
      if (leave == SIZE_MAX)
        throw std::logic_error("phase-1 simplex unbounded");  // cannot happen: objective >= 0

      // pivot
      Rat piv = row[leave][enter];
      for (auto& x : row[leave]) x /= piv;
      rhs[leave] /= piv;
      for (std::size_t i = 0; i < m; ++i) {
        if (i == leave || row[i][enter] == 0) continue;
        Rat f = row[i][enter];
        for (std::size_t j = 0; j < ncols; ++j) row[i][j] -= f * row[leave][j];
        rhs[i] -= f * rhs[leave];
      }
      if (obj[enter] != 0) {
        Rat f = obj[enter];
        for (std::size_t j = 0; j < ncols; ++j) obj[j] -= f * row[leave][j];
        obj_val -= f * rhs[leave];
      }
      basis[leave] = enter;
    }
    if (obj_val > 0) return std::nullopt;  // certified infeasible
  }

  std::vector<Rat> value(ncols, Rat(0));
  for (std::size_t i = 0; i < m; ++i) value[basis[i]] = rhs[i];
  Point p;
  for (std::size_t j = 0; j < nvars; ++j)
    p[sys.variables[j]] = value[j] - value[nvars + j];
  if (!satisfies(sys, p)) throw std::logic_error("simplex produced a non-feasible point");
  return p;
}

}  // namespace cdsclear::linfeas
