#pragma once

#include "cdsclear/netcore.hpp"
#include "cdsclear/rational.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace cdsclear {

struct SolveResult {
  RecoveryVector rates;
  std::uint64_t iterations = 0;
  std::string method;
  Rat certified_eps;  // is_eps_solution(sys, rates, certified_eps) holds on return
};

/// Grid search specification. Banks listed in free_banks are the searched
/// dimensions; banks in `pinned` are held at fixed exogenous rates and are
/// excluded from the solution check (they play the role of gadget input
/// banks). Banks that write no contracts are pinned to 1 automatically; every
/// remaining bank is forward-evaluated from the others, which requires the
/// residual dependency structure to be acyclic.
struct GridSpec {
  Rat step;
  std::vector<BankIndex> free_banks;
  std::map<BankIndex, Rat> pinned;
  std::size_t dimension_cap = 6;
};

namespace detail {

// -- double-precision mirror of a system, for solver hot loops ---------------

struct FloatSystem {
  std::size_t n = 0;
  double alpha = 1, beta = 1;
  bool cf = false;
  std::vector<double> e;
  struct FC {
    std::uint32_t writer, holder;
    std::int32_t ref;  // -1 for debt
    double notional;
  };
  std::vector<FC> cs;

  static FloatSystem from(const FinancialSystem& sys) {
    FloatSystem f;
    f.n = sys.size();
    f.alpha = to_double(sys.alpha);
    f.beta = to_double(sys.beta);
    f.cf = sys.counterparty_free;
    f.e.reserve(f.n);
    for (const auto& x : sys.external_assets) f.e.push_back(to_double(x));
    f.cs.reserve(sys.contracts.size());
    for (const auto& c : sys.contracts)
      f.cs.push_back({c.writer, c.holder, c.reference ? static_cast<std::int32_t>(*c.reference) : -1,
                      to_double(c.notional)});
    return f;
  }

  void exposure(const double* r, double* liab, double* gross, double* post) const {
    for (std::size_t i = 0; i < n; ++i) {
      liab[i] = 0;
      gross[i] = 0;
    }
    for (const auto& c : cs) {
      double lam = c.ref < 0 ? c.notional : c.notional * (1.0 - r[c.ref]);
      liab[c.writer] += lam;
      gross[c.holder] += cf ? lam : r[c.writer] * lam;
    }
    for (std::size_t i = 0; i < n; ++i) {
      post[i] = alpha * e[i] + beta * gross[i];
      gross[i] += e[i];
    }
  }

  static double update_one(double liab, double gross, double post) {
    if (liab == 0 || gross >= liab) return 1.0;
    double v = post / liab;
    return v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
  }
};

inline std::uint64_t ceil_to_u64(const Rat& q) {
  BigInt num = numerator(q), den = denominator(q);
  BigInt c = num / den;
  if (c * den < num) c += 1;
  if (c > BigInt(std::numeric_limits<std::uint64_t>::max()))
    return std::numeric_limits<std::uint64_t>::max();
  return c.convert_to<std::uint64_t>();
}

inline RecoveryVector exact_from_doubles(const std::vector<double>& r) {
  RecoveryVector out;
  out.rates.reserve(r.size());
  for (double x : r) out.rates.emplace_back(x);  // binary fractions convert exactly
  return out;
}

/// Exact certification shared by the iterative solvers: certify at eps, and
/// on float drift double eps once and retry.
inline Rat certify(const FinancialSystem& sys, const RecoveryVector& r, const Rat& eps) {
  if (is_eps_solution(sys, r, eps).verdict) return eps;
  Rat doubled = eps * 2;
  if (is_eps_solution(sys, r, doubled).verdict) return doubled;
  throw std::logic_error("iteration result failed exact verification at eps and 2*eps");
}

inline unsigned solver_threads() {
  if (const char* env = std::getenv("CDSCLEAR_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Monotone iteration (no naked CDSs)
// ---------------------------------------------------------------------------

/// Iterate r <- F(r) from r = (1,...,1) until the fixed-point residual drops
/// to eps. Requires a system without naked CDSs, where F is pointwise
/// monotone and the sequence descends; the step count is bounded by
/// ceil(|N|/eps). The hot loop runs in doubles; the returned vector is
/// certified with exact arithmetic. `trace`, when given, receives every
/// iterate including the start vector.
inline SolveResult iterate_monotone(const FinancialSystem& sys, const Rat& eps,
                                    std::vector<std::vector<double>>* trace = nullptr) {
  if (eps <= 0) throw PreconditionError("ParameterOutOfRange", "eps must be positive");
  if (!naked_positions(sys).empty())
    throw PreconditionError("NakedCdsPresent",
                            "iterate_monotone requires a system with no naked CDS positions");

  auto fs = detail::FloatSystem::from(sys);
  const double epsd = to_double(eps);
  const std::uint64_t bound = detail::ceil_to_u64(Rat(sys.size()) / eps) + 1;

  std::vector<double> r(fs.n, 1.0), liab(fs.n), gross(fs.n), post(fs.n), next(fs.n);
  if (trace) trace->push_back(r);
  std::uint64_t steps = 0;
  while (true) {
    fs.exposure(r.data(), liab.data(), gross.data(), post.data());
    double resid = 0;
    for (std::size_t i = 0; i < fs.n; ++i) {
      double v = detail::FloatSystem::update_one(liab[i], gross[i], post[i]);
      if (v > r[i]) v = r[i];  // descent; guards against float noise
      next[i] = v;
      resid = std::max(resid, r[i] - v);
    }
    if (resid <= epsd) break;
    r = next;
    if (trace) trace->push_back(r);
    if (++steps > bound)
      throw std::logic_error("monotone iteration exceeded its step bound");
  }

  RecoveryVector exact = detail::exact_from_doubles(r);
  Rat certified = detail::certify(sys, exact, eps);
  return SolveResult{std::move(exact), steps, "iterate", certified};
}

// ---------------------------------------------------------------------------
// Decomposition along the colored dependency graph
// ---------------------------------------------------------------------------

/// Like iterate_monotone, but applicable whenever no cycle of the dependency
/// graph contains a red (naked reference->holder) edge: iterate F on each
/// strongly connected component in topological order with upstream rates
/// frozen. Each bank's F only reads same- or upstream-component rates, so the
/// final residual is bounded by the per-component stopping rule.
inline SolveResult solve_decomposed(const FinancialSystem& sys, const Rat& eps) {
  if (eps <= 0) throw PreconditionError("ParameterOutOfRange", "eps must be positive");
  auto g = colored_dependency_graph(sys);
  if (g.has_red_cycle)
    throw PreconditionError("RedCyclePresent",
                            "dependency graph has a naked-CDS edge on a cycle");

  auto fs = detail::FloatSystem::from(sys);
  const double epsd = to_double(eps);
  std::vector<double> r(fs.n, 1.0), liab(fs.n), gross(fs.n), post(fs.n);
  std::uint64_t steps = 0;

  for (const auto& comp : g.components) {
    const std::uint64_t bound = detail::ceil_to_u64(Rat(comp.size()) / eps) + 1;
    std::uint64_t comp_steps = 0;
    while (true) {
      fs.exposure(r.data(), liab.data(), gross.data(), post.data());
      double resid = 0;
      for (BankIndex i : comp) {
        double v = detail::FloatSystem::update_one(liab[i], gross[i], post[i]);
        if (v > r[i]) v = r[i];
        resid = std::max(resid, r[i] - v);
        r[i] = v;
      }
      if (resid <= epsd) break;
      ++steps;
      if (++comp_steps > bound)
        throw std::logic_error("component iteration exceeded its step bound");
    }
  }

  RecoveryVector exact = detail::exact_from_doubles(r);
  Rat certified = detail::certify(sys, exact, eps);
  return SolveResult{std::move(exact), steps, "decomposed", certified};
}

// ---------------------------------------------------------------------------
// Fictitious default (debt-only, Rogers-Veraart default costs)
// ---------------------------------------------------------------------------

/// Exact greatest clearing vector for debt-only systems: hypothesize a
/// growing default set, solve the induced linear system in exact rationals,
/// and stop once the set is stable. Terminates within |N| rounds.
inline SolveResult fictitious_default(const FinancialSystem& sys) {
  for (const auto& c : sys.contracts)
    if (c.reference)
      throw PreconditionError("CdsPresent", "fictitious_default requires a debt-only system");

  const std::size_t n = sys.size();
  std::vector<Rat> liab(n, Rat(0));
  std::vector<std::vector<Rat>> debt(n, std::vector<Rat>(n, Rat(0)));  // debt[w][h]
  for (const auto& c : sys.contracts) {
    liab[c.writer] += c.notional;
    debt[c.writer][c.holder] += c.notional;
  }

  RecoveryVector r = RecoveryVector::ones(n);
  std::vector<char> in_default(n, 0);
  std::uint64_t rounds = 0;

  while (true) {
    auto a = assets(sys, r);
    bool grew = false;
    for (std::size_t i = 0; i < n; ++i)
      if (!in_default[i] && liab[i] > 0 && a.gross[i] < liab[i]) {
        in_default[i] = 1;
        grew = true;
      }
    if (!grew) break;
    if (++rounds > n + 1) throw std::logic_error("fictitious default failed to stabilize");

    // Solve, over the hypothesized defaulting banks D:
    //   l_i r_i - beta * sum_{j in D} debt[j][i] r_j
    //     = alpha e_i + beta * sum_{j not in D} debt[j][i]
    std::vector<std::size_t> idx;  // default bank -> row/column
    std::vector<std::size_t> which(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i)
      if (in_default[i]) {
        which[i] = idx.size();
        idx.push_back(i);
      }
    const std::size_t m = idx.size();
    std::vector<std::vector<Rat>> M(m, std::vector<Rat>(m + 1, Rat(0)));
    for (std::size_t a_ = 0; a_ < m; ++a_) {
      std::size_t i = idx[a_];
      M[a_][a_] += liab[i];
      Rat rhs = sys.alpha * sys.external_assets[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (debt[j][i] == 0) continue;
        if (in_default[j])
          M[a_][which[j]] -= sys.beta * debt[j][i];
        else
          rhs += sys.beta * debt[j][i];
      }
      M[a_][m] = rhs;
    }

    // exact Gaussian elimination, first-nonzero pivoting
    for (std::size_t col = 0; col < m; ++col) {
      std::size_t piv = SIZE_MAX;
      for (std::size_t row = col; row < m; ++row)
        if (M[row][col] != 0) {
          piv = row;
          break;
        }
      if (piv == SIZE_MAX)
        throw std::logic_error("singular linear system in fictitious default round");
      std::swap(M[col], M[piv]);
      Rat p = M[col][col];
      for (std::size_t j = col; j <= m; ++j) M[col][j] /= p;
      for (std::size_t row = 0; row < m; ++row) {
        if (row == col || M[row][col] == 0) continue;
        Rat f = M[row][col];
        for (std::size_t j = col; j <= m; ++j) M[row][j] -= f * M[col][j];
      }
    }
    for (std::size_t a_ = 0; a_ < m; ++a_) {
      Rat v = M[a_][m];
      if (v < 0 || v > 1)
        throw std::logic_error("fictitious default produced a rate outside [0,1]");
      r.rates[idx[a_]] = v;
    }
  }

  if (!is_eps_solution(sys, r, Rat(0)).verdict)
    throw std::logic_error("fictitious default result is not an exact solution");
  return SolveResult{std::move(r), rounds, "fictitious", Rat(0)};
}

// ---------------------------------------------------------------------------
// Grid oracle
// ---------------------------------------------------------------------------

namespace detail {

struct GridPlan {
  std::vector<BankIndex> free;
  std::vector<Rat> base;             // pinned + auto-pinned values, exact
  std::vector<char> is_user_pinned;  // excluded from the solution check
  std::vector<char> is_fixed;        // pinned, auto-pinned, or free (set per point)
  std::vector<BankIndex> derived;    // forward order
  std::vector<Rat> values;           // grid ladder, exact
  std::vector<double> values_d;
  std::size_t total = 0;             // number of grid points
};

inline GridPlan plan_grid(const FinancialSystem& sys, const GridSpec& spec) {
  if (spec.step <= 0) throw PreconditionError("ParameterOutOfRange", "grid step must be positive");
  if (spec.free_banks.size() > spec.dimension_cap)
    throw PreconditionError("DimensionCapExceeded",
                            "grid dimensions exceed the cap; raise dimension_cap explicitly");
  const std::size_t n = sys.size();
  GridPlan plan;
  plan.free = spec.free_banks;
  plan.base.assign(n, Rat(1));
  plan.is_user_pinned.assign(n, 0);
  plan.is_fixed.assign(n, 0);

  std::vector<char> is_free(n, 0);
  for (BankIndex b : spec.free_banks) {
    if (b >= n) throw PreconditionError("UnknownBank", "free bank index out of range");
    if (is_free[b]) throw PreconditionError("ParameterOutOfRange", "duplicate free bank");
    is_free[b] = 1;
    plan.is_fixed[b] = 1;
  }
  for (const auto& [b, v] : spec.pinned) {
    if (b >= n) throw PreconditionError("UnknownBank", "pinned bank index out of range");
    if (is_free[b])
      throw PreconditionError("ParameterOutOfRange", "bank is both free and pinned");
    if (v < 0 || v > 1)
      throw PreconditionError("ParameterOutOfRange", "pinned rate outside [0,1]");
    plan.base[b] = v;
    plan.is_user_pinned[b] = 1;
    plan.is_fixed[b] = 1;
  }
  // banks that write nothing have l == 0 identically and never default
  std::vector<char> writes_any(n, 0);
  for (const auto& c : sys.contracts) writes_any[c.writer] = 1;
  for (BankIndex b = 0; b < n; ++b)
    if (!plan.is_fixed[b] && !writes_any[b]) {
      plan.base[b] = 1;
      plan.is_fixed[b] = 1;
    }

  // forward order for the rest (throws if cyclic)
  {
    RecoveryVector probe;
    probe.rates = plan.base;
    std::vector<bool> assigned(n, false);
    for (BankIndex b = 0; b < n; ++b) assigned[b] = plan.is_fixed[b] != 0;
    auto deps = dependency_sets(sys);
    std::vector<std::uint32_t> pending(n, 0);
    std::vector<std::vector<BankIndex>> dependents(n);
    std::vector<BankIndex> ready;
    std::size_t todo = 0;
    for (BankIndex i = 0; i < n; ++i) {
      if (assigned[i]) continue;
      ++todo;
      for (BankIndex d : deps[i])
        if (!assigned[d]) {
          ++pending[i];
          dependents[d].push_back(i);
        }
      if (pending[i] == 0) ready.push_back(i);
    }
    for (std::size_t head = 0; head < ready.size(); ++head) {
      BankIndex i = ready[head];
      plan.derived.push_back(i);
      for (BankIndex j : dependents[i])
        if (--pending[j] == 0) ready.push_back(j);
    }
    if (plan.derived.size() != todo)
      throw PreconditionError("NotForwardEvaluable",
                              "banks outside the grid cannot be forward-evaluated (cyclic)");
  }

  Rat v(0);
  while (v < 1) {
    plan.values.push_back(v);
    v += spec.step;
  }
  plan.values.push_back(Rat(1));
  plan.values_d.reserve(plan.values.size());
  for (const auto& x : plan.values) plan.values_d.push_back(to_double(x));

  plan.total = 1;
  for (std::size_t d = 0; d < plan.free.size(); ++d) {
    if (plan.total > (std::size_t(1) << 62) / plan.values.size())
      throw PreconditionError("DimensionCapExceeded", "grid too large to enumerate");
    plan.total *= plan.values.size();
  }
  return plan;
}

/// Float screening of one grid point. Wide slack: keeps every exact solution,
/// lets the exact pass reject the rest. Returns true if the point survives.
inline bool float_screen(const FloatSystem& fs, const GridPlan& plan,
                         const std::vector<BankIndex>& derived_order, std::vector<double>& r,
                         double eps) {
  constexpr double kSlack = 1e-9;
  bool knife = false;
  // forward-derive
  for (BankIndex i : derived_order) {
    double liab = 0, incoming = 0;
    for (const auto& c : fs.cs) {
      if (c.writer != i && c.holder != i) continue;
      double lam = c.ref < 0 ? c.notional : c.notional * (1.0 - r[c.ref]);
      if (c.writer == i) liab += lam;
      if (c.holder == i) incoming += fs.cf ? lam : r[c.writer] * lam;
    }
    double gross = fs.e[i] + incoming;
    double post = fs.alpha * fs.e[i] + fs.beta * incoming;
    if (std::abs(gross - liab) <= kSlack * (1.0 + std::abs(gross) + std::abs(liab)))
      knife = true;  // branch choice uncertain in float; let the exact pass decide
    r[i] = FloatSystem::update_one(liab, gross, post);
  }
  if (knife) return true;

  thread_local std::vector<double> liab, gross, post;
  liab.resize(fs.n);
  gross.resize(fs.n);
  post.resize(fs.n);
  fs.exposure(r.data(), liab.data(), gross.data(), post.data());
  for (std::size_t i = 0; i < fs.n; ++i) {
    if (plan.is_user_pinned[i]) continue;
    double tol = kSlack * (1.0 + std::abs(gross[i]) + std::abs(liab[i]));
    bool b1 = std::abs(r[i] - 1.0) <= eps + kSlack && gross[i] >= (1.0 - eps) * liab[i] - tol;
    bool b2 = false;
    if (liab[i] > 0) {
      b2 = gross[i] < (1.0 + eps) * liab[i] + tol &&
           std::abs(r[i] - post[i] / liab[i]) <= eps + kSlack + tol;
    }
    if (!b1 && !b2) return false;
  }
  return true;
}

}  // namespace detail

/// Exhaustively enumerate the grid {0, step, 2*step, ..., 1}^free with the
/// remaining banks pinned or forward-evaluated, and return every grid point
/// that is an eps-solution on the non-pinned banks, in lexicographic order of
/// the free-bank values. An empty result means no grid point qualified
/// (complete with respect to the grid, not [0,1]^N). Screening runs in
/// parallel in doubles; every reported point is confirmed in exact
/// arithmetic.
inline std::vector<RecoveryVector> grid_oracle(const FinancialSystem& sys, const Rat& eps,
                                               const GridSpec& spec) {
  if (eps < 0) throw PreconditionError("ParameterOutOfRange", "eps must be nonnegative");
  auto plan = detail::plan_grid(sys, spec);
  auto fs = detail::FloatSystem::from(sys);
  const double epsd = to_double(eps);
  const std::size_t k = plan.values.size();
  const std::size_t dims = plan.free.size();

  std::vector<double> base_d(plan.base.size());
  for (std::size_t i = 0; i < plan.base.size(); ++i) base_d[i] = to_double(plan.base[i]);

  // parallel float screen over chunks of the flat index space
  const unsigned nthreads =
      static_cast<unsigned>(std::min<std::size_t>(detail::solver_threads(), std::max<std::size_t>(plan.total / 1024, 1)));
  const std::size_t nchunks = nthreads;
  std::vector<std::vector<std::size_t>> candidates(nchunks);
  auto worker = [&](unsigned chunk) {
    std::size_t lo = plan.total * chunk / nchunks;
    std::size_t hi = plan.total * (chunk + 1) / nchunks;
    std::vector<double> r(fs.n);
    std::vector<std::size_t> idx(dims, 0);
    for (std::size_t flat = lo; flat < hi; ++flat) {
      std::size_t rem = flat;
      for (std::size_t d = dims; d-- > 0;) {
        idx[d] = rem % k;
        rem /= k;
      }
      r = base_d;
      for (std::size_t d = 0; d < dims; ++d) r[plan.free[d]] = plan.values_d[idx[d]];
      if (detail::float_screen(fs, plan, plan.derived, r, epsd)) candidates[chunk].push_back(flat);
    }
  };
  if (nthreads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned c = 0; c < nchunks; ++c) pool.emplace_back(worker, c);
    for (auto& t : pool) t.join();
  }

  // exact confirmation, in canonical order
  std::vector<RecoveryVector> out;
  std::vector<bool> fixed_mask(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) fixed_mask[i] = plan.is_fixed[i] != 0;
  std::vector<bool> check_mask(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) check_mask[i] = !plan.is_user_pinned[i];
  for (const auto& chunk : candidates) {
    for (std::size_t flat : chunk) {
      RecoveryVector r;
      r.rates = plan.base;
      std::size_t rem = flat;
      std::vector<std::size_t> idx(dims, 0);
      for (std::size_t d = dims; d-- > 0;) {
        idx[d] = rem % k;
        rem /= k;
      }
      for (std::size_t d = 0; d < dims; ++d) r.rates[plan.free[d]] = plan.values[idx[d]];
      std::vector<bool> assigned = fixed_mask;
      forward_fill(sys, r, assigned);
      if (is_eps_solution(sys, r, eps, &check_mask).verdict) out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace cdsclear
