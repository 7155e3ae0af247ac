#pragma once

#include "cdsclear/rational.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cdsclear {

using BankIndex = std::uint32_t;

/// Raised when an operation's documented precondition fails. `code` carries a
/// stable machine-readable tag ("NotAnEpsSolution", "NakedCdsPresent", ...).
struct PreconditionError : std::runtime_error {
  std::string code;
  PreconditionError(std::string c, const std::string& msg)
      : std::runtime_error(msg), code(std::move(c)) {}
};

/// A single contract entry. `reference` absent means plain debt; present
/// means a CDS written on that bank, whose liability is notional*(1 - r_ref).
struct Contract {
  BankIndex writer = 0;
  BankIndex holder = 0;
  std::optional<BankIndex> reference;
  Rat notional;

  friend bool operator==(const Contract&, const Contract&) = default;
};

/// A financial network: banks with external assets, a sparse contract list,
/// and the default-cost parameters. Immutable once built (by convention); all
/// operations below are pure functions of (system, rates).
///
/// counterparty_free switches asset accounting to the variant where every
/// payment is guaranteed: incoming debt pays its full notional and incoming
/// CDSs pay notional*(1 - r_ref) regardless of the writer's recovery rate.
///
/// relaxed_reference_sanity suppresses the "CDS reference entity writes no
/// debt" validation error; gadget-internal systems set this while under
/// construction.
struct FinancialSystem {
  std::vector<std::string> banks;
  std::vector<Rat> external_assets;
  std::vector<Contract> contracts;
  Rat alpha = 1;
  Rat beta = 1;
  bool counterparty_free = false;
  bool relaxed_reference_sanity = false;

  std::size_t size() const { return banks.size(); }

  std::optional<BankIndex> find(std::string_view name) const {
    for (BankIndex i = 0; i < banks.size(); ++i)
      if (banks[i] == name) return i;
    return std::nullopt;
  }

  BankIndex bank_or_throw(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw PreconditionError("UnknownBank", "unknown bank id: " + std::string(name));
  }

  BankIndex add_bank(std::string name, Rat assets = Rat(0)) {
    if (find(name)) throw PreconditionError("DuplicateBank", "duplicate bank id: " + name);
    banks.push_back(std::move(name));
    external_assets.push_back(std::move(assets));
    return static_cast<BankIndex>(banks.size() - 1);
  }

  void add_contract(BankIndex writer, BankIndex holder, std::optional<BankIndex> reference,
                    Rat notional) {
    if (notional == 0) return;  // zero-notional contracts are not stored
    contracts.push_back(Contract{writer, holder, std::move(reference), std::move(notional)});
  }

  /// Sort the contract list by (writer, holder, reference) and aggregate
  /// duplicate triples. Keeps serialization and iteration deterministic.
  void canonicalize() {
    auto key = [](const Contract& c) {
      return std::tuple<BankIndex, BankIndex, std::int64_t>(
          c.writer, c.holder, c.reference ? static_cast<std::int64_t>(*c.reference) : -1);
    };
    std::sort(contracts.begin(), contracts.end(),
              [&](const Contract& a, const Contract& b) { return key(a) < key(b); });
    std::vector<Contract> merged;
    for (auto& c : contracts) {
      if (!merged.empty() && key(merged.back()) == key(c))
        merged.back().notional += c.notional;
      else
        merged.push_back(c);
    }
    std::erase_if(merged, [](const Contract& c) { return c.notional == 0; });
    contracts = std::move(merged);
  }
};

/// Per-bank recovery rates, aligned with FinancialSystem::banks.
struct RecoveryVector {
  std::vector<Rat> rates;

  static RecoveryVector ones(std::size_t n) {
    RecoveryVector r;
    r.rates.assign(n, Rat(1));
    return r;
  }

  friend bool operator==(const RecoveryVector&, const RecoveryVector&) = default;
};

using DefaultSet = std::set<BankIndex>;

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  enum class Kind {
    self_contract,              // writer == holder
    own_reference,              // reference in {writer, holder}
    reference_writes_no_debt,   // sanity assumption 2
    non_degenerate,             // Def-3 warning: writes contracts but no debt
  };
  Kind kind;
  bool fatal;  // non-degeneracy is a warning, the rest are errors
  BankIndex bank;
  std::string message;
};

inline std::vector<Violation> validate(const FinancialSystem& sys) {
  std::vector<Violation> out;
  const std::size_t n = sys.size();
  std::vector<char> writes_debt(n, 0), writes_any(n, 0), is_reference(n, 0);
  for (const auto& c : sys.contracts) {
    writes_any[c.writer] = 1;
    if (!c.reference) writes_debt[c.writer] = 1;
    if (c.reference) is_reference[*c.reference] = 1;
    if (c.writer == c.holder)
      out.push_back({Violation::Kind::self_contract, true, c.writer,
                     "contract from " + sys.banks[c.writer] + " to itself"});
    if (c.reference && (*c.reference == c.writer || *c.reference == c.holder))
      out.push_back({Violation::Kind::own_reference, true, c.writer,
                     "contract references own " +
                         std::string(*c.reference == c.writer ? "writer " : "holder ") +
                         sys.banks[*c.reference]});
  }
  for (BankIndex i = 0; i < n; ++i) {
    if (is_reference[i] && !writes_debt[i] && !sys.relaxed_reference_sanity)
      out.push_back({Violation::Kind::reference_writes_no_debt, true, i,
                     "CDS reference entity " + sys.banks[i] + " writes no debt contract"});
    if (writes_any[i] && !writes_debt[i])
      out.push_back({Violation::Kind::non_degenerate, false, i,
                     "bank " + sys.banks[i] + " writes contracts but no debt (non-degeneracy)"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation: liabilities, assets, update function
// ---------------------------------------------------------------------------

struct Liabilities {
  std::vector<Rat> total;                               // per writer, l_i(r)
  std::map<std::pair<BankIndex, BankIndex>, Rat> pairwise;  // nonzero l_{i,j}(r)
};

namespace detail {

/// Liability of one contract at r: notional for debt, notional*(1-r_ref)
/// for a CDS.
inline Rat contract_liability(const Contract& c, const RecoveryVector& r) {
  if (!c.reference) return c.notional;
  return c.notional * (Rat(1) - r.rates[*c.reference]);
}

struct Exposure {
  std::vector<Rat> liab;   // l_i(r)
  std::vector<Rat> gross;  // a_i(r)
  std::vector<Rat> post;   // a'_i(r)
};

inline Exposure exposure(const FinancialSystem& sys, const RecoveryVector& r) {
  const std::size_t n = sys.size();
  Exposure e;
  e.liab.assign(n, Rat(0));
  std::vector<Rat> incoming(n, Rat(0));
  for (const auto& c : sys.contracts) {
    Rat lam = contract_liability(c, r);
    e.liab[c.writer] += lam;
    if (sys.counterparty_free)
      incoming[c.holder] += lam;
    else
      incoming[c.holder] += r.rates[c.writer] * lam;
  }
  e.gross.resize(n);
  e.post.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.gross[i] = sys.external_assets[i] + incoming[i];
    e.post[i] = sys.alpha * sys.external_assets[i] + sys.beta * incoming[i];
  }
  return e;
}

/// F for one bank given exposure numbers. Banks with l_i(r)=0 never default.
inline Rat update_one(const Rat& liab, const Rat& gross, const Rat& post) {
  if (liab == 0 || gross >= liab) return Rat(1);
  return post / liab;
}

}  // namespace detail

inline Liabilities liabilities(const FinancialSystem& sys, const RecoveryVector& r) {
  Liabilities out;
  out.total.assign(sys.size(), Rat(0));
  for (const auto& c : sys.contracts) {
    Rat lam = detail::contract_liability(c, r);
    out.total[c.writer] += lam;
    if (lam != 0) out.pairwise[{c.writer, c.holder}] += lam;
  }
  return out;
}

struct Assets {
  std::vector<Rat> gross;  // a_i(r)
  std::vector<Rat> post;   // a'_i(r)
};

inline Assets assets(const FinancialSystem& sys, const RecoveryVector& r) {
  auto e = detail::exposure(sys, r);
  return Assets{std::move(e.gross), std::move(e.post)};
}

/// Actual payments p_{i,j}(r) = r_i * l_{i,j}(r) (full notional in
/// counterparty-free mode). Nonzero entries only.
inline std::map<std::pair<BankIndex, BankIndex>, Rat> payments(const FinancialSystem& sys,
                                                               const RecoveryVector& r) {
  std::map<std::pair<BankIndex, BankIndex>, Rat> out;
  for (const auto& c : sys.contracts) {
    Rat lam = detail::contract_liability(c, r);
    Rat pay = sys.counterparty_free ? lam : Rat(r.rates[c.writer] * lam);
    if (pay != 0) out[{c.writer, c.holder}] += pay;
  }
  return out;
}

inline RecoveryVector update_F(const FinancialSystem& sys, const RecoveryVector& r) {
  auto e = detail::exposure(sys, r);
  RecoveryVector out;
  out.rates.resize(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i)
    out.rates[i] = detail::update_one(e.liab[i], e.gross[i], e.post[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Approximate solutions (two-branch condition)
// ---------------------------------------------------------------------------

enum class EpsBranch { neither, non_default, in_default, both };

struct BankEps {
  Rat assets;
  Rat assets_post;
  Rat liabilities;
  EpsBranch branch = EpsBranch::neither;
  Rat residual;  // min |r_i - target| over branches whose asset side holds
};

struct EpsReport {
  bool verdict = false;
  std::vector<BankEps> banks;
};

/// Check the two-branch approximate clearing condition at every bank:
///   branch 1:  r_i = 1 +- eps          and  a_i >= (1-eps) l_i
///   branch 2:  r_i = a'_i/l_i +- eps   and  a_i <  (1+eps) l_i
/// Banks with l_i(r) = 0 can only satisfy branch 1 (they never default).
/// `check_mask`, when given, restricts the verdict to the marked banks
/// (a "solution on N0" in the extension sense); per-bank records are still
/// produced for every bank.
inline EpsReport is_eps_solution(const FinancialSystem& sys, const RecoveryVector& r,
                                 const Rat& eps, const std::vector<bool>* check_mask = nullptr) {
  if (r.rates.size() != sys.size())
    throw PreconditionError("RateVectorSizeMismatch", "recovery vector does not cover the system");
  auto e = detail::exposure(sys, r);
  EpsReport rep;
  rep.verdict = true;
  rep.banks.resize(sys.size());
  for (std::size_t i = 0; i < sys.size(); ++i) {
    BankEps& b = rep.banks[i];
    b.assets = e.gross[i];
    b.assets_post = e.post[i];
    b.liabilities = e.liab[i];

    const Rat err1 = rat_abs(r.rates[i] - 1);
    const bool asset1 = e.gross[i] >= (Rat(1) - eps) * e.liab[i];
    const bool branch1 = asset1 && err1 <= eps;

    bool asset2 = false;
    bool branch2 = false;
    Rat err2;
    if (e.liab[i] > 0) {
      asset2 = e.gross[i] < (Rat(1) + eps) * e.liab[i];
      err2 = rat_abs(r.rates[i] - e.post[i] / e.liab[i]);
      branch2 = asset2 && err2 <= eps;
    }

    if (branch1 && branch2)
      b.branch = EpsBranch::both;
    else if (branch1)
      b.branch = EpsBranch::non_default;
    else if (branch2)
      b.branch = EpsBranch::in_default;
    else
      b.branch = EpsBranch::neither;

    if (asset1 && asset2)
      b.residual = std::min(err1, err2);
    else if (asset1)
      b.residual = err1;
    else
      b.residual = err2;  // asset2 holds whenever asset1 fails

    if (b.branch == EpsBranch::neither && (!check_mask || (*check_mask)[i]))
      rep.verdict = false;
  }
  return rep;
}

/// Round each component to the nearest multiple of delta (half away from
/// zero), then clamp into [0,1].
inline RecoveryVector round_solution(const FinancialSystem& sys, const RecoveryVector& r,
                                     const Rat& delta) {
  if (delta <= 0) throw PreconditionError("ParameterOutOfRange", "delta must be positive");
  RecoveryVector out;
  out.rates.reserve(sys.size());
  for (const Rat& x : r.rates) {
    Rat q = x / delta;
    BigInt k = static_cast<BigInt>(numerator(q) / denominator(q));  // truncation toward zero
    Rat frac = q - Rat(k);
    if (frac >= Rat(1, 2)) k += 1;  // x >= 0 always; half rounds away from zero
    Rat v = Rat(k) * delta;
    if (v < 0) v = 0;
    if (v > 1) v = 1;
    out.rates.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Default sets
// ---------------------------------------------------------------------------

/// Def-6 check: i not in D implies a_i >= (1-eps) l_i, i in D implies
/// a_i < (1+eps) l_i. Requires r to be an eps-solution.
inline bool is_eps_default_set(const FinancialSystem& sys, const RecoveryVector& r,
                               const DefaultSet& D, const Rat& eps) {
  auto rep = is_eps_solution(sys, r, eps);
  if (!rep.verdict)
    throw PreconditionError("NotAnEpsSolution", "rates are not an eps-solution of the system");
  for (BankIndex i = 0; i < sys.size(); ++i) {
    const auto& b = rep.banks[i];
    if (D.contains(i)) {
      if (!(b.assets < (Rat(1) + eps) * b.liabilities)) return false;
    } else {
      if (!(b.assets >= (Rat(1) - eps) * b.liabilities)) return false;
    }
  }
  return true;
}

/// The maximal eps-compatible default set: { i : a_i(r) < (1+eps) l_i(r) }.
inline DefaultSet default_set_of(const FinancialSystem& sys, const RecoveryVector& r,
                                 const Rat& eps) {
  auto rep = is_eps_solution(sys, r, eps);
  if (!rep.verdict)
    throw PreconditionError("NotAnEpsSolution", "rates are not an eps-solution of the system");
  DefaultSet D;
  for (BankIndex i = 0; i < sys.size(); ++i)
    if (rep.banks[i].assets < (Rat(1) + eps) * rep.banks[i].liabilities) D.insert(i);
  return D;
}

// ---------------------------------------------------------------------------
// Naked CDS analysis and the colored dependency graph
// ---------------------------------------------------------------------------

struct NakedPosition {
  BankIndex holder;
  BankIndex reference;
  Rat excess;  // sum of CDS notionals held on reference minus debt held from it
};

/// Positions where a holder's total CDS notional on a reference entity
/// exceeds the debt it holds from that entity. Empty result means the system
/// has no naked CDSs.
inline std::vector<NakedPosition> naked_positions(const FinancialSystem& sys) {
  std::map<std::pair<BankIndex, BankIndex>, Rat> cds_held;   // (holder, ref) -> total
  std::map<std::pair<BankIndex, BankIndex>, Rat> debt_held;  // (holder, writer) -> total
  for (const auto& c : sys.contracts) {
    if (c.reference)
      cds_held[{c.holder, *c.reference}] += c.notional;
    else
      debt_held[{c.holder, c.writer}] += c.notional;
  }
  std::vector<NakedPosition> out;
  for (const auto& [key, total] : cds_held) {
    Rat covered = 0;
    if (auto it = debt_held.find(key); it != debt_held.end()) covered = it->second;
    if (total > covered) out.push_back({key.first, key.second, total - covered});
  }
  return out;
}

struct DependencyGraph {
  struct Edge {
    BankIndex from, to;
    bool red;
  };
  std::vector<Edge> edges;  // deduplicated, sorted by (from, to); red wins on merge
  bool has_red_cycle = false;
  std::vector<std::uint32_t> component;              // bank -> SCC id
  std::vector<std::vector<BankIndex>> components;    // SCCs in topological order
};

namespace detail {

/// Iterative Tarjan SCC. Returns (component id per node, component count);
/// ids are assigned in reverse topological order of the condensation.
inline std::pair<std::vector<std::uint32_t>, std::uint32_t> tarjan_scc(
    std::size_t n, const std::vector<std::vector<BankIndex>>& adj) {
  constexpr std::uint32_t kUnset = 0xffffffffu;
  std::vector<std::uint32_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<char> on_stack(n, 0);
  std::vector<BankIndex> stack;
  std::uint32_t next_index = 0, comp_count = 0;

  struct Frame {
    BankIndex v;
    std::size_t child;
  };
  std::vector<Frame> call;
  for (BankIndex root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      auto& fr = call.back();
      BankIndex v = fr.v;
      if (fr.child == 0) {
        index[v] = low[v] = next_index++;
        stack.push_back(v);
        on_stack[v] = 1;
      }
      bool descended = false;
      while (fr.child < adj[v].size()) {
        BankIndex w = adj[v][fr.child++];
        if (index[w] == kUnset) {
          call.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      if (low[v] == index[v]) {
        while (true) {
          BankIndex w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = comp_count;
          if (w == v) break;
        }
        ++comp_count;
      }
      call.pop_back();
      if (!call.empty()) {
        BankIndex parent = call.back().v;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }
  return {std::move(comp), comp_count};
}

}  // namespace detail

/// Dependency edges i->j where F_j can depend on r_i: writer->holder for
/// every contract, reference->holder and reference->writer for every CDS.
/// The reference->holder edge is red iff the holder's position toward the
/// reference is naked. has_red_cycle is true iff a red edge lies inside a
/// strongly connected component.
inline DependencyGraph colored_dependency_graph(const FinancialSystem& sys) {
  const std::size_t n = sys.size();
  std::set<std::pair<BankIndex, BankIndex>> naked;
  for (const auto& p : naked_positions(sys)) naked.insert({p.holder, p.reference});

  std::map<std::pair<BankIndex, BankIndex>, bool> edge_red;  // (from,to) -> red
  auto add_edge = [&](BankIndex from, BankIndex to, bool red) {
    if (from == to) return;
    edge_red[{from, to}] = edge_red[{from, to}] || red;
  };
  for (const auto& c : sys.contracts) {
    add_edge(c.writer, c.holder, false);
    if (c.reference) {
      add_edge(*c.reference, c.holder, naked.contains({c.holder, *c.reference}));
      add_edge(*c.reference, c.writer, false);
    }
  }

  DependencyGraph g;
  std::vector<std::vector<BankIndex>> adj(n);
  for (const auto& [e, red] : edge_red) {
    g.edges.push_back({e.first, e.second, red});
    adj[e.first].push_back(e.second);
  }

  auto [comp, comp_count] = detail::tarjan_scc(n, adj);
  // Tarjan emits components in reverse topological order; flip the ids.
  g.component.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.component[i] = comp_count - 1 - comp[i];
  g.components.assign(comp_count, {});
  for (BankIndex i = 0; i < n; ++i) g.components[g.component[i]].push_back(i);

  for (const auto& e : g.edges)
    if (e.red && g.component[e.from] == g.component[e.to]) {
      g.has_red_cycle = true;
      break;
    }
  return g;
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

namespace detail {

/// Banks whose rate F_i reads: incoming writers, incoming references, and
/// references of own written CDSs.
inline std::vector<std::set<BankIndex>> dependency_sets(const FinancialSystem& sys) {
  std::vector<std::set<BankIndex>> deps(sys.size());
  for (const auto& c : sys.contracts) {
    if (!sys.counterparty_free) deps[c.holder].insert(c.writer);
    if (c.reference) {
      deps[c.holder].insert(*c.reference);
      deps[c.writer].insert(*c.reference);
    }
  }
  for (BankIndex i = 0; i < sys.size(); ++i) deps[i].erase(i);
  return deps;
}

/// Exact F_i evaluated against the current rates. O(|contracts|).
inline Rat eval_F_bank(const FinancialSystem& sys, const RecoveryVector& r, BankIndex i) {
  Rat liab = 0, incoming = 0;
  for (const auto& c : sys.contracts) {
    if (c.writer != i && c.holder != i) continue;
    Rat lam = contract_liability(c, r);
    if (c.writer == i) liab += lam;
    if (c.holder == i) incoming += sys.counterparty_free ? lam : Rat(r.rates[c.writer] * lam);
  }
  Rat gross = sys.external_assets[i] + incoming;
  Rat post = sys.alpha * sys.external_assets[i] + sys.beta * incoming;
  return update_one(liab, gross, post);
}

}  // namespace detail

/// Fill every unassigned bank with its exact F value, processing banks in
/// dependency order. Throws NotForwardEvaluable if the unassigned banks
/// depend on each other cyclically.
inline void forward_fill(const FinancialSystem& sys, RecoveryVector& r,
                         std::vector<bool>& assigned) {
  auto deps = detail::dependency_sets(sys);
  const std::size_t n = sys.size();
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
  std::size_t done = 0;
  for (std::size_t head = 0; head < ready.size(); ++head) {
    BankIndex i = ready[head];
    r.rates[i] = detail::eval_F_bank(sys, r, i);
    assigned[i] = true;
    ++done;
    for (BankIndex j : dependents[i])
      if (--pending[j] == 0) ready.push_back(j);
  }
  if (done != todo)
    throw PreconditionError("NotForwardEvaluable",
                            "cyclic dependency among banks requiring forward evaluation");
}

}  // namespace cdsclear
